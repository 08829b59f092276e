"""Hidden-interior completion: a box-shaped shell behind each movable part.

The cavity opens at the part's OBB front face and extends along the inward
front normal by the most conservative of three depth cues: the farthest
background depth seen around the part's mask, a probe ray into the scene
(accepted only if a supporting plane fits at the hit), and the scene bounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .articulate import ValidatedPart
from .geom import NoPlaneFoundError, Obb, TriMesh, raycast, ransac_plane
from .ingest import CalibratedFrame

log = logging.getLogger(__name__)


@dataclass
class CavityConfig:
    d_min: float = 0.05
    max_depth: float | None = None
    wall_margin: float = 0.005
    ring_dilation_px: int = 10
    r_fit: float = 0.15
    min_inlier_frac: float = 0.5
    plane_thickness: float = 0.02
    ransac_iters: int = 128
    seed: int = 0
    interior_color: tuple[float, float, float] = (0.5, 0.5, 0.5)


@dataclass
class InnerBox:
    mesh: TriMesh
    depth: float
    depth_source: str  # "image" | "hit" | "mesh"
    opening_corners: np.ndarray  # (4, 3) corners of the part OBB front face


def depth_image_bound(part: ValidatedPart, frame: CalibratedFrame,
                      mask: np.ndarray, cfg: CavityConfig = CavityConfig()) -> float | None:
    """Farthest background depth around the mask, projected onto the front normal.

    Background ring = the mask's bounding box expanded by
    cfg.ring_dilation_px, minus the (guard-dilated) mask itself. Returns the
    maximum positive projection (x - front_center) . n_front, or None when
    no valid background pixel sees past the part.
    """
    mask = np.asarray(mask, bool)
    if not mask.any():
        return None
    h, w = mask.shape
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    grow = cfg.ring_dilation_px
    bbox = np.zeros_like(mask)
    bbox[max(rows[0] - grow, 0):min(rows[-1] + 1 + grow, h),
         max(cols[0] - grow, 0):min(cols[-1] + 1 + grow, w)] = True
    dilated = ndimage.binary_dilation(mask, iterations=2)  # guard band
    ring = bbox & ~dilated
    ring &= frame.depth > 0
    if not ring.any():
        return None
    vs, us = np.nonzero(ring)
    pts = frame.backproject_pixels(us + 0.5, vs + 0.5, frame.depth[vs, us])
    proj = (pts - part.front_center()) @ part.front_normal
    positive = proj[proj > 0]
    if positive.size == 0:
        return None
    return float(positive.max())


def depth_hit_bound(part: ValidatedPart, scene_without_part: TriMesh,
                    cfg: CavityConfig = CavityConfig()) -> float | None:
    """Probe from the OBB centroid along the inward normal.

    The hit counts only when a plane fits the nearby scene vertices (at
    least cfg.min_inlier_frac RANSAC inliers within cfg.r_fit of the hit).
    Returns the hit distance minus half the part thickness, or None.
    """
    hit = raycast(scene_without_part, part.obb.center, part.front_normal)
    if hit is None:
        return None
    dist, _ = hit
    point = part.obb.center + dist * part.front_normal
    near = np.linalg.norm(scene_without_part.vertices - point, axis=1) <= cfg.r_fit
    pts = scene_without_part.vertices[near]
    if len(pts) < 3:
        return None
    try:
        _, inliers = ransac_plane(pts, cfg.plane_thickness, iters=cfg.ransac_iters,
                                  seed=cfg.seed)
    except NoPlaneFoundError:
        return None
    if len(inliers) / len(pts) < cfg.min_inlier_frac:
        return None
    return float(dist - part.obb.extents[2] / 2.0)


def depth_mesh_bound(part: ValidatedPart, scene_bounds: Obb) -> float:
    """Distance from the front-face center to where the ray exits the scene bounds."""
    origin = part.front_center()
    local_o = scene_bounds.to_local(origin)
    local_d = scene_bounds.axes @ part.front_normal
    half = scene_bounds.extents / 2.0
    if (np.abs(local_o) > half + 1e-9).any():
        log.warning("front center outside scene bounds; using 0.01 m floor")
        return 0.01
    t_exit = np.inf
    for k in range(3):
        if abs(local_d[k]) < 1e-12:
            continue
        t1 = (half[k] - local_o[k]) / local_d[k]
        t2 = (-half[k] - local_o[k]) / local_d[k]
        t_exit = min(t_exit, max(t1, t2))
    if not np.isfinite(t_exit) or t_exit <= 0:
        log.warning("degenerate scene-bounds exit; using 0.01 m floor")
        return 0.01
    return float(t_exit)


def build_inner_box(part: ValidatedPart,
                    bounds: tuple[float | None, float | None, float],
                    cfg: CavityConfig = CavityConfig()) -> InnerBox:
    """Assemble the open-front shell at depth min(bounds), clamped to >= d_min.

    The nominal opening coincides with the part's OBB front face. So the
    articulated part clears the shell, the walls are inset by
    cfg.wall_margin from the front rectangle and start one part-thickness
    (plus margin) behind the front face: the closed part occupies the OBB
    mouth, and a revolute leaf hinged on the mid-surface dips at most half
    a thickness behind the front plane while swinging.
    """
    d_image, d_hit, d_mesh = bounds
    depth = d_mesh
    source = "mesh"
    if d_hit is not None and d_hit < depth:
        depth, source = d_hit, "hit"
    if d_image is not None and d_image < depth:
        depth, source = d_image, "image"
    if cfg.max_depth is not None and depth > cfg.max_depth:
        depth = cfg.max_depth
    depth = max(depth, cfg.d_min)

    box = part.obb
    n = part.front_normal
    c_front = part.front_center()
    u1, u2 = box.u1, box.u2
    h1 = max(box.extents[0] / 2.0 - cfg.wall_margin, 1e-4)
    h2 = max(box.extents[1] / 2.0 - cfg.wall_margin, 1e-4)
    setback = min(box.extents[2] + cfg.wall_margin, 0.5 * depth)

    verts = []
    faces = []

    def add_quad(p00, p01, p11, p10):
        i = len(verts)
        verts.extend([p00, p01, p11, p10])
        faces.append((i, i + 1, i + 2))
        faces.append((i, i + 2, i + 3))

    rim = [c_front + setback * n + a * h1 * u1 + b * h2 * u2
           for a, b in ((-1, -1), (-1, 1), (1, 1), (1, -1))]
    back = [p + (depth - setback) * n for p in rim]
    add_quad(back[0], back[1], back[2], back[3])           # back wall
    add_quad(rim[0], rim[1], back[1], back[0])             # u1- side
    add_quad(rim[2], rim[3], back[3], back[2])             # u1+ side
    add_quad(rim[1], rim[2], back[2], back[1])             # u2+ side
    add_quad(rim[3], rim[0], back[0], back[3])             # u2- side

    mesh = TriMesh(np.array(verts), np.array(faces),
                   np.tile(np.asarray(cfg.interior_color, float), (len(verts), 1)))
    opening = np.array([c_front + a * (box.extents[0] / 2.0) * u1
                        + b * (box.extents[1] / 2.0) * u2
                        for a, b in ((-1, -1), (-1, 1), (1, 1), (1, -1))])
    return InnerBox(mesh, depth, source, opening)


def complete_part(part: ValidatedPart, scene: TriMesh, frames: list[CalibratedFrame],
                  detections, scene_bounds: Obb,
                  cfg: CavityConfig = CavityConfig()) -> InnerBox:
    """Compute all three depth cues for a part and build its inner box."""
    best = part.candidate.supporting_views[0]
    frame = next(f for f in frames if f.frame_id == best.frame_id)
    mask = detections[best.detection_index].mask
    d_image = depth_image_bound(part, frame, mask, cfg)

    drop = np.zeros(scene.n_vertices, bool)
    drop[part.candidate.provenance_vertices] = True
    reduced = scene.drop_vertices(drop)  # part faces and vertices both excluded
    d_hit = depth_hit_bound(part, reduced, cfg)

    d_mesh = depth_mesh_bound(part, scene_bounds)
    return build_inner_box(part, (d_image, d_hit, d_mesh), cfg)
