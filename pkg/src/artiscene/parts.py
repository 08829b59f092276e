"""Turn fused 3D instances into clean movable-part meshes.

Segmentation tends to grab whole objects (the cabinet, not just the door),
so each instance is reduced to its dominant approximately-vertical
finite-thickness plane: candidate planes come from iterative RANSAC, the
one with the largest contour area wins, and everything behind it (along
the inward normal) is clipped away. Keeping the unbounded front side is
what preserves protruding handles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geom import NoPlaneFoundError, Plane, TriMesh, ransac_plane
from .lift import FusedInstance, SupportView

log = logging.getLogger(__name__)


@dataclass
class PartCandidate:
    instance_id: str
    part_mesh: TriMesh                  # world frame, compacted
    front_plane: Plane                  # normal oriented inward (into the body)
    supporting_views: list[SupportView]
    provenance_faces: np.ndarray        # scene-mesh face indices kept in part_mesh
    provenance_vertices: np.ndarray     # scene-mesh vertex indices of those faces


@dataclass
class ExtractConfig:
    plane_thickness: float = 0.03
    vertical_tol_deg: float = 20.0
    ransac_iters: int = 256
    seed: int = 0
    n_planes: int = 3
    min_part_faces: int = 20


def _refit_plane(points: np.ndarray, plane: Plane) -> Plane:
    """Trimmed least-squares refinement of a RANSAC slab plane.

    Two passes with a shrinking inlier band pull the plane onto the dominant
    surface, so the clip boundary is not skewed by slab-edge stragglers.
    """
    n = plane.normal
    off = plane.offset
    for band in (plane.thickness / 2.0, plane.thickness / 4.0):
        d = points @ n - off
        sel = np.abs(d) <= band
        if int(sel.sum()) < 3:
            break
        p = points[sel]
        c = p.mean(axis=0)
        _, _, vt = np.linalg.svd(p - c, full_matrices=False)
        new_n = vt[2]
        if float(new_n @ n) < 0:
            new_n = -new_n
        n = new_n
        off = float(n @ c)
    return Plane(n, off, plane.thickness)


def _contour_area(points: np.ndarray, plane: Plane) -> float:
    """Convex-hull area of the points projected onto the plane."""
    from scipy.spatial import ConvexHull, QhullError

    n = plane.normal
    e1 = np.cross(n, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 1e-6:
        e1 = np.cross(n, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    p2 = points @ np.vstack([e1, e2]).T
    if len(p2) < 3:
        return 0.0
    try:
        return float(ConvexHull(p2).volume)  # 2D hull "volume" is the area
    except QhullError:
        return 0.0


def extract_part(instance: FusedInstance, mesh: TriMesh, frames,
                 cfg: ExtractConfig = ExtractConfig(),
                 reject_log: list | None = None) -> PartCandidate | None:
    """Extract the movable-part mesh for one fused instance, or None.

    Rejects instances with no approximately-vertical plane or with fewer
    than cfg.min_part_faces faces after clipping; rejections are appended
    to reject_log when given.
    """

    def reject(reason: str):
        log.info("instance %s: %s, rejected", instance.instance_id, reason)
        if reject_log is not None:
            reject_log.append({"instance_id": instance.instance_id,
                               "reason": reason})
        return None

    if not instance.supporting_views:
        return reject("no supporting views")
    sub, orig_vertices = mesh.submesh(instance.faces)
    verts = sub.vertices

    candidates: list[tuple[Plane, np.ndarray]] = []
    remaining = np.arange(len(verts))
    for round_i in range(cfg.n_planes):
        if len(remaining) < 3:
            break
        try:
            plane, inl = ransac_plane(verts[remaining], cfg.plane_thickness,
                                      iters=cfg.ransac_iters, seed=cfg.seed + round_i,
                                      vertical_tol_deg=cfg.vertical_tol_deg)
        except NoPlaneFoundError:
            break
        candidates.append((plane, remaining[inl]))
        remaining = np.delete(remaining, inl)
    if not candidates:
        return reject("no approximately vertical plane found")

    plane, inliers = max(candidates, key=lambda c: _contour_area(verts[c[1]], c[0]))
    plane = _refit_plane(verts, plane)

    # orient the normal inward: agree with the best view's forward direction
    frame_by_id = {f.frame_id: f for f in frames}
    best_view = instance.supporting_views[0]
    view_dir = frame_by_id[best_view.frame_id].view_direction()
    if float(plane.normal @ view_dir) < 0:
        plane = plane.flipped()

    # clip: drop geometry behind the plane, keep the unbounded front side
    signed = plane.signed_distance(verts)
    drop = signed > cfg.plane_thickness / 2.0
    clipped = sub.drop_vertices(drop)
    if clipped.n_faces < cfg.min_part_faces:
        return reject(f"only {clipped.n_faces} faces after clipping")

    keep_face_mask = ~drop[sub.faces].any(axis=1)
    prov_faces = np.asarray(instance.faces, np.int64)[keep_face_mask]
    prov_vertices = np.unique(orig_vertices[sub.faces[keep_face_mask]])
    return PartCandidate(instance.instance_id, clipped, plane,
                         list(instance.supporting_views), prov_faces, prov_vertices)
