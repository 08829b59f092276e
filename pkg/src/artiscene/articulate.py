"""Joint models: validation against detector hints, OBB-based refinement, kinematics.

A joint is (type, origin, axis, range): prismatic parts translate along the
axis (origin is informational), revolute parts rotate about the axis line
through the origin. Refinement snaps a noisy initial joint onto the part's
oriented bounding box: prismatic axes become the front-face normal, revolute
axes the closest in-plane box edge direction with the origin moved onto the
mid-surface next to the nearer front-face edge.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .geom import Obb, fit_obb, line_segment_distance, unit

log = logging.getLogger(__name__)

PRISMATIC = "prismatic"
REVOLUTE = "revolute"

DEFAULT_PRISMATIC_RANGE = 0.5       # meters
DEFAULT_REVOLUTE_RANGE = np.pi / 2  # radians


@dataclass(frozen=True)
class Articulation:
    joint_type: str
    origin: np.ndarray
    axis: np.ndarray
    range: float

    def __post_init__(self):
        if self.joint_type not in (PRISMATIC, REVOLUTE):
            raise ValueError(f"unknown joint type {self.joint_type!r}")
        object.__setattr__(self, "origin", np.asarray(self.origin, float).reshape(3))
        object.__setattr__(self, "axis", unit(self.axis))
        if self.range <= 0:
            raise ValueError("articulation range must be > 0")


def _signed(x: float) -> float:
    """Sign with ties broken toward +1 (warning on exact zero)."""
    if x == 0.0:
        warnings.warn("axis exactly orthogonal to snap target; keeping +direction")
        return 1.0
    return 1.0 if x > 0 else -1.0


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    a = unit(axis)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def apply_articulation(point, art: Articulation, state: float) -> np.ndarray:
    """Move a point by the joint at the given state (clamped to [0, range])."""
    p = np.asarray(point, float)
    s = _clamp_state(state, art)
    if s == 0.0:
        return p.copy()  # exact identity at the closed state
    if art.joint_type == PRISMATIC:
        return p + s * art.axis
    rot = rotation_about_axis(art.axis, s)
    return (p - art.origin) @ rot.T + art.origin


def transform_part(mesh, art: Articulation, state: float):
    """apply_articulation vertex-wise; connectivity and colors unchanged."""
    from .geom import TriMesh

    s = _clamp_state(state, art)
    if s == 0.0:
        verts = mesh.vertices.copy()
    elif art.joint_type == PRISMATIC:
        verts = mesh.vertices + s * art.axis
    else:
        rot = rotation_about_axis(art.axis, s)
        verts = (mesh.vertices - art.origin) @ rot.T + art.origin
    return TriMesh(verts, mesh.faces.copy(),
                   None if mesh.colors is None else mesh.colors.copy())


def articulation_matrix(art: Articulation, state: float) -> np.ndarray:
    """4x4 rigid transform of the joint at the given state."""
    s = _clamp_state(state, art)
    m = np.eye(4)
    if art.joint_type == PRISMATIC:
        m[:3, 3] = s * art.axis
    else:
        rot = rotation_about_axis(art.axis, s)
        m[:3, :3] = rot
        m[:3, 3] = art.origin - rot @ art.origin
    return m


def _clamp_state(state: float, art: Articulation) -> float:
    if state < 0.0 or state > art.range:
        warnings.warn(f"articulation state {state} outside [0, {art.range}]; clamped")
        return min(max(state, 0.0), art.range)
    return float(state)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Pixel IoU of two binary masks of equal shape."""
    a = np.asarray(a, bool)
    b = np.asarray(b, bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def hint_to_world(hint, pose) -> Articulation:
    """Camera-frame joint hint to a world-frame articulation.

    The axis is rotated only; the origin is rigidly transformed.
    """
    axis_world = pose.rotation @ unit(hint.axis_cam)
    origin_world = pose.apply(hint.origin_cam)
    rng = hint.range
    if rng is None or rng <= 0:
        rng = DEFAULT_PRISMATIC_RANGE if hint.joint_type == PRISMATIC else DEFAULT_REVOLUTE_RANGE
    return Articulation(hint.joint_type, origin_world, axis_world, float(rng))


def filter_candidate(candidate, detections, poses, iou_threshold: float = 0.5):
    """Validate a part candidate against opd-source masks; None discards it.

    For each of the candidate's supporting views, the grounding mask is
    compared (pixel IoU) with every opd mask in the same frame. If any pair
    reaches the threshold, the joint hint of the best-IoU opd record is
    returned as a world-frame Articulation (via the frame's camera-to-world
    pose in `poses`); otherwise None.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValueError("iou_threshold must be in (0, 1]")
    best_iou = 0.0
    best = None
    for view in candidate.supporting_views:
        grounding = detections[view.detection_index]
        for rec in detections:
            if rec.source != "opd" or rec.frame_id != view.frame_id:
                continue
            if rec.joint_hint is None:
                continue
            if float(np.linalg.norm(rec.joint_hint.axis_cam)) < 1e-12:
                log.warning("opd record in frame %s has zero-norm axis; skipped",
                            rec.frame_id)
                continue
            iou = mask_iou(grounding.mask, rec.mask)
            if iou > best_iou:
                best_iou = iou
                best = rec
    if best is None or best_iou < iou_threshold:
        return None
    return hint_to_world(best.joint_hint, poses[best.frame_id])


@dataclass
class ValidatedPart:
    """Part candidate with a refined articulation and its bounding box."""

    candidate: "PartCandidate"  # noqa: F821  (parts module)
    articulation: Articulation
    obb: Obb
    front_normal: np.ndarray

    @property
    def instance_id(self) -> str:
        return self.candidate.instance_id

    def front_center(self) -> np.ndarray:
        return self.obb.center - (self.obb.extents[2] / 2.0) * self.front_normal


def refine_articulation(part, initial: Articulation) -> ValidatedPart:
    """Snap an initial joint estimate to the part's OBB geometry.

    The OBB front face is the face spanned by the two longest axes; its
    normal (u1 x u2) is sign-disambiguated to agree with the part's inward
    clip-plane normal, pointing into the furniture body.
    """
    obb = fit_obb(part.part_mesh.vertices)
    n_front = np.cross(obb.u1, obb.u2)
    n_front /= np.linalg.norm(n_front)
    n_front = _signed(float(n_front @ part.front_plane.normal)) * n_front

    if initial.joint_type == PRISMATIC:
        axis = _signed(float(initial.axis @ n_front)) * n_front
        refined = Articulation(PRISMATIC, initial.origin.copy(), axis, initial.range)
        return ValidatedPart(part, refined, obb, n_front)

    # revolute: in-plane principal direction most consistent with the axis
    d1 = abs(float(initial.axis @ obb.u1))
    d2 = abs(float(initial.axis @ obb.u2))
    ls = obb.u1 if d1 >= d2 else obb.u2
    along = obb.extents[0] if d1 >= d2 else obb.extents[1]
    across_axis = obb.u2 if d1 >= d2 else obb.u1
    across = obb.extents[1] if d1 >= d2 else obb.extents[0]
    axis = _signed(float(initial.axis @ ls)) * ls

    front_center = obb.center - (obb.extents[2] / 2.0) * n_front
    edges = []
    for side in (-1.0, 1.0):
        mid = front_center + side * (across / 2.0) * across_axis
        p0 = mid - (along / 2.0) * ls
        p1 = mid + (along / 2.0) * ls
        edges.append((line_segment_distance(initial.origin, initial.axis, p0, p1), mid))
    _, closer_mid = min(edges, key=lambda e: e[0])
    origin = closer_mid + (obb.extents[2] / 2.0) * n_front  # onto the mid-surface
    refined = Articulation(REVOLUTE, origin, axis, initial.range)
    return ValidatedPart(part, refined, obb, n_front)
