"""Procedural desk-scale indoor scenes with known parts, joints, and cameras.

Scenes mimic RGB-D scans: only exterior/visible surfaces are emitted
(no furniture interiors), so the cavity stage has real work to do. The
generator also emits pixel-perfect part masks, detector-style joint hints
with configurable noise, and exact ground-truth part records, which makes
it the verification oracle for the whole pipeline.

Unit local frame: front plane at y = 0 facing -y, body extends into +y,
width along x, height along z. Units are placed by (x, y) position + yaw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .articulate import Articulation
from .geom import Intrinsics, Se3Pose, TriMesh
from .ingest import CalibratedFrame, DetectionRecord, GroundTruthPart, JointHint
from .lift import rasterize_view

DRAWER_STACK = "drawer-stack"
HINGED_CABINET = "hinged-cabinet"
DOOR = "door"

PLATE_T = 0.02      # movable plate thickness
HANDLE_D = 0.018    # handle protrusion
GAP = 0.006         # gap between neighboring fronts


class SpecError(ValueError):
    """Invalid synthetic scene specification."""


@dataclass
class FurnitureSpec:
    kind: str
    position: tuple[float, float]   # unit origin (front-center) on the floor
    yaw_deg: float = 0.0
    width: float = 0.8
    height: float = 0.9
    depth: float = 0.5              # interior depth (carcass)
    n_parts: int = 2                # drawers or doors
    elevation: float = 0.1          # bottom of the openable region above floor
    with_handles: bool = True


@dataclass
class CameraSpec:
    per_unit: int = 3
    distance: float = 1.6
    height: float = 1.2
    width: int = 320
    height_px: int = 240
    focal: float = 240.0


@dataclass
class NoiseSpec:
    sigma_axis_deg: float = 0.0
    sigma_origin_m: float = 0.0
    type_flip_prob: float = 0.0


@dataclass
class SyntheticSceneSpec:
    room: tuple[float, float, float] = (4.0, 5.0, 2.5)
    units: list[FurnitureSpec] = field(default_factory=list)
    cameras: CameraSpec = field(default_factory=CameraSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    room_subdiv: float = 0.25
    part_subdiv: float = 0.045
    min_mask_pixels: int = 50


@dataclass
class SyntheticScene:
    mesh: TriMesh
    frames: list[CalibratedFrame]
    detections: list[DetectionRecord]
    ground_truth: list[GroundTruthPart]
    part_faces: dict[str, np.ndarray]
    part_vertices: dict[str, np.ndarray]

    def __iter__(self):
        return iter((self.mesh, self.frames, self.detections, self.ground_truth))


class _MeshBuilder:
    def __init__(self):
        self.vertices: list[np.ndarray] = []
        self.faces: list[np.ndarray] = []
        self.colors: list[np.ndarray] = []
        self.n_v = 0
        self.n_f = 0

    def add(self, verts: np.ndarray, faces: np.ndarray, color) -> tuple[np.ndarray, np.ndarray]:
        """Append a surface; returns (vertex index array, face index array)."""
        verts = np.asarray(verts, float).reshape(-1, 3)
        faces = np.asarray(faces, np.int64).reshape(-1, 3)
        col = np.broadcast_to(np.asarray(color, float), (len(verts), 3)).copy()
        vid = np.arange(self.n_v, self.n_v + len(verts))
        fid = np.arange(self.n_f, self.n_f + len(faces))
        self.vertices.append(verts)
        self.faces.append(faces + self.n_v)
        self.colors.append(col)
        self.n_v += len(verts)
        self.n_f += len(faces)
        return vid, fid

    def build(self) -> TriMesh:
        return TriMesh(np.vstack(self.vertices), np.vstack(self.faces),
                       np.vstack(self.colors))


def _grid_rect(origin, eu, ev, lu: float, lv: float, step: float):
    """Rectangle origin + u*eu + v*ev, u in [0, lu], v in [0, lv], subdivided."""
    origin = np.asarray(origin, float)
    eu = np.asarray(eu, float)
    ev = np.asarray(ev, float)
    nu = max(1, int(math.ceil(lu / step)))
    nv = max(1, int(math.ceil(lv / step)))
    us = np.linspace(0.0, lu, nu + 1)
    vs = np.linspace(0.0, lv, nv + 1)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    verts = origin + uu[..., None] * eu + vv[..., None] * ev
    verts = verts.reshape(-1, 3)
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * (nv + 1) + j
            b = (i + 1) * (nv + 1) + j
            faces.append((a, b, a + 1))
            faces.append((a + 1, b, b + 1))
    return verts, np.asarray(faces, np.int64)


def _open_box(origin, ex, ey, ez, lx, ly, lz, step, skip: set[str]):
    """Box surfaces (outward normals) except the named ones.

    Face names: x-, x+, y-, y+, z-, z+ in the local (ex, ey, ez) basis.
    """
    origin = np.asarray(origin, float)
    ex, ey, ez = (np.asarray(e, float) for e in (ex, ey, ez))
    out = []
    if "x-" not in skip:
        out.append(_grid_rect(origin, ey, ez, ly, lz, step))
    if "x+" not in skip:
        out.append(_grid_rect(origin + lx * ex, ez, ey, lz, ly, step))
    if "y-" not in skip:
        out.append(_grid_rect(origin, ez, ex, lz, lx, step))
    if "y+" not in skip:
        out.append(_grid_rect(origin + ly * ey, ex, ez, lx, lz, step))
    if "z-" not in skip:
        out.append(_grid_rect(origin, ex, ey, lx, ly, step))
    if "z+" not in skip:
        out.append(_grid_rect(origin + lz * ez, ey, ex, ly, lx, step))
    return out


def _unit_pose(unit: FurnitureSpec) -> Se3Pose:
    a = math.radians(unit.yaw_deg)
    c, s = math.cos(a), math.sin(a)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Se3Pose(rot, np.array([unit.position[0], unit.position[1], 0.0]))


def _footprint(unit: FurnitureSpec) -> np.ndarray:
    """World-frame corners of the unit footprint (front slab included)."""
    pose = _unit_pose(unit)
    w2 = unit.width / 2.0
    front = -(PLATE_T + HANDLE_D)
    corners = np.array([
        [-w2, front, 0.0], [w2, front, 0.0], [w2, unit.depth, 0.0], [-w2, unit.depth, 0.0]])
    return pose.apply(corners)[:, :2]


def _rects_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex 2D quads."""
    for quad_a, quad_b in ((a, b), (b, a)):
        for i in range(4):
            edge = quad_a[(i + 1) % 4] - quad_a[i]
            axis = np.array([-edge[1], edge[0]])
            pa = quad_a @ axis
            pb = quad_b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def _validate_spec(spec: SyntheticSceneSpec) -> None:
    lx, ly, lz = spec.room
    if min(lx, ly, lz) <= 0:
        raise SpecError("room extents must be positive")
    for i, u in enumerate(spec.units):
        if u.kind not in (DRAWER_STACK, HINGED_CABINET, DOOR):
            raise SpecError(f"unit {i}: unknown kind {u.kind!r}")
        if min(u.width, u.height, u.depth) <= 0 or u.n_parts < 1:
            raise SpecError(f"unit {i}: dimensions must be positive")
    feet = [_footprint(u) for u in spec.units]
    for i in range(len(feet)):
        for j in range(i + 1, len(feet)):
            if _rects_overlap(feet[i], feet[j]):
                raise SpecError(f"units {i} and {j} interpenetrate")
    for i, f in enumerate(feet):
        if (f[:, 0] < -1e-9).any() or (f[:, 0] > lx + 1e-9).any() \
                or (f[:, 1] < -1e-9).any() or (f[:, 1] > ly + 1e-9).any():
            raise SpecError(f"unit {i} extends outside the room")


def _build_room(builder: _MeshBuilder, spec: SyntheticSceneSpec) -> None:
    lx, ly, lz = spec.room
    step = spec.room_subdiv
    builder.add(*_grid_rect([0, 0, 0], [1, 0, 0], [0, 1, 0], lx, ly, step), (0.55, 0.52, 0.48))
    builder.add(*_grid_rect([0, 0, 0], [0, 0, 1], [1, 0, 0], lz, lx, step), (0.82, 0.80, 0.75))
    builder.add(*_grid_rect([0, ly, 0], [1, 0, 0], [0, 0, 1], lx, lz, step), (0.80, 0.78, 0.74))
    builder.add(*_grid_rect([0, 0, 0], [0, 1, 0], [0, 0, 1], ly, lz, step), (0.78, 0.79, 0.75))
    builder.add(*_grid_rect([lx, 0, 0], [0, 0, 1], [0, 1, 0], lz, ly, step), (0.79, 0.77, 0.76))


def _add_plate(builder, pose: Se3Pose, x0: float, z0: float, w: float, h: float,
               color, step: float, handle_x_frac: float | None):
    """Movable front: a flat plate plus an optional protruding handle.

    Mimics a scan of closed furniture: only the front surface is captured
    (plate edges and backs are never visible). The plate sits at local
    y = -PLATE_T spanning x in [x0, x0+w], z in [z0, z0+h].
    Returns (vertex ids, face ids).
    """
    vids, fids = [], []

    def add_local(verts, faces, col):
        vid, fid = builder.add(pose.apply(verts), faces, col)
        vids.append(vid)
        fids.append(fid)

    origin = np.array([x0, -PLATE_T, z0])
    v, f = _grid_rect(origin, [0, 0, 1], [1, 0, 0], h, w, step)
    add_local(v, f, color)
    if handle_x_frac is not None:
        hw, hh = 0.12, 0.035
        hx = x0 + handle_x_frac * w - hw / 2.0
        hx = min(max(hx, x0 + 0.01), x0 + w - hw - 0.01)
        hz = z0 + h / 2.0 - hh / 2.0
        ho = np.array([hx, -PLATE_T - HANDLE_D, hz])
        for v, f in _open_box(ho, [1, 0, 0], [0, 1, 0], [0, 0, 1],
                              hw, HANDLE_D, hh, 0.04, skip={"y+"}):
            add_local(v, f, (0.15, 0.15, 0.17))
    return np.concatenate(vids), np.concatenate(fids)


def _add_carcass(builder, pose: Se3Pose, unit: FurnitureSpec, step: float) -> None:
    """Exterior shell: sides, top, back (outside + inside), bottom front lip."""
    w2 = unit.width / 2.0
    z0, h = unit.elevation, unit.height
    color = (0.52, 0.36, 0.22)
    surfaces = []
    surfaces += [_grid_rect([-w2, 0, 0], [0, 1, 0], [0, 0, 1], unit.depth, z0 + h, step)]
    surfaces += [_grid_rect([w2, 0, 0], [0, 0, 1], [0, 1, 0], z0 + h, unit.depth, step)]
    surfaces += [_grid_rect([-w2, 0, z0 + h], [1, 0, 0], [0, 1, 0], unit.width, unit.depth, step)]
    # back panel, seen from inside the cavity and from behind
    surfaces += [_grid_rect([-w2, unit.depth, 0], [1, 0, 0], [0, 0, 1], unit.width, z0 + h, step)]
    if z0 > 0:
        surfaces += [_grid_rect([-w2, 0, 0], [1, 0, 0], [0, 0, 1], unit.width, z0, step)]
    for v, f in surfaces:
        builder.add(pose.apply(v), f, color)


def _front_openings(unit: FurnitureSpec):
    """(x0, z0, w, h) of each movable front in the unit local frame."""
    w = unit.width
    if unit.kind == DRAWER_STACK:
        n = unit.n_parts
        cell = (unit.height - (n - 1) * GAP) / n
        return [(-w / 2.0, unit.elevation + i * (cell + GAP), w, cell) for i in range(n)]
    if unit.kind == HINGED_CABINET:
        n = unit.n_parts
        cell = (w - (n - 1) * GAP) / n
        return [(-w / 2.0 + i * (cell + GAP), unit.elevation, cell, unit.height)
                for i in range(n)]
    return [(-w / 2.0, unit.elevation, w, unit.height)]  # DOOR: single leaf


def _part_articulation(unit: FurnitureSpec, opening, index: int,
                       pose: Se3Pose) -> Articulation:
    x0, z0, w, h = opening
    if unit.kind == DRAWER_STACK:
        axis = pose.apply_vector(np.array([0.0, -1.0, 0.0]))
        origin = pose.apply(np.array([x0 + w / 2.0, -PLATE_T / 2.0, z0 + h / 2.0]))
        return Articulation("prismatic", origin, axis, min(0.35, 0.8 * unit.depth))
    hinge_left = index % 2 == 0
    hx = x0 if hinge_left else x0 + w
    axis_local = np.array([0.0, 0.0, -1.0]) if hinge_left else np.array([0.0, 0.0, 1.0])
    axis = pose.apply_vector(axis_local)
    # overlay-style hinge: pivot on the front edge of the leaf
    origin = pose.apply(np.array([hx, -PLATE_T, z0 + h / 2.0]))
    return Articulation("revolute", origin, axis, math.pi / 2.0)


_FRONT_COLORS = [(0.72, 0.55, 0.35), (0.40, 0.50, 0.62), (0.62, 0.42, 0.40),
                 (0.45, 0.58, 0.45), (0.66, 0.60, 0.42), (0.50, 0.44, 0.58)]


def _build_cameras(spec: SyntheticSceneSpec, rng: np.random.Generator):
    cams = []
    cs = spec.cameras
    intr = Intrinsics(cs.focal, cs.focal, cs.width / 2.0, cs.height_px / 2.0,
                      cs.width, cs.height_px)
    idx = 0
    for unit in spec.units:
        pose = _unit_pose(unit)
        target = pose.apply(np.array([0.0, 0.0, unit.elevation + unit.height / 2.0]))
        out_dir = pose.apply_vector(np.array([0.0, -1.0, 0.0]))
        for j in range(cs.per_unit):
            swing = (j - (cs.per_unit - 1) / 2.0) * 0.45 + rng.uniform(-0.06, 0.06)
            c, s = math.cos(swing), math.sin(swing)
            radial = np.array([c * out_dir[0] - s * out_dir[1],
                               s * out_dir[0] + c * out_dir[1], 0.0])
            eye = target + radial * (cs.distance + rng.uniform(-0.1, 0.1))
            eye[2] = cs.height + rng.uniform(-0.05, 0.05)
            lx, ly, _ = spec.room
            eye[0] = min(max(eye[0], 0.15), lx - 0.15)
            eye[1] = min(max(eye[1], 0.15), ly - 0.15)
            cams.append((f"cam{idx:03d}", _look_at(eye, target), intr))
            idx += 1
    return cams


def _look_at(eye: np.ndarray, target: np.ndarray) -> Se3Pose:
    """Camera-to-world pose, CV convention: +x right, +y down, +z forward."""
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, np.array([0.0, 0.0, -1.0]))
    if np.linalg.norm(right) < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    return Se3Pose(np.column_stack([right, down, fwd]), eye)


def _perturb_hint(art: Articulation, frame: CalibratedFrame, noise: NoiseSpec,
                  rng: np.random.Generator) -> JointHint:
    """Exact world articulation to a (possibly noisy) camera-frame hint."""
    from .articulate import rotation_about_axis

    inv = frame.pose.inverse()
    axis_cam = inv.rotation @ art.axis
    origin_cam = inv.apply(art.origin)
    joint_type = art.joint_type
    if noise.sigma_axis_deg > 0:
        angle = math.radians(rng.normal(0.0, noise.sigma_axis_deg))
        perp = np.cross(axis_cam, rng.normal(size=3))
        if np.linalg.norm(perp) > 1e-9:
            perp /= np.linalg.norm(perp)
            axis_cam = rotation_about_axis(perp, angle) @ axis_cam
    if noise.sigma_origin_m > 0:
        origin_cam = origin_cam + rng.normal(0.0, noise.sigma_origin_m, size=3)
    if noise.type_flip_prob > 0 and rng.uniform() < noise.type_flip_prob:
        joint_type = "revolute" if joint_type == "prismatic" else "prismatic"
    return JointHint(joint_type, origin_cam, axis_cam, art.range, 0.9)


def generate_synthetic(spec: SyntheticSceneSpec) -> SyntheticScene:
    """Build the scene, render depth per camera, and emit detections + ground truth.

    Deterministic for a fixed spec (including its seed).
    """
    _validate_spec(spec)
    rng = np.random.default_rng(spec.seed)
    builder = _MeshBuilder()
    _build_room(builder, spec)

    part_faces: dict[str, np.ndarray] = {}
    part_vertices: dict[str, np.ndarray] = {}
    gt: list[GroundTruthPart] = []
    color_i = 0
    for ui, unit in enumerate(spec.units):
        pose = _unit_pose(unit)
        if unit.kind != DOOR:
            # fine enough that probe-hit plane fits find support vertices
            _add_carcass(builder, pose, unit, min(spec.room_subdiv, 0.1))
        for pi, opening in enumerate(_front_openings(unit)):
            x0, z0, w, h = opening
            part_id = f"u{ui}p{pi}"
            handle = None
            if unit.with_handles:
                if unit.kind == DRAWER_STACK:
                    handle = 0.5
                else:
                    handle = 0.85 if pi % 2 == 0 else 0.15  # near the free edge
            vid, fid = _add_plate(builder, pose, x0, z0, w, h,
                                  _FRONT_COLORS[color_i % len(_FRONT_COLORS)],
                                  spec.part_subdiv, handle)
            color_i += 1
            part_faces[part_id] = fid
            part_vertices[part_id] = vid
            art = _part_articulation(unit, opening, pi, pose)
            gt.append(GroundTruthPart(part_id, vid, art))

    mesh = builder.build()
    mesh.validate()

    frames: list[CalibratedFrame] = []
    detections: list[DetectionRecord] = []
    for cam_id, pose, intr in _build_cameras(spec, rng):
        frame = CalibratedFrame(cam_id, np.zeros((intr.height, intr.width)), pose, intr)
        vis = rasterize_view(mesh, frame)
        frame.depth = vis.depth
        frames.append(frame)
        for part in gt:
            mask = np.isin(vis.face_index, part_faces[part.part_id])
            if int(mask.sum()) < spec.min_mask_pixels:
                continue
            detections.append(DetectionRecord(cam_id, part.part_id, "grounding", mask))
            hint = _perturb_hint(part.articulation, frame, spec.noise, rng)
            detections.append(DetectionRecord(cam_id, part.part_id, "opd", mask, hint))
    return SyntheticScene(mesh, frames, detections, gt, part_faces, part_vertices)


def write_scene(scene: SyntheticScene, out_dir) -> dict:
    """Write mesh/frames/detections/ground-truth files; returns their paths."""
    from pathlib import Path

    from .ingest import save_detections, save_ground_truth, save_scene

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = save_scene(scene.mesh, scene.frames, out)
    save_detections(scene.detections, out / "detections.json")
    save_ground_truth(scene.ground_truth, out / "ground_truth.json")
    return {
        "mesh": out / "scene.ply",
        "frames": manifest,
        "detections": out / "detections.json",
        "ground_truth": out / "ground_truth.json",
    }


def default_scene_spec(seed: int = 0, n_units: int = 3) -> SyntheticSceneSpec:
    """Randomized-but-valid spec used by tests and the CLI generator."""
    rng = np.random.default_rng(seed)
    kinds = [DRAWER_STACK, HINGED_CABINET, DOOR]
    units = []
    room = (4.0, 5.0, 2.5)
    xs = np.linspace(0.9, 3.1, 3)
    for i in range(n_units):
        kind = kinds[i % 3]
        if kind == DRAWER_STACK:
            depth = float(rng.uniform(0.4, 0.55))
            units.append(FurnitureSpec(kind, (float(xs[i % 3]), room[1] - depth - 0.12),
                                       yaw_deg=float(rng.uniform(-8, 8)),
                                       width=float(rng.uniform(0.55, 0.75)),
                                       height=float(rng.uniform(0.55, 0.8)),
                                       depth=depth,
                                       n_parts=int(rng.integers(2, 4))))
        elif kind == HINGED_CABINET:
            depth = float(rng.uniform(0.35, 0.5))
            units.append(FurnitureSpec(kind, (float(xs[i % 3]), room[1] - depth - 0.12),
                                       yaw_deg=float(rng.uniform(-8, 8)),
                                       width=float(rng.uniform(0.7, 0.9)),
                                       height=float(rng.uniform(0.9, 1.3)),
                                       depth=depth, n_parts=2))
        else:
            units.append(FurnitureSpec(kind, (float(xs[i % 3]), room[1] - 0.1),
                                       yaw_deg=0.0, width=0.7,
                                       height=float(rng.uniform(1.5, 1.8)),
                                       depth=0.08, n_parts=1, elevation=0.0))
    return SyntheticSceneSpec(room=room, units=units, seed=seed)
