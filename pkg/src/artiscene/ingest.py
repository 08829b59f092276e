"""Scene loading: mesh + calibrated frames, detection interchange files, ground truth.

File formats (schemas in docs/formats.md):
  - frames manifest: JSON, either a bare array of frame records or
    {"up": "z"|"y", "frames": [...]}; each record carries a row-major 4x4
    camera-to-world pose, [fx, fy, cx, cy] intrinsics, [width, height]
    raster size, and a depth PNG path (16-bit, millimeters, 0 = invalid).
  - detections: JSON with run-length-encoded masks (row-major, alternating
    zero/one run lengths, starting with the zero run).
  - ground truth: JSON list of parts with scene-mesh vertex indices and a
    world-frame articulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .articulate import Articulation
from .geom import Intrinsics, Se3Pose, TriMesh
from .meshio import load_mesh

DEPTH_SCALE = 1000.0  # millimeters per meter

# rotation mapping y-up coordinates into the z-up convention
_Y_UP_TO_Z_UP = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


class SceneLoadError(ValueError):
    """Scene inputs missing or malformed."""


class DetectionFormatError(ValueError):
    """Detections interchange file malformed."""


@dataclass
class CalibratedFrame:
    """Posed RGB-D frame; pose maps camera coordinates (+z forward) to world."""

    frame_id: str
    depth: np.ndarray
    pose: Se3Pose
    intrinsics: Intrinsics
    color: np.ndarray | None = None

    def validate(self) -> None:
        h, w = self.depth.shape
        if (w, h) != (self.intrinsics.width, self.intrinsics.height):
            raise SceneLoadError(
                f"frame {self.frame_id}: depth raster {w}x{h} does not match "
                f"intrinsics {self.intrinsics.width}x{self.intrinsics.height}")
        if (self.depth < 0).any():
            raise SceneLoadError(f"frame {self.frame_id}: negative depth values")

    def view_direction(self) -> np.ndarray:
        """Camera forward axis (+z) in world coordinates."""
        return self.pose.rotation[:, 2].copy()

    def backproject_pixels(self, us: np.ndarray, vs: np.ndarray,
                           depths: np.ndarray) -> np.ndarray:
        cam = self.intrinsics.backproject(us, vs, depths)
        return self.pose.apply(cam)


@dataclass
class JointHint:
    """Camera-frame joint estimate attached to an opd-source detection."""

    joint_type: str  # "prismatic" | "revolute"
    origin_cam: np.ndarray
    axis_cam: np.ndarray
    range: float
    confidence: float


@dataclass
class DetectionRecord:
    frame_id: str
    instance_label: str
    source: str  # "grounding" | "opd"
    mask: np.ndarray
    joint_hint: JointHint | None = None

    def validate(self, index: int) -> None:
        if self.source not in ("grounding", "opd"):
            raise DetectionFormatError(f"record {index}: bad source {self.source!r}")
        if (self.joint_hint is not None) != (self.source == "opd"):
            raise DetectionFormatError(
                f"record {index}: joint_hint present iff source is 'opd'")
        if self.joint_hint is not None:
            c = self.joint_hint.confidence
            if not (0.0 <= c <= 1.0):
                raise DetectionFormatError(f"record {index}: confidence {c} outside [0,1]")


@dataclass
class GroundTruthPart:
    part_id: str
    vertex_indices: np.ndarray
    articulation: Articulation


def rle_encode(mask: np.ndarray) -> str:
    """Row-major RLE, alternating zero/one runs, leading zero run (may be 0)."""
    flat = np.asarray(mask, bool).ravel()
    runs = []
    current = False
    count = 0
    for change in np.flatnonzero(np.diff(flat.astype(np.int8))):
        runs.append(int(change) + 1 - count)
        count = int(change) + 1
        current = not current
    runs.append(flat.size - count)
    if flat.size and flat[0]:
        runs.insert(0, 0)
    if not flat.size:
        runs = [0]
    return ",".join(str(r) for r in runs)


def rle_decode(rle: str, width: int, height: int) -> np.ndarray:
    runs = [int(r) for r in rle.split(",") if r != ""]
    total = sum(runs)
    if total != width * height:
        raise DetectionFormatError(
            f"RLE runs sum to {total}, raster area is {width * height}")
    flat = np.zeros(width * height, bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape(height, width)


def load_depth_png(path: str | Path) -> np.ndarray:
    """16-bit millimeter PNG to float meters (0 stays 0 = invalid)."""
    arr = np.array(Image.open(path))
    return arr.astype(float) / DEPTH_SCALE


def save_depth_png(depth_m: np.ndarray, path: str | Path) -> None:
    mm = np.clip(np.round(np.asarray(depth_m, float) * DEPTH_SCALE), 0, 65535)
    Image.fromarray(mm.astype(np.uint16)).save(path)


def _parse_frame(record: dict, base: Path, index: int) -> CalibratedFrame:
    frame_id = str(record.get("frame_id", index))
    try:
        pose_vals = np.asarray(record["pose"], float).reshape(4, 4)
        fx, fy, cx, cy = record["intrinsics"]
        width, height = record["size"]
        depth_path = record["depth"]
    except (KeyError, ValueError) as e:
        raise SceneLoadError(f"frame {frame_id}: bad record ({e})")
    pose = Se3Pose(pose_vals[:3, :3], pose_vals[:3, 3])
    try:
        pose.validate(tol=1e-4)
    except ValueError as e:
        raise SceneLoadError(f"frame {frame_id}: pose not in SE(3): {e}")
    intr = Intrinsics(float(fx), float(fy), float(cx), float(cy), int(width), int(height))
    try:
        intr.validate()
    except ValueError as e:
        raise SceneLoadError(f"frame {frame_id}: bad intrinsics: {e}")
    depth = load_depth_png(base / depth_path)
    color = None
    if record.get("color"):
        color = np.asarray(Image.open(base / record["color"]), dtype=float)[..., :3] / 255.0
    frame = CalibratedFrame(frame_id, depth, pose, intr, color)
    frame.validate()
    return frame


def load_scene(mesh_path: str | Path,
               frames_manifest_path: str | Path) -> tuple[TriMesh, list[CalibratedFrame]]:
    """Load mesh + manifest, normalizing everything to the up = +z convention.

    Fails atomically: any malformed frame raises before anything is returned.
    """
    mesh_path = Path(mesh_path)
    manifest_path = Path(frames_manifest_path)
    if not manifest_path.exists():
        raise SceneLoadError(f"frames manifest not found: {manifest_path}")
    try:
        mesh = load_mesh(mesh_path)
        mesh.validate()
    except ValueError as e:
        raise SceneLoadError(f"scene mesh {mesh_path}: {e}")
    raw = json.loads(manifest_path.read_text())
    if isinstance(raw, list):
        up, records = "z", raw
    else:
        up = raw.get("up", "z")
        records = raw.get("frames", [])
    frames = [_parse_frame(rec, manifest_path.parent, i) for i, rec in enumerate(records)]
    if up == "y":
        rot = Se3Pose(_Y_UP_TO_Z_UP, np.zeros(3))
        mesh = mesh.transformed(rot)
        frames = [CalibratedFrame(f.frame_id, f.depth, rot.compose(f.pose),
                                  f.intrinsics, f.color) for f in frames]
    elif up != "z":
        raise SceneLoadError(f"manifest up axis must be 'y' or 'z', got {up!r}")
    if mesh.colors is None:
        mesh.colors = np.ones((mesh.n_vertices, 3))
    return mesh, frames


def save_scene(mesh: TriMesh, frames: list[CalibratedFrame], out_dir: str | Path,
               mesh_name: str = "scene.ply") -> Path:
    """Writer counterpart of load_scene (used by the synthetic generator)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .meshio import save_ply_ascii

    save_ply_ascii(mesh, out / mesh_name)
    records = []
    for f in frames:
        depth_name = f"depth_{f.frame_id}.png"
        save_depth_png(f.depth, out / depth_name)
        records.append({
            "frame_id": f.frame_id,
            "pose": [float(x) for x in f.pose.matrix().ravel()],
            "intrinsics": [f.intrinsics.fx, f.intrinsics.fy, f.intrinsics.cx, f.intrinsics.cy],
            "size": [f.intrinsics.width, f.intrinsics.height],
            "depth": depth_name,
        })
    manifest = out / "frames.json"
    manifest.write_text(json.dumps({"up": "z", "frames": records}, indent=1, sort_keys=True))
    return manifest


def load_detections(path: str | Path) -> list[DetectionRecord]:
    path = Path(path)
    if not path.exists():
        raise DetectionFormatError(f"detections file not found: {path}")
    raw = json.loads(path.read_text())
    records = raw["detections"] if isinstance(raw, dict) else raw
    out = []
    for i, rec in enumerate(records):
        try:
            width, height = rec["size"]
            mask = rle_decode(rec["mask_rle"], int(width), int(height))
        except DetectionFormatError as e:
            raise DetectionFormatError(f"record {i}: {e}")
        except (KeyError, ValueError) as e:
            raise DetectionFormatError(f"record {i}: bad record ({e})")
        hint = None
        if rec.get("joint_hint") is not None:
            h = rec["joint_hint"]
            hint = JointHint(h["type"], np.asarray(h["origin_cam"], float),
                             np.asarray(h["axis_cam"], float), float(h["range"]),
                             float(h.get("confidence", 1.0)))
        det = DetectionRecord(str(rec["frame_id"]), rec.get("instance_label", ""),
                              rec["source"], mask, hint)
        det.validate(i)
        out.append(det)
    return out


def save_detections(records: list[DetectionRecord], path: str | Path) -> None:
    payload = []
    for rec in records:
        h, w = rec.mask.shape
        entry: dict = {
            "frame_id": rec.frame_id,
            "instance_label": rec.instance_label,
            "source": rec.source,
            "size": [w, h],
            "mask_rle": rle_encode(rec.mask),
        }
        if rec.joint_hint is not None:
            jh = rec.joint_hint
            entry["joint_hint"] = {
                "type": jh.joint_type,
                "origin_cam": [float(x) for x in jh.origin_cam],
                "axis_cam": [float(x) for x in jh.axis_cam],
                "range": jh.range,
                "confidence": jh.confidence,
            }
        payload.append(entry)
    Path(path).write_text(json.dumps({"detections": payload}, indent=1, sort_keys=True))


def load_ground_truth(path: str | Path) -> list[GroundTruthPart]:
    raw = json.loads(Path(path).read_text())
    parts = []
    for rec in raw["parts"]:
        art = rec["articulation"]
        parts.append(GroundTruthPart(
            str(rec["part_id"]),
            np.asarray(rec["vertex_indices"], np.int64),
            Articulation(art["type"], np.asarray(art["origin"], float),
                         np.asarray(art["axis"], float), float(art["range"])),
        ))
    return parts


def save_ground_truth(parts: list[GroundTruthPart], path: str | Path) -> None:
    payload = {"parts": [{
        "part_id": p.part_id,
        "vertex_indices": [int(i) for i in p.vertex_indices],
        "articulation": {
            "type": p.articulation.joint_type,
            "origin": [float(x) for x in p.articulation.origin],
            "axis": [float(x) for x in p.articulation.axis],
            "range": p.articulation.range,
        },
    } for p in parts]}
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))
