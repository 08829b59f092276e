"""Pipeline configuration: every tunable threshold plus paths and stage toggles.

The file format is flat `key = value` with JSON-encoded values (a TOML-style
subset), chosen so parse(serialize(c)) round-trips losslessly. CLI flags
override file values; the effective config is echoed into each output
directory for provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


@dataclass
class PipelineConfig:
    # lift / fusion
    fuse_iou_threshold: float = 0.5
    top_k: int = 5
    min_mask_pixels: int = 3
    louvain_resolution: float = 1.0
    louvain_seed: int = 0
    # part extraction
    plane_thickness: float = 0.03
    vertical_tol_deg: float = 20.0
    ransac_iters: int = 256
    ransac_seed: int = 0
    n_planes: int = 3
    min_part_faces: int = 20
    # articulation
    candidate_iou_threshold: float = 0.5
    refine_enabled: bool = True
    # cavity
    cavity_d_min: float = 0.05
    cavity_max_depth: float = 0.0  # 0 = unbounded
    cavity_wall_margin: float = 0.005
    cavity_r_fit: float = 0.15
    cavity_ring_dilation_px: int = 10
    cavity_min_inlier_frac: float = 0.5
    # dedup / assembly
    tau_dup: float = 0.7
    tau_low: float = 0.1
    max_subset: int = 4
    carve_margin: float = 0.002
    # texture
    texture_size_scene: int = 2048
    texture_size_part: int = 512
    texture_dilation_steps: int = 4
    texture_blur_radius: float = 1.0
    texture_enabled: bool = True
    # evaluation
    eval_taus: list[float] = field(default_factory=lambda: [0.25, 0.5])
    eval_match_radius: float = 0.005
    mod_oe_cutoff_deg: float = 10.0
    mod_md_cutoff_m: float = 0.25
    # inputs / outputs
    mesh_path: str = ""
    frames_path: str = ""
    detections_path: str = ""
    ground_truth_path: str = ""
    out_dir: str = ""
    stages: list[str] = field(default_factory=lambda: [
        "lift", "extract", "articulate", "cavity", "assemble", "texture", "export"])

    _RANGES = {
        "fuse_iou_threshold": (0.0, 1.0),
        "candidate_iou_threshold": (0.0, 1.0),
        "tau_dup": (0.0, 1.0),
        "tau_low": (0.0, 1.0),
        "vertical_tol_deg": (0.0, 90.0),
    }

    def validate(self) -> None:
        for key, (lo, hi) in self._RANGES.items():
            v = getattr(self, key)
            if not (lo < v <= hi):
                raise ValueError(f"config {key}={v} outside ({lo}, {hi}]")
        if not (self.tau_low < self.tau_dup):
            raise ValueError("need tau_low < tau_dup")
        if self.top_k < 1 or self.max_subset < 1:
            raise ValueError("top_k and max_subset must be >= 1")

    def serialize(self) -> str:
        lines = ["# artiscene pipeline configuration"]
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            lines.append(f"{f.name} = {json.dumps(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "PipelineConfig":
        values = {}
        names = {f.name for f in fields(cls)}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {ln}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in names:
                raise ValueError(f"config line {ln}: unknown key {key!r}")
            try:
                values[key] = json.loads(val.strip())
            except json.JSONDecodeError as e:
                raise ValueError(f"config line {ln}: bad value ({e})")
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.parse(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize())

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        data = asdict(self)
        for key, val in overrides.items():
            if key not in data:
                raise ValueError(f"unknown config key {key!r}")
            current = data[key]
            if isinstance(current, bool):
                val = val if isinstance(val, bool) else str(val).lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                val = int(val)
            elif isinstance(current, float):
                val = float(val)
            elif isinstance(current, list) and isinstance(val, str):
                val = json.loads(val)
            data[key] = val
        cfg = PipelineConfig(**data)
        cfg.validate()
        return cfg

    def content_hash(self) -> str:
        """Hash of everything that affects computation (paths excluded)."""
        skip = {"out_dir", "mesh_path", "frames_path", "detections_path",
                "ground_truth_path"}
        payload = {f.name: getattr(self, f.name) for f in fields(self)
                   if f.name not in skip and not f.name.startswith("_")}
        blob = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
