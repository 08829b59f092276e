"""Self-contained scene JSON for the viewer and evaluation tooling.

Stable key ordering keeps exports diff-able; all quantities are meters,
world frame, up = +z. The JSON schema ships in docs/scene.schema.json.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .articulate import Articulation, articulation_matrix
from .assemble import InteractiveScene


def _vec(v) -> list[float]:
    return [float(x) for x in v]


def scene_to_dict(scene: InteractiveScene) -> dict:
    objects = []
    for obj in sorted(scene.objects, key=lambda o: o.object_id):
        art = obj.part.articulation
        box = obj.part.obb
        objects.append({
            "id": obj.object_id,
            "joint": {
                "type": art.joint_type,
                "origin": _vec(art.origin),
                "axis": _vec(art.axis),
                "range": float(art.range),
            },
            "mesh": f"meshes/{obj.object_id}_part.obj",
            "inner_box_mesh": f"meshes/{obj.object_id}_box.obj",
            "obb": {
                "axes": [_vec(a) for a in box.axes],
                "center": _vec(box.center),
                "extents": _vec(box.extents),
            },
        })
    return {
        "format": "artiscene.scene.v1",
        "units": {"length": "meters", "up": "z"},
        "background": "meshes/background.obj",
        "objects": objects,
    }


def export_scene_json(scene: InteractiveScene, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "scene.json"
    path.write_text(json.dumps(scene_to_dict(scene), indent=1, sort_keys=True))
    return path


def load_scene_json(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("format") != "artiscene.scene.v1":
        raise ValueError(f"unsupported scene JSON format: {data.get('format')!r}")
    return data


def scene_json_articulations(data: dict) -> dict[str, Articulation]:
    out = {}
    for obj in data["objects"]:
        j = obj["joint"]
        out[obj["id"]] = Articulation(j["type"], np.asarray(j["origin"], float),
                                      np.asarray(j["axis"], float), float(j["range"]))
    return out


GOLDEN_STATES = (0.0, 0.5, 1.0)  # fractions of the motion range


def write_golden_transforms(scene: InteractiveScene, path: str | Path) -> Path:
    """Per-object 4x4 joint transforms at canonical states, for viewer parity."""
    records = []
    for obj in sorted(scene.objects, key=lambda o: o.object_id):
        art = obj.part.articulation
        for frac in GOLDEN_STATES:
            state = frac * art.range
            m = articulation_matrix(art, state)
            records.append({
                "object_id": obj.object_id,
                "state": float(state),
                "matrix": [float(x) for x in m.ravel()],
            })
    path = Path(path)
    path.write_text(json.dumps({"format": "artiscene.golden.v1",
                                "transforms": records}, indent=1, sort_keys=True))
    return path
