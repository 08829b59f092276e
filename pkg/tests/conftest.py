from __future__ import annotations

import numpy as np
import pytest

from artiscene.synthetic import (FurnitureSpec, SyntheticSceneSpec,
                                 default_scene_spec, generate_synthetic)


@pytest.fixture(scope="session")
def drawer_scene():
    """Two-drawer cabinet scene, zero noise; shared across tests."""
    spec = SyntheticSceneSpec(
        units=[FurnitureSpec("drawer-stack", (2.0, 4.3), yaw_deg=4.0,
                             width=0.7, height=0.6, depth=0.5, n_parts=2)],
        seed=11)
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def mixed_scene():
    """Three-unit scene (drawers, cabinet, door), zero noise."""
    return generate_synthetic(default_scene_spec(seed=0, n_units=3))


@pytest.fixture(scope="session")
def pipeline_run(mixed_scene, tmp_path_factory):
    """Full pipeline over the mixed scene; returns (result, scene_dir, run_dir)."""
    from artiscene.config import PipelineConfig
    from artiscene.pipeline import run_pipeline
    from artiscene.synthetic import write_scene

    base = tmp_path_factory.mktemp("pipeline")
    scene_dir = base / "gen"
    write_scene(mixed_scene, scene_dir)
    cfg = PipelineConfig().with_overrides({
        "mesh_path": str(scene_dir / "scene.ply"),
        "frames_path": str(scene_dir / "frames.json"),
        "detections_path": str(scene_dir / "detections.json"),
        "out_dir": str(base / "run"),
        "texture_size_scene": 256,
        "texture_size_part": 128,
    })
    result = run_pipeline(cfg)
    return result, scene_dir, base / "run"


@pytest.fixture(scope="session")
def mixed_scene_vis(mixed_scene):
    from artiscene.lift import rasterize_view

    return {f.frame_id: rasterize_view(mixed_scene.mesh, f)
            for f in mixed_scene.frames}


@pytest.fixture(scope="session")
def mixed_scene_instances(mixed_scene, mixed_scene_vis):
    from artiscene.lift import fuse_instances, project_mask

    projections = []
    for i, det in enumerate(mixed_scene.detections):
        if det.source != "grounding":
            continue
        proj = project_mask(mixed_scene_vis[det.frame_id], det.mask, detection_index=i)
        if proj.faces.size:
            projections.append(proj)
    return fuse_instances(projections, mixed_scene.mesh, 0.5, 5, seed=0), projections


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
