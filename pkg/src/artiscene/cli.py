"""Command-line driver.

Subcommands: generate (synthetic scenes), run (pipeline), eval, ablate,
export (re-export from checkpoints), inspect-dump (viewer bundle).
Exit codes: 0 success, 2 input error, 3 stage failure.
Set ARTISCENE_LOG=DEBUG|INFO|WARNING for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STAGE = 3


class InputError(ValueError):
    pass


def _setup_logging() -> None:
    level = os.environ.get("ARTISCENE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise InputError(f"--set expects key=value, got {pair!r}")
        key, _, val = pair.partition("=")
        out[key.strip()] = val.strip()
    return out


def cmd_generate(args) -> int:
    from .synthetic import (NoiseSpec, SpecError, default_scene_spec,
                            generate_synthetic, write_scene)

    out = Path(args.out)
    spec = default_scene_spec(seed=args.seed, n_units=args.units)
    spec.noise = NoiseSpec(args.sigma_axis, args.sigma_origin, args.type_flip)
    try:
        scene = generate_synthetic(spec)
    except SpecError as e:
        raise InputError(str(e))
    paths = write_scene(scene, out)
    print(f"wrote synthetic scene with {len(scene.ground_truth)} parts, "
          f"{len(scene.frames)} frames to {out}")
    for key, path in paths.items():
        print(f"  {key}: {path}")
    return EXIT_OK


def _config_from_args(args):
    from .config import PipelineConfig

    if args.config:
        cfg = PipelineConfig.load(args.config)
    else:
        cfg = PipelineConfig()
    overrides = _parse_overrides(args.set)
    if getattr(args, "mesh", None):
        overrides["mesh_path"] = args.mesh
    if getattr(args, "frames", None):
        overrides["frames_path"] = args.frames
    if getattr(args, "detections", None):
        overrides["detections_path"] = args.detections
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    return cfg.with_overrides(overrides)


def cmd_run(args) -> int:
    from .pipeline import run_pipeline

    cfg = _config_from_args(args)
    if not cfg.mesh_path or not cfg.frames_path or not cfg.detections_path:
        raise InputError("run requires --mesh, --frames, and --detections")
    result = run_pipeline(cfg, force=args.force)
    scene = result.scene
    print(f"pipeline done: {len(scene.objects) if scene else 0} interactive objects")
    for key, path in (result.exports or {}).items():
        print(f"  {key}: {path}")
    return EXIT_OK


def _load_prediction(pred_path: Path):
    """(point sets, articulations, ids) from a scene.json or URDF export."""
    from .meshio import load_mesh

    if pred_path.suffix == ".urdf":
        from .urdf import import_urdf

        imported = import_urdf(pred_path)
        sets, arts, ids = [], [], []
        for joint in imported.joints:
            arts.append(joint.articulation())
            ids.append(joint.child_link.removesuffix("_part"))
            if joint.mesh_file:
                mesh = load_mesh(imported.base_dir / joint.mesh_file)
                sets.append(joint.mesh_to_world.apply(mesh.vertices))
            else:
                sets.append(np.zeros((0, 3)))
        return sets, arts, ids
    from .scenejson import load_scene_json, scene_json_articulations

    data = load_scene_json(pred_path)
    arts_by_id = scene_json_articulations(data)
    sets, arts, ids = [], [], []
    for obj in data["objects"]:
        ids.append(obj["id"])
        arts.append(arts_by_id[obj["id"]])
        mesh = load_mesh(pred_path.parent / obj["mesh"])
        sets.append(mesh.vertices)
    return sets, arts, ids


def _load_gt(gt_path: Path, mesh_path: Path | None):
    from .ingest import load_ground_truth
    from .meshio import load_mesh

    gts = load_ground_truth(gt_path)
    if mesh_path is None:
        for name in ("scene.ply", "scene.obj"):
            cand = gt_path.parent / name
            if cand.exists():
                mesh_path = cand
                break
    if mesh_path is None:
        raise InputError(f"cannot locate scene mesh next to {gt_path}; pass --mesh")
    mesh = load_mesh(mesh_path)
    gt_sets = [mesh.vertices[g.vertex_indices] for g in gts]
    gt_arts = [g.articulation for g in gts]
    return gt_sets, gt_arts


def cmd_eval(args) -> int:
    from .evaluate import evaluate_scene, pool_reports

    pairs = [p.split(":", 1) for p in args.pairs]
    for p in pairs:
        if len(p) != 2:
            raise InputError("eval expects PRED:GT path pairs")
    exclude = set()
    if args.verdicts:
        data = json.loads(Path(args.verdicts).read_text())
        exclude = {v["object_id"] for v in data.get("verdicts", [])
                   if v.get("verdict") not in (None, "ok")}
    reports = []
    for pred_s, gt_s in pairs:
        pred_path = Path(pred_s)
        gt_path = Path(gt_s)
        if not pred_path.exists() or not gt_path.exists():
            raise InputError(f"missing input: {pred_s} or {gt_s}")
        sets, arts, ids = _load_prediction(pred_path)
        if exclude:
            keep = [i for i, oid in enumerate(ids) if oid not in exclude]
            sets = [sets[i] for i in keep]
            arts = [arts[i] for i in keep]
        gt_sets, gt_arts = _load_gt(gt_path, Path(args.mesh) if args.mesh else None)
        reports.append(evaluate_scene(sets, arts, gt_sets, gt_arts,
                                      taus=args.tau, match_radius=args.match_radius))
    report = reports[0] if len(reports) == 1 else pool_reports(reports, macro=args.macro)
    if args.format == "json":
        text = report.to_json()
    elif args.format == "csv":
        text = report.to_csv()
    else:
        text = report.to_text()
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"report written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .pipeline import run_ablation

    table = run_ablation(Path(args.out), seeds=range(args.seeds),
                         sigma_axis=args.sigma_axis, sigma_origin=args.sigma_origin,
                         n_units=args.units, taus=args.tau)
    print(table["text"])
    (Path(args.out) / "ablation.json").write_text(
        json.dumps(table["rows"], indent=1, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    from .config import PipelineConfig
    from .pipeline import run_pipeline

    cfg_path = Path(args.run_dir) / "config.txt"
    if not cfg_path.exists():
        raise InputError(f"no config.txt in {args.run_dir}; run the pipeline first")
    cfg = PipelineConfig.load(cfg_path)
    result = run_pipeline(cfg)  # resumes from checkpoints
    for key, path in (result.exports or {}).items():
        print(f"  {key}: {path}")
    return EXIT_OK


def cmd_inspect_dump(args) -> int:
    run_dir = Path(args.run_dir)
    out = Path(args.out)
    required = [run_dir / "scene.json", run_dir / "golden_transforms.json",
                run_dir / "meshes"]
    for path in required:
        if not path.exists():
            raise InputError(f"missing export {path}; run the pipeline with the "
                             "export stage first")
    out.mkdir(parents=True, exist_ok=True)
    shutil.copy2(run_dir / "scene.json", out / "scene.json")
    shutil.copy2(run_dir / "golden_transforms.json", out / "golden_transforms.json")
    dst_meshes = out / "meshes"
    if dst_meshes.exists():
        shutil.rmtree(dst_meshes)
    shutil.copytree(run_dir / "meshes", dst_meshes)
    print(f"viewer bundle written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artiscene")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic oracle scene")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--units", type=int, default=3)
    g.add_argument("--sigma-axis", type=float, default=0.0,
                   help="joint-hint axis noise (degrees)")
    g.add_argument("--sigma-origin", type=float, default=0.0,
                   help="joint-hint origin noise (meters)")
    g.add_argument("--type-flip", type=float, default=0.0,
                   help="joint-hint type flip probability")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run the pipeline end to end")
    r.add_argument("--mesh")
    r.add_argument("--frames")
    r.add_argument("--detections")
    r.add_argument("--out")
    r.add_argument("--config")
    r.add_argument("--force", action="store_true",
                   help="ignore existing checkpoints")
    r.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("pairs", nargs="+", metavar="PRED:GT",
                   help="scene.json or .urdf, paired with ground_truth.json")
    e.add_argument("--mesh", help="scene mesh for ground-truth coordinates")
    e.add_argument("--tau", type=float, nargs="+", default=[0.25, 0.5])
    e.add_argument("--match-radius", type=float, default=0.005)
    e.add_argument("--macro", action="store_true",
                   help="macro-average across scenes (default micro)")
    e.add_argument("--verdicts", help="viewer verdicts JSON; flagged objects excluded")
    e.add_argument("--format", choices=["text", "json", "csv"], default="text")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="compare refinement on/off on noisy scenes")
    a.add_argument("--out", required=True)
    a.add_argument("--seeds", type=int, default=4)
    a.add_argument("--units", type=int, default=2)
    a.add_argument("--sigma-axis", type=float, default=8.0)
    a.add_argument("--sigma-origin", type=float, default=0.1)
    a.add_argument("--tau", type=float, nargs="+", default=[0.25, 0.5])
    a.set_defaults(func=cmd_ablate)

    x = sub.add_parser("export", help="re-run the export stage from checkpoints")
    x.add_argument("--run-dir", required=True)
    x.set_defaults(func=cmd_export)

    d = sub.add_parser("inspect-dump", help="bundle exports for the browser inspector")
    d.add_argument("--run-dir", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_inspect_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001 - stage failures map to exit code 3
        from .pipeline import PipelineError

        if isinstance(e, PipelineError):
            print(f"pipeline failed at {e}", file=sys.stderr)
            return EXIT_STAGE
        from .ingest import DetectionFormatError, SceneLoadError
        from .meshio import MeshFormatError

        if isinstance(e, (SceneLoadError, DetectionFormatError, MeshFormatError,
                          ValueError, FileNotFoundError, json.JSONDecodeError)):
            print(f"input error: {e}", file=sys.stderr)
            return EXIT_INPUT
        raise


if __name__ == "__main__":
    sys.exit(main())
