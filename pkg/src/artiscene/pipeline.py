"""Stage driver: ingest through export with per-stage JSON checkpoints.

Each stage writes checkpoints/<stage>.json tagged with the config hash;
re-running resumes after the last valid checkpoint unless forced. Stage
state round-trips exactly (repr-precision floats), so a resumed run
produces byte-identical exports.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .articulate import (Articulation, ValidatedPart, filter_candidate,
                         refine_articulation)
from .assemble import (InteractiveObject, InteractiveScene, assemble_scene,
                       carve_background, dedup)
from .cavity import CavityConfig, InnerBox, complete_part
from .config import PipelineConfig
from .geom import Obb, Plane, TriMesh, fit_obb
from .ingest import load_detections, load_scene
from .lift import FusedInstance, SupportView, fuse_instances, project_mask, rasterize_view
from .parts import ExtractConfig, PartCandidate, extract_part
from .scenejson import export_scene_json, write_golden_transforms
from .texture import TexturedMesh, bake, repair_and_smooth, unwrap
from .urdf import export_urdf

log = logging.getLogger(__name__)

STAGES = ["lift", "extract", "articulate", "cavity", "assemble", "texture", "export"]


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


class SceneLock:
    """One process owns a scene directory at a time."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / ".lock"

    def __enter__(self):
        if self.path.exists():
            raise PipelineError("setup", f"scene directory locked by {self.path.read_text().strip()}"
                                         " (remove .lock if stale)")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


# ---------------------------------------------------------------- codecs

def _mesh_to_json(m: TriMesh) -> dict:
    return {"v": m.vertices.tolist(), "f": m.faces.tolist(),
            "c": None if m.colors is None else m.colors.tolist()}


def _mesh_from_json(d: dict) -> TriMesh:
    return TriMesh(np.array(d["v"], float).reshape(-1, 3),
                   np.array(d["f"], np.int64).reshape(-1, 3),
                   None if d["c"] is None else np.array(d["c"], float).reshape(-1, 3))


def _art_to_json(a: Articulation) -> dict:
    return {"type": a.joint_type, "origin": a.origin.tolist(),
            "axis": a.axis.tolist(), "range": a.range}


def _art_from_json(d: dict) -> Articulation:
    return Articulation(d["type"], np.array(d["origin"]), np.array(d["axis"]),
                        d["range"])


def _views_to_json(views: list[SupportView]) -> list:
    return [{"frame_id": v.frame_id, "detection_index": v.detection_index,
             "iou": v.iou} for v in views]


def _views_from_json(data: list) -> list[SupportView]:
    return [SupportView(v["frame_id"], v["detection_index"], v["iou"]) for v in data]


def _candidate_to_json(c: PartCandidate) -> dict:
    return {
        "instance_id": c.instance_id,
        "mesh": _mesh_to_json(c.part_mesh),
        "plane": {"n": c.front_plane.normal.tolist(), "off": c.front_plane.offset,
                  "t": c.front_plane.thickness},
        "views": _views_to_json(c.supporting_views),
        "prov_faces": c.provenance_faces.tolist(),
        "prov_vertices": c.provenance_vertices.tolist(),
    }


def _candidate_from_json(d: dict) -> PartCandidate:
    plane = Plane(np.array(d["plane"]["n"]), d["plane"]["off"], d["plane"]["t"])
    return PartCandidate(d["instance_id"], _mesh_from_json(d["mesh"]), plane,
                         _views_from_json(d["views"]),
                         np.array(d["prov_faces"], np.int64),
                         np.array(d["prov_vertices"], np.int64))


def _validated_to_json(v: ValidatedPart) -> dict:
    return {
        "candidate": _candidate_to_json(v.candidate),
        "articulation": _art_to_json(v.articulation),
        "obb": {"axes": v.obb.axes.tolist(), "center": v.obb.center.tolist(),
                "extents": v.obb.extents.tolist()},
        "front_normal": v.front_normal.tolist(),
    }


def _validated_from_json(d: dict) -> ValidatedPart:
    obb = Obb(np.array(d["obb"]["axes"]), np.array(d["obb"]["center"]),
              np.array(d["obb"]["extents"]))
    return ValidatedPart(_candidate_from_json(d["candidate"]),
                         _art_from_json(d["articulation"]), obb,
                         np.array(d["front_normal"]))


def _box_to_json(b: InnerBox) -> dict:
    return {"mesh": _mesh_to_json(b.mesh), "depth": b.depth,
            "source": b.depth_source, "opening": b.opening_corners.tolist()}


def _box_from_json(d: dict) -> InnerBox:
    return InnerBox(_mesh_from_json(d["mesh"]), d["depth"], d["source"],
                    np.array(d["opening"]))


# ---------------------------------------------------------------- driver

@dataclass
class PipelineResult:
    scene: InteractiveScene | None
    out_dir: Path
    exports: dict = field(default_factory=dict)
    checkpoints: list[str] = field(default_factory=list)


class Pipeline:
    def __init__(self, config: PipelineConfig):
        config.validate()
        self.cfg = config
        self.out = Path(config.out_dir)
        self.ckpt_dir = self.out / "checkpoints"
        self.mesh: TriMesh | None = None
        self.frames = []
        self.detections = []
        self.state: dict = {}

    # -- checkpoint helpers

    def _ckpt_path(self, stage: str) -> Path:
        return self.ckpt_dir / f"{stage}.json"

    def _write_ckpt(self, stage: str, data: dict) -> None:
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        payload = {"stage": stage, "config_hash": self.cfg.content_hash(),
                   "data": data}
        self._ckpt_path(stage).write_text(json.dumps(payload))

    def _read_ckpt(self, stage: str) -> dict | None:
        path = self._ckpt_path(stage)
        if not path.exists():
            return None
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError:
            log.warning("checkpoint %s unreadable; recomputing", stage)
            return None
        if payload.get("config_hash") != self.cfg.content_hash():
            log.warning("checkpoint %s has stale config hash; recomputing", stage)
            return None
        return payload["data"]

    # -- ingest (always executed; cheap relative to stages)

    def ingest(self) -> None:
        from .ingest import SceneLoadError

        try:
            self.mesh, self.frames = load_scene(self.cfg.mesh_path, self.cfg.frames_path)
            self.detections = load_detections(self.cfg.detections_path)
        except (SceneLoadError, ValueError) as e:
            raise PipelineError("ingest", str(e))
        if not self.frames:
            raise PipelineError("ingest", "no calibrated frames in manifest")

    # -- stages

    def stage_lift(self) -> dict:
        cfg = self.cfg
        vis = {}
        projections = []
        for frame in self.frames:
            vis[frame.frame_id] = rasterize_view(self.mesh, frame)
        for i, det in enumerate(self.detections):
            if det.source != "grounding":
                continue
            proj = project_mask(vis[det.frame_id], det.mask, detection_index=i,
                                min_pixels=cfg.min_mask_pixels)
            if proj.faces.size:
                projections.append(proj)
        instances = fuse_instances(projections, self.mesh, cfg.fuse_iou_threshold,
                                   cfg.top_k, seed=cfg.louvain_seed,
                                   resolution=cfg.louvain_resolution)
        self.state["instances"] = instances
        self._write_lift_debug(instances)
        return {"instances": [
            {"instance_id": inst.instance_id, "faces": inst.faces.tolist(),
             "views": _views_to_json(inst.supporting_views)} for inst in instances]}

    def _write_lift_debug(self, instances) -> None:
        """Per-instance face sets plus seed pixels for external re-segmentation."""
        records = []
        for inst in instances:
            seeds = []
            for view in inst.supporting_views:
                mask = self.detections[view.detection_index].mask
                ys, xs = np.nonzero(mask)
                if len(xs) == 0:
                    continue
                seeds.append({"frame_id": view.frame_id,
                              "detection_index": view.detection_index,
                              "seed_pixel": [int(round(xs.mean())),
                                             int(round(ys.mean()))]})
            records.append({"instance_id": inst.instance_id,
                            "n_faces": int(inst.faces.size),
                            "faces": inst.faces.tolist(),
                            "views": _views_to_json(inst.supporting_views),
                            "seeds": seeds})
        (self.out / "lift_debug.json").write_text(
            json.dumps({"instances": records}, indent=1, sort_keys=True))

    def load_lift(self, data: dict) -> None:
        self.state["instances"] = [
            FusedInstance(d["instance_id"], np.array(d["faces"], np.int64),
                          _views_from_json(d["views"])) for d in data["instances"]]

    def stage_extract(self) -> dict:
        cfg = self.cfg
        ecfg = ExtractConfig(cfg.plane_thickness, cfg.vertical_tol_deg,
                             cfg.ransac_iters, cfg.ransac_seed, cfg.n_planes,
                             cfg.min_part_faces)
        candidates = []
        rejected: list[dict] = []
        for inst in self.state["instances"]:
            cand = extract_part(inst, self.mesh, self.frames, ecfg, rejected)
            if cand is not None:
                candidates.append(cand)
        candidates.sort(key=lambda c: c.instance_id)
        self.state["candidates"] = candidates
        (self.out / "extract_rejections.json").write_text(
            json.dumps({"rejected": rejected}, indent=1, sort_keys=True))
        return {"candidates": [_candidate_to_json(c) for c in candidates]}

    def load_extract(self, data: dict) -> None:
        self.state["candidates"] = [_candidate_from_json(d) for d in data["candidates"]]

    def stage_articulate(self) -> dict:
        cfg = self.cfg
        poses = {f.frame_id: f.pose for f in self.frames}
        validated = []
        for cand in self.state["candidates"]:
            initial = filter_candidate(cand, self.detections, poses,
                                       cfg.candidate_iou_threshold)
            if initial is None:
                log.info("candidate %s: no matching joint hint, discarded",
                         cand.instance_id)
                continue
            if cfg.refine_enabled:
                validated.append(refine_articulation(cand, initial))
            else:
                obb = fit_obb(cand.part_mesh.vertices)
                n_front = np.cross(obb.u1, obb.u2)
                n_front /= np.linalg.norm(n_front)
                if float(n_front @ cand.front_plane.normal) < 0:
                    n_front = -n_front
                validated.append(ValidatedPart(cand, initial, obb, n_front))
        self.state["validated"] = validated
        return {"validated": [_validated_to_json(v) for v in validated]}

    def load_articulate(self, data: dict) -> None:
        self.state["validated"] = [_validated_from_json(d) for d in data["validated"]]

    def stage_cavity(self) -> dict:
        cfg = self.cfg
        ccfg = CavityConfig(
            d_min=cfg.cavity_d_min,
            max_depth=cfg.cavity_max_depth if cfg.cavity_max_depth > 0 else None,
            wall_margin=cfg.cavity_wall_margin,
            ring_dilation_px=cfg.cavity_ring_dilation_px,
            r_fit=cfg.cavity_r_fit,
            min_inlier_frac=cfg.cavity_min_inlier_frac,
            ransac_iters=cfg.ransac_iters,
            seed=cfg.ransac_seed,
        )
        scene_bounds = fit_obb(self.mesh.vertices)
        boxes = {}
        for part in self.state["validated"]:
            boxes[part.instance_id] = complete_part(
                part, self.mesh, self.frames, self.detections, scene_bounds, ccfg)
        self.state["boxes"] = boxes
        return {"boxes": {k: _box_to_json(b) for k, b in sorted(boxes.items())}}

    def load_cavity(self, data: dict) -> None:
        self.state["boxes"] = {k: _box_from_json(d) for k, d in data["boxes"].items()}

    def stage_assemble(self) -> dict:
        cfg = self.cfg
        objects = [InteractiveObject(part.instance_id, part,
                                     self.state["boxes"][part.instance_id])
                   for part in self.state["validated"]]
        kept, removal_log = dedup(objects, cfg.tau_dup, cfg.tau_low, cfg.max_subset)
        background = carve_background(self.mesh, kept, cfg.carve_margin)
        scene = assemble_scene(background, kept, cfg.tau_dup, cfg.carve_margin,
                               removal_log)
        self.state["scene"] = scene
        return {
            "background": _mesh_to_json(scene.background),
            "objects": [{"object_id": o.object_id,
                         "part": _validated_to_json(o.part),
                         "box": _box_to_json(o.inner_box)} for o in scene.objects],
            "removal_log": scene.provenance["removals"],
        }

    def load_assemble(self, data: dict) -> None:
        objects = [InteractiveObject(d["object_id"],
                                     _validated_from_json(d["part"]),
                                     _box_from_json(d["box"]))
                   for d in data["objects"]]
        self.state["scene"] = InteractiveScene(
            _mesh_from_json(data["background"]), objects,
            {"removals": data["removal_log"],
             "objects": [o.object_id for o in objects]})

    def stage_texture(self) -> dict:
        cfg = self.cfg
        scene: InteractiveScene = self.state["scene"]
        textured: dict[str, TexturedMesh] = {}
        if cfg.texture_enabled:
            components = [("background", scene.background, cfg.texture_size_scene)]
            for obj in scene.objects:
                components.append((f"{obj.object_id}_part",
                                   obj.part.candidate.part_mesh, cfg.texture_size_part))
                components.append((f"{obj.object_id}_box", obj.inner_box.mesh,
                                   cfg.texture_size_part))
            for name, mesh, size in components:
                uvs, tpm = unwrap(mesh, size)
                baked = bake(mesh, uvs, size, tpm)
                textured[name] = repair_and_smooth(baked, cfg.texture_dilation_steps,
                                                   cfg.texture_blur_radius)
        self.state["textured"] = textured
        npz_path = self.ckpt_dir / "texture_arrays.npz"
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        arrays = {}
        meta = {}
        for name, tm in textured.items():
            arrays[f"{name}__uvs"] = tm.uvs
            arrays[f"{name}__tex"] = tm.texture
            arrays[f"{name}__valid"] = tm.valid
            arrays[f"{name}__chart"] = tm.chart_id
            meta[name] = {"tpm": tm.texels_per_meter}
        np.savez_compressed(npz_path, **arrays)
        return {"meta": meta, "npz": npz_path.name}

    def load_texture(self, data: dict) -> None:
        scene: InteractiveScene = self.state["scene"]
        meshes = {"background": scene.background}
        for obj in scene.objects:
            meshes[f"{obj.object_id}_part"] = obj.part.candidate.part_mesh
            meshes[f"{obj.object_id}_box"] = obj.inner_box.mesh
        textured = {}
        if data["meta"]:
            with np.load(self.ckpt_dir / data["npz"]) as npz:
                for name, m in data["meta"].items():
                    textured[name] = TexturedMesh(
                        meshes[name], npz[f"{name}__uvs"], npz[f"{name}__tex"],
                        npz[f"{name}__valid"], npz[f"{name}__chart"], m["tpm"])
        self.state["textured"] = textured

    def stage_export(self) -> dict:
        scene: InteractiveScene = self.state["scene"]
        urdf_path = export_urdf(scene, self.out, self.state.get("textured") or None)
        json_path = export_scene_json(scene, self.out)
        golden_path = write_golden_transforms(scene, self.out / "golden_transforms.json")
        (self.out / "provenance.json").write_text(
            json.dumps(scene.provenance, indent=1, sort_keys=True))
        exports = {"urdf": str(urdf_path), "scene_json": str(json_path),
                   "golden": str(golden_path)}
        self.state["exports"] = exports
        return {"exports": exports}

    def load_export(self, data: dict) -> None:
        self.state["exports"] = data["exports"]

    # -- orchestration

    def run(self, force: bool = False) -> PipelineResult:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.txt").write_text(self.cfg.serialize())
        with SceneLock(self.out):
            self.ingest()
            resumed = []
            stages = [s for s in STAGES if s in self.cfg.stages]
            pending = list(stages)
            if not force:
                for stage in stages:
                    data = self._read_ckpt(stage)
                    if data is None:
                        break
                    getattr(self, f"load_{stage}")(data)
                    resumed.append(stage)
                    pending.pop(0)
            for stage in pending:
                log.info("running stage %s", stage)
                try:
                    data = getattr(self, f"stage_{stage}")()
                except PipelineError:
                    raise
                except Exception as e:
                    raise PipelineError(stage, f"{type(e).__name__}: {e}") from e
                self._write_ckpt(stage, data)
            return PipelineResult(self.state.get("scene"), self.out,
                                  self.state.get("exports", {}),
                                  resumed + pending)


def run_pipeline(config: PipelineConfig, force: bool = False) -> PipelineResult:
    return Pipeline(config).run(force=force)


def run_ablation(out_dir: Path, seeds=range(4), sigma_axis: float = 8.0,
                 sigma_origin: float = 0.1, n_units: int = 2,
                 taus=(0.25, 0.5), config_base: PipelineConfig | None = None) -> dict:
    """Run the pipeline with refinement on and off over seeded noisy scenes.

    Returns {"rows": {...}, "text": two-row MD/OE comparison table}.
    """
    from .evaluate import evaluate_scene, pool_reports
    from .synthetic import NoiseSpec, default_scene_spec, generate_synthetic, write_scene

    out_dir = Path(out_dir)
    reports: dict[str, list] = {"with": [], "without": []}
    n_parts = 0
    for seed in seeds:
        spec = default_scene_spec(seed=seed, n_units=n_units)
        spec.noise = NoiseSpec(sigma_axis, sigma_origin, 0.0)
        scene = generate_synthetic(spec)
        n_parts += len(scene.ground_truth)
        scene_dir = out_dir / f"scene_{seed:03d}"
        write_scene(scene, scene_dir)
        for label, refine in (("with", True), ("without", False)):
            cfg = config_base or PipelineConfig()
            cfg = cfg.with_overrides({
                "mesh_path": str(scene_dir / "scene.ply"),
                "frames_path": str(scene_dir / "frames.json"),
                "detections_path": str(scene_dir / "detections.json"),
                "out_dir": str(out_dir / f"run_{seed:03d}_{label}"),
                "refine_enabled": refine,
                "stages": json.dumps(["lift", "extract", "articulate", "cavity",
                                      "assemble"]),
            })
            result = run_pipeline(cfg)
            objs = result.scene.objects if result.scene else []
            pred_sets = [o.point_set() for o in objs]
            pred_arts = [o.part.articulation for o in objs]
            gt_sets = [g.vertex_indices for g in scene.ground_truth]
            gt_arts = [g.articulation for g in scene.ground_truth]
            reports[label].append(evaluate_scene(pred_sets, pred_arts, gt_sets,
                                                 gt_arts, taus=list(taus)))
    rows = {}
    for label in ("without", "with"):
        pooled = pool_reports(reports[label])
        rows[label] = {
            str(tau): {
                "md": (pooled.per_tau[tau]["md"] or {}).get("pooled"),
                "oe": (pooled.per_tau[tau]["oe"] or {}).get("pooled"),
            } for tau in pooled.per_tau
        }
    header = ["method"]
    for tau in taus:
        header += [f"MD[m]@{tau}", f"OE[deg]@{tau}"]
    lines = ["  ".join(header)]
    for label, name in (("without", "w/o refinement"), ("with", "w/ refinement")):
        cells = [name]
        for tau in taus:
            md = rows[label][str(tau)]["md"]
            oe = rows[label][str(tau)]["oe"]
            cells += ["n/a" if md is None else f"{md:.3f}",
                      "n/a" if oe is None else f"{oe:.3f}"]
        lines.append("  ".join(cells))
    return {"rows": rows, "text": "\n".join(lines), "n_parts": n_parts}
