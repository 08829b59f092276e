"""artiscene: static indoor scans to simulation-ready interactive scenes."""

from .articulate import (Articulation, ValidatedPart, apply_articulation,
                         filter_candidate, refine_articulation, transform_part)
from .assemble import (InteractiveObject, InteractiveScene, assemble_scene,
                       carve_background, dedup, pointset_iou)
from .cavity import InnerBox, build_inner_box
from .config import PipelineConfig
from .evaluate import EvalReport, evaluate_scene, joint_class, match_detections, mod_table
from .geom import (Intrinsics, Obb, Plane, Se3Pose, TriMesh, fit_obb,
                   line_line_distance, point_in_obb, ransac_plane, raycast)
from .ingest import (CalibratedFrame, DetectionRecord, GroundTruthPart,
                     load_detections, load_ground_truth, load_scene)
from .lift import FusedInstance, fuse_instances, project_mask, rasterize_view
from .parts import PartCandidate, extract_part
from .pipeline import Pipeline, run_ablation, run_pipeline
from .synthetic import SyntheticSceneSpec, default_scene_spec, generate_synthetic
from .urdf import export_urdf, import_urdf

__version__ = "0.1.0"

__all__ = [
    "Articulation", "CalibratedFrame", "DetectionRecord", "EvalReport",
    "FusedInstance", "GroundTruthPart", "InnerBox", "InteractiveObject",
    "InteractiveScene", "Intrinsics", "Obb", "PartCandidate", "Pipeline",
    "PipelineConfig", "Plane", "Se3Pose", "SyntheticSceneSpec", "TriMesh",
    "ValidatedPart", "apply_articulation", "assemble_scene", "build_inner_box",
    "carve_background", "dedup", "default_scene_spec", "evaluate_scene",
    "export_urdf", "extract_part", "filter_candidate", "fit_obb",
    "fuse_instances", "generate_synthetic", "import_urdf", "joint_class",
    "line_line_distance", "load_detections", "load_ground_truth", "load_scene",
    "match_detections", "mod_table", "point_in_obb", "pointset_iou",
    "project_mask", "ransac_plane", "rasterize_view", "raycast",
    "refine_articulation", "run_ablation", "run_pipeline", "transform_part",
]
