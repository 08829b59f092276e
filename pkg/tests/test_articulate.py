from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artiscene.articulate import (Articulation, apply_articulation,
                                  articulation_matrix, filter_candidate,
                                  mask_iou, refine_articulation,
                                  rotation_about_axis, transform_part)
from artiscene.geom import Plane, Se3Pose, TriMesh, line_line_distance, unit
from artiscene.ingest import DetectionRecord, JointHint
from artiscene.lift import SupportView
from artiscene.parts import PartCandidate
from conftest import random_rotation


class TestKinematics:
    def test_state_zero_identity(self):
        art = Articulation("revolute", [1, 2, 3], [0, 0, 1], math.pi)
        p = np.array([0.3, 0.4, 0.5])
        assert np.allclose(apply_articulation(p, art, 0.0), p, atol=1e-15)

    def test_revolute_half_turn(self):
        art = Articulation("revolute", [0, 0, 0], [0, 0, 1], 2 * math.pi)
        out = apply_articulation([1, 0, 0], art, math.pi)
        assert np.allclose(out, [-1, 0, 0], atol=1e-12)

    def test_prismatic_translation(self):
        art = Articulation("prismatic", [0, 0, 0], [0, 1, 0], 1.0)
        out = apply_articulation([0.1, 0.2, 0.3], art, 0.3)
        assert np.allclose(out, [0.1, 0.5, 0.3], atol=1e-15)

    def test_clamp_warns(self):
        art = Articulation("prismatic", [0, 0, 0], [0, 1, 0], 0.5)
        with pytest.warns(UserWarning):
            out = apply_articulation([0, 0, 0], art, 0.9)
        assert np.allclose(out, [0, 0.5, 0])

    def test_rodrigues_matches_matrix_exponential(self):
        from scipy.linalg import expm

        rng = np.random.default_rng(2)
        for _ in range(50):
            axis = unit(rng.normal(size=3))
            angle = rng.uniform(-2 * math.pi, 2 * math.pi)
            k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]],
                          [-axis[1], axis[0], 0]])
            assert np.allclose(rotation_about_axis(axis, angle), expm(k * angle),
                               atol=1e-9)

    def test_revolute_rigidity(self):
        rng = np.random.default_rng(3)
        art = Articulation("revolute", rng.normal(size=3), unit(rng.normal(size=3)),
                           math.pi)
        pts = rng.normal(size=(10, 3))
        moved = np.array([apply_articulation(p, art, 1.1) for p in pts])
        d0 = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        d1 = np.linalg.norm(moved[:, None] - moved[None, :], axis=-1)
        assert np.allclose(d0, d1, atol=1e-9)

    def test_transform_part_matches_pointwise(self):
        rng = np.random.default_rng(4)
        mesh = TriMesh(rng.normal(size=(12, 3)),
                       np.array([[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]]),
                       rng.uniform(size=(12, 3)))
        art = Articulation("revolute", [0.5, 0, 0], [0, 0, 1], math.pi)
        out = transform_part(mesh, art, 0.7)
        want = np.array([apply_articulation(v, art, 0.7) for v in mesh.vertices])
        assert np.allclose(out.vertices, want, atol=1e-12)
        assert np.array_equal(out.faces, mesh.faces)
        assert np.array_equal(out.colors, mesh.colors)

    def test_matrix_agrees_with_pointwise(self):
        rng = np.random.default_rng(5)
        for jt in ("prismatic", "revolute"):
            art = Articulation(jt, rng.normal(size=3), unit(rng.normal(size=3)), 1.0)
            m = articulation_matrix(art, 0.6)
            p = rng.normal(size=3)
            via_matrix = (m @ np.append(p, 1.0))[:3]
            assert np.allclose(via_matrix, apply_articulation(p, art, 0.6), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_kinematics_invariants_property(seed):
    rng = np.random.default_rng(seed)
    jt = "prismatic" if rng.uniform() < 0.5 else "revolute"
    art = Articulation(jt, rng.normal(size=3), unit(rng.normal(size=3)),
                       float(rng.uniform(0.1, 3.0)))
    p = rng.normal(size=3)
    q = rng.normal(size=3)
    state = float(rng.uniform(0, art.range))
    assert np.allclose(apply_articulation(p, art, 0.0), p, atol=1e-15)
    pm = apply_articulation(p, art, state)
    qm = apply_articulation(q, art, state)
    assert abs(np.linalg.norm(pm - qm) - np.linalg.norm(p - q)) < 1e-9


def make_plate_candidate(width=0.6, height=1.8, thickness=0.02,
                         rot=None, offset=None):
    """Vertical plate spanning x in [0, w], z in [0, h], y in [-t, 0]."""
    rng = np.random.default_rng(0)
    xs = np.linspace(0, width, 13)
    zs = np.linspace(0, height, 37)
    gx, gz = np.meshgrid(xs, zs)
    front = np.column_stack([gx.ravel(), np.full(gx.size, -thickness), gz.ravel()])
    back = np.column_stack([gx.ravel(), np.zeros(gx.size), gz.ravel()])
    verts = np.vstack([front, back])
    n = len(xs) * len(zs)
    faces = []
    cols = len(xs)
    for i in range(len(zs) - 1):
        for j in range(cols - 1):
            a = i * cols + j
            faces.append((a, a + 1, a + cols))
            faces.append((a + 1, a + cols + 1, a + cols))
    faces = np.array(faces, np.int64)
    if rot is not None:
        verts = verts @ rot.T
    if offset is not None:
        verts = verts + offset
    mesh = TriMesh(verts, faces, np.full((len(verts), 3), 0.5))
    normal = np.array([0.0, 1.0, 0.0]) if rot is None else rot @ [0.0, 1.0, 0.0]
    off = float(normal @ verts[n])  # back plane through y=0 points
    plane = Plane(normal, off - 0.0, 0.03)
    return PartCandidate("inst_x", mesh, plane, [SupportView("v0", 0, 1.0)],
                         np.arange(len(faces)), np.arange(len(verts)))


class TestRefine:
    def test_prismatic_snaps_to_front_normal(self):
        cand = make_plate_candidate(width=0.6, height=0.4)
        true_axis = np.array([0.0, -1.0, 0.0])
        tilt = rotation_about_axis(np.array([1.0, 0, 0]), math.radians(8.0)) @ true_axis
        initial = Articulation("prismatic", [0.3, -0.02, 0.2], tilt, 0.4)
        vp = refine_articulation(cand, initial)
        assert np.allclose(vp.articulation.axis, true_axis, atol=1e-9)
        assert np.allclose(vp.articulation.origin, initial.origin)
        assert vp.articulation.range == initial.range
        # orthogonal to the front face
        assert abs(float(vp.articulation.axis @ vp.obb.u1)) < 1e-9
        assert abs(float(vp.articulation.axis @ vp.obb.u2)) < 1e-9

    def test_revolute_door_hinge(self):
        cand = make_plate_candidate(width=0.6, height=1.8, thickness=0.02)
        # true hinge: left vertical edge (x=0), mid-thickness
        true_origin = np.array([0.0, -0.01, 0.9])
        true_axis = np.array([0.0, 0.0, 1.0])
        tilt = rotation_about_axis(np.array([0, 1.0, 0]), math.radians(5.0)) @ true_axis
        initial = Articulation("revolute", true_origin + [0.1, 0, 0], tilt,
                               math.pi / 2)
        vp = refine_articulation(cand, initial)
        assert abs(abs(float(vp.articulation.axis @ true_axis)) - 1.0) < 1e-9
        d = line_line_distance(vp.articulation.origin, vp.articulation.axis,
                               true_origin, true_axis)
        assert d < 0.02

    def test_fixed_point_on_exact_input(self):
        cand = make_plate_candidate(width=0.6, height=1.8)
        vp1 = refine_articulation(
            cand, Articulation("revolute", [0.0, -0.01, 0.9], [0, 0, 1], math.pi / 2))
        vp2 = refine_articulation(cand, vp1.articulation)
        assert np.allclose(vp1.articulation.origin, vp2.articulation.origin, atol=1e-9)
        assert np.allclose(vp1.articulation.axis, vp2.articulation.axis, atol=1e-9)

    def test_refinement_idempotent_generally(self):
        rng = np.random.default_rng(8)
        cand = make_plate_candidate(width=0.5, height=1.2)
        for jt in ("prismatic", "revolute"):
            initial = Articulation(jt, rng.normal(size=3) * 0.2 + [0.2, 0, 0.5],
                                   unit(rng.normal(size=3)), 1.0)
            vp1 = refine_articulation(cand, initial)
            vp2 = refine_articulation(cand, vp1.articulation)
            assert np.allclose(vp1.articulation.axis, vp2.articulation.axis, atol=1e-9)
            assert np.allclose(vp1.articulation.origin, vp2.articulation.origin,
                               atol=1e-9)

    def test_revolute_origin_on_mid_surface(self):
        cand = make_plate_candidate(width=0.5, height=1.2, thickness=0.02)
        initial = Articulation("revolute", [0.0, 0.0, 0.6], [0, 0, 1], math.pi / 2)
        vp = refine_articulation(cand, initial)
        front_center = vp.obb.center - (vp.obb.extents[2] / 2.0) * vp.front_normal
        signed = float((vp.articulation.origin - front_center) @ vp.front_normal)
        assert abs(signed - vp.obb.extents[2] / 2.0) < 1e-9

    def test_sign_minimizes_deviation(self):
        cand = make_plate_candidate(width=0.6, height=0.4)
        rng = np.random.default_rng(9)
        for _ in range(10):
            initial = Articulation("prismatic", [0.3, 0, 0.2],
                                   unit(rng.normal(size=3)), 0.4)
            vp = refine_articulation(cand, initial)
            a = vp.articulation.axis
            ang_pos = math.acos(np.clip(float(initial.axis @ a), -1, 1))
            ang_neg = math.acos(np.clip(float(initial.axis @ -a), -1, 1))
            assert ang_pos <= ang_neg + 1e-12

    def test_rigid_covariance(self):
        rng = np.random.default_rng(10)
        rot = random_rotation(rng)
        # keep the plate approximately vertical: rotate about z only
        ang = 0.9
        rot = np.array([[math.cos(ang), -math.sin(ang), 0],
                        [math.sin(ang), math.cos(ang), 0], [0, 0, 1.0]])
        off = rng.normal(size=3)
        base = make_plate_candidate()
        moved = make_plate_candidate(rot=rot, offset=off)
        initial = Articulation("revolute", [0.0, -0.01, 0.9], [0, 0, 1], math.pi / 2)
        initial_moved = Articulation("revolute", rot @ initial.origin + off,
                                     rot @ initial.axis, math.pi / 2)
        vp = refine_articulation(base, initial)
        vpm = refine_articulation(moved, initial_moved)
        assert np.allclose(rot @ vp.articulation.axis, vpm.articulation.axis,
                           atol=1e-6)
        d = line_line_distance(rot @ vp.articulation.origin + off,
                               rot @ vp.articulation.axis,
                               vpm.articulation.origin, vpm.articulation.axis)
        assert d < 1e-6


def make_mask(shape, box):
    m = np.zeros(shape, bool)
    m[box[0]:box[1], box[2]:box[3]] = True
    return m


class TestFilterCandidate:
    def make_candidate(self):
        cand = make_plate_candidate(width=0.4, height=0.3)
        cand.supporting_views = [SupportView("f0", 0, 1.0)]
        return cand

    def test_identical_masks_pass_hint(self):
        cand = self.make_candidate()
        mask = make_mask((20, 20), (5, 15, 5, 15))
        hint = JointHint("prismatic", np.array([0, 0, 2.0]), np.array([0, 0, 1.0]),
                         0.4, 0.9)
        dets = [
            DetectionRecord("f0", "a", "grounding", mask),
            DetectionRecord("f0", "a", "opd", mask.copy(), hint),
        ]
        pose = Se3Pose.identity()
        art = filter_candidate(cand, dets, {"f0": pose}, 0.5)
        assert art is not None
        assert art.joint_type == "prismatic"
        assert np.allclose(art.axis, [0, 0, 1])
        assert np.allclose(art.origin, [0, 0, 2.0])

    def test_disjoint_masks_discard(self):
        cand = self.make_candidate()
        hint = JointHint("prismatic", np.zeros(3), np.array([0, 0, 1.0]), 0.4, 0.9)
        dets = [
            DetectionRecord("f0", "a", "grounding", make_mask((20, 20), (0, 5, 0, 5))),
            DetectionRecord("f0", "a", "opd", make_mask((20, 20), (10, 20, 10, 20)),
                            hint),
        ]
        assert filter_candidate(cand, dets, {"f0": Se3Pose.identity()}, 0.5) is None

    def test_world_transform_of_hint(self):
        cand = self.make_candidate()
        mask = make_mask((20, 20), (5, 15, 5, 15))
        hint = JointHint("revolute", np.array([0.0, 0.0, 1.0]),
                         np.array([0.0, 1.0, 0.0]), math.pi / 2, 0.9)
        dets = [
            DetectionRecord("f0", "a", "grounding", mask),
            DetectionRecord("f0", "a", "opd", mask.copy(), hint),
        ]
        rng = np.random.default_rng(11)
        rot = random_rotation(rng)
        t = rng.normal(size=3)
        art = filter_candidate(cand, dets, {"f0": Se3Pose(rot, t)}, 0.5)
        assert np.allclose(art.axis, rot @ [0, 1, 0], atol=1e-12)
        assert np.allclose(art.origin, rot @ [0, 0, 1.0] + t, atol=1e-12)

    def test_zero_norm_axis_skipped(self):
        cand = self.make_candidate()
        mask = make_mask((20, 20), (5, 15, 5, 15))
        bad = JointHint("prismatic", np.zeros(3), np.zeros(3), 0.4, 0.9)
        good = JointHint("prismatic", np.zeros(3), np.array([1.0, 0, 0]), 0.4, 0.9)
        dets = [
            DetectionRecord("f0", "a", "grounding", mask),
            DetectionRecord("f0", "a", "opd", mask.copy(), bad),
            DetectionRecord("f0", "a", "opd", mask.copy(), good),
        ]
        art = filter_candidate(cand, dets, {"f0": Se3Pose.identity()}, 0.5)
        assert art is not None
        assert np.allclose(art.axis, [1, 0, 0])

    def test_zero_noise_synthetic_all_validated(self, mixed_scene,
                                                mixed_scene_instances):
        from artiscene.parts import extract_part

        instances, _ = mixed_scene_instances
        poses = {f.frame_id: f.pose for f in mixed_scene.frames}
        gt = {g.part_id: g for g in mixed_scene.ground_truth}
        validated = 0
        for inst in instances:
            cand = extract_part(inst, mixed_scene.mesh, mixed_scene.frames)
            if cand is None:
                continue
            art = filter_candidate(cand, mixed_scene.detections, poses, 0.5)
            assert art is not None
            best = max(gt.values(), key=lambda g: len(
                np.intersect1d(cand.provenance_vertices, g.vertex_indices)))
            angle = math.acos(min(1.0, abs(float(art.axis @ best.articulation.axis))))
            assert angle < 1e-6
            validated += 1
        assert validated == len(mixed_scene.ground_truth)

    def test_mask_iou(self):
        a = make_mask((10, 10), (0, 5, 0, 10))
        b = make_mask((10, 10), (0, 10, 0, 10))
        assert abs(mask_iou(a, b) - 0.5) < 1e-12
        assert mask_iou(np.zeros((5, 5), bool), np.zeros((5, 5), bool)) == 0.0
