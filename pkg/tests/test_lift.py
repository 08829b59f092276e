from __future__ import annotations

import numpy as np
import pytest

from artiscene.geom import Intrinsics, Se3Pose, TriMesh, raycast
from artiscene.ingest import CalibratedFrame
from artiscene.lift import (FaceVisibilityMap, MaskProjection, fill_mask_holes,
                            fuse_instances, project_mask, rasterize_view)


def straight_frame(width=32, height=24, focal=20.0) -> CalibratedFrame:
    intr = Intrinsics(focal, focal, width / 2, height / 2, width, height)
    return CalibratedFrame("f0", np.zeros((height, width)), Se3Pose.identity(), intr)


def facing_triangle(z: float, scale: float = 2.0) -> TriMesh:
    return TriMesh(np.array([[-scale, -scale, z], [scale, -scale, z], [0, scale, z]]),
                   np.array([[0, 1, 2]]))


class TestRasterize:
    def test_center_pixel_face_and_depth(self):
        frame = straight_frame()
        mesh = facing_triangle(z=1.5)
        vis = rasterize_view(mesh, frame)
        cy, cx = frame.intrinsics.height // 2, frame.intrinsics.width // 2
        assert vis.face_index[cy, cx] == 0
        assert abs(vis.depth[cy, cx] - 1.5) < 1e-4

    def test_zbuffer_nearest_wins(self):
        frame = straight_frame()
        mesh = facing_triangle(2.0).concat(facing_triangle(1.0))
        vis = rasterize_view(mesh, frame)
        covered = vis.face_index >= 0
        assert covered.any()
        assert (vis.face_index[covered] == 1).all()
        assert np.allclose(vis.depth[covered], 1.0, atol=1e-9)

    def test_behind_camera_clipped(self):
        frame = straight_frame()
        vis = rasterize_view(facing_triangle(-1.0), frame)
        assert (vis.face_index == -1).all()

    def test_matches_raycast_oracle(self, mixed_scene, mixed_scene_vis):
        rng = np.random.default_rng(1)
        frame = mixed_scene.frames[2]
        vis = mixed_scene_vis[frame.frame_id]
        ii, jj = np.nonzero(vis.face_index >= 0)
        sel = rng.choice(len(ii), 50, replace=False)
        for i, j in zip(ii[sel], jj[sel]):
            u, v = j + 0.5, i + 0.5
            dc = np.array([(u - frame.intrinsics.cx) / frame.intrinsics.fx,
                           (v - frame.intrinsics.cy) / frame.intrinsics.fy, 1.0])
            norm = float(np.linalg.norm(dc))
            hit = raycast(mixed_scene.mesh, frame.pose.translation,
                          frame.pose.rotation @ (dc / norm))
            assert hit is not None
            assert hit[1] == vis.face_index[i, j]
            assert abs(hit[0] / norm - vis.depth[i, j]) < 1e-4


class TestProjectMask:
    def make_vis(self):
        face = np.full((10, 10), -1, np.int32)
        face[2:8, 2:5] = 0
        face[2:8, 5:8] = 1
        depth = np.where(face >= 0, 1.0, 0.0)
        return FaceVisibilityMap("f0", face, depth)

    def test_all_ones_mask(self):
        vis = self.make_vis()
        proj = project_mask(vis, np.ones((10, 10), bool), 0)
        assert set(proj.faces.tolist()) == {0, 1}

    def test_all_zeros_mask(self):
        vis = self.make_vis()
        proj = project_mask(vis, np.zeros((10, 10), bool), 0)
        assert proj.faces.size == 0

    def test_annulus_hole_filled(self):
        vis = self.make_vis()
        mask = np.zeros((10, 10), bool)
        mask[2:8, 2:8] = True
        mask[4:6, 4:6] = False  # interior hole
        proj = project_mask(vis, mask, 0)
        filled = fill_mask_holes(mask)
        assert filled[4:6, 4:6].all()
        assert set(proj.faces.tolist()) == {0, 1}

    def test_min_pixels_drop(self):
        vis = self.make_vis()
        mask = np.zeros((10, 10), bool)
        mask[2, 2:4] = True  # 2 pixels of face 0
        proj = project_mask(vis, mask, 0, min_pixels=3)
        assert proj.faces.size == 0

    def test_hole_fill_idempotent(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            mask = rng.uniform(size=(16, 16)) < 0.5
            once = fill_mask_holes(mask)
            assert np.array_equal(fill_mask_holes(once), once)

    def test_dimension_mismatch(self):
        vis = self.make_vis()
        with pytest.raises(ValueError):
            project_mask(vis, np.ones((4, 4), bool), 0)


def grid_mesh(n: int) -> TriMesh:
    """Flat n x n quad grid in the z=0 plane."""
    xs, ys = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    verts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros((n + 1) ** 2)])
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b = (i + 1) * (n + 1) + j
            faces.append((a, b, a + 1))
            faces.append((a + 1, b, b + 1))
    return TriMesh(verts.astype(float), np.array(faces))


class TestFuse:
    def test_identical_projections_one_instance(self):
        mesh = grid_mesh(4)
        faces = np.arange(8, dtype=np.int64)
        projs = [MaskProjection("f0", 0, faces, 10),
                 MaskProjection("f1", 1, faces.copy(), 10)]
        out = fuse_instances(projs, mesh, 0.5, 5, seed=0)
        assert len(out) == 1
        assert np.array_equal(out[0].faces, faces)
        assert len(out[0].supporting_views) == 2
        assert all(abs(v.iou - 1.0) < 1e-12 for v in out[0].supporting_views)

    def test_disjoint_projections_two_instances(self):
        mesh = grid_mesh(6)
        # two face groups far apart (no shared mesh edges between them)
        a = np.array([0, 1, 2, 3], np.int64)
        b = np.array([60, 61, 62, 63], np.int64)
        projs = [MaskProjection("f0", 0, a, 5), MaskProjection("f1", 1, b, 5)]
        out = fuse_instances(projs, mesh, 0.5, 5, seed=0)
        assert len(out) == 2
        sets = [set(inst.faces.tolist()) for inst in out]
        assert set(a.tolist()) in sets and set(b.tolist()) in sets

    def test_partition_invariant(self, mixed_scene, mixed_scene_instances):
        instances, _ = mixed_scene_instances
        seen = set()
        for inst in instances:
            s = set(inst.faces.tolist())
            assert not (seen & s)
            seen |= s

    def test_views_sorted_and_thresholded(self, mixed_scene_instances):
        instances, _ = mixed_scene_instances
        for inst in instances:
            ious = [v.iou for v in inst.supporting_views]
            assert all(ious[i] >= ious[i + 1] for i in range(len(ious) - 1))
            assert all(i >= 0.5 for i in ious)
            assert len(inst.supporting_views) <= 5

    def test_order_invariance(self, mixed_scene, mixed_scene_instances):
        instances, projections = mixed_scene_instances
        shuffled = list(projections)
        np.random.default_rng(7).shuffle(shuffled)
        again = fuse_instances(shuffled, mixed_scene.mesh, 0.5, 5, seed=0)
        assert len(again) == len(instances)
        for a, b in zip(instances, again):
            assert a.instance_id == b.instance_id
            assert np.array_equal(a.faces, b.faces)
            assert a.supporting_views == b.supporting_views

    def test_two_adjacent_drawers_separate(self, drawer_scene):
        from artiscene.lift import rasterize_view

        vis = {f.frame_id: rasterize_view(drawer_scene.mesh, f)
               for f in drawer_scene.frames}
        projs = []
        for i, det in enumerate(drawer_scene.detections):
            if det.source != "grounding":
                continue
            p = project_mask(vis[det.frame_id], det.mask, detection_index=i)
            if p.faces.size:
                projs.append(p)
        out = fuse_instances(projs, drawer_scene.mesh, 0.5, 5, seed=0)
        assert len(out) == 2
        for inst in out:
            best = max(
                (len(np.intersect1d(inst.faces, f)) /
                 len(np.union1d(inst.faces, f)))
                for f in drawer_scene.part_faces.values())
            assert best >= 0.9

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            fuse_instances([], grid_mesh(2), 0.0, 5, seed=0)
        with pytest.raises(ValueError):
            fuse_instances([], grid_mesh(2), 0.5, 0, seed=0)
