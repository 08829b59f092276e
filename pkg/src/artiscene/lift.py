"""Lift 2D instance masks onto the scene mesh and fuse them into 3D instances.

The scene mesh is rasterized per view with a z-buffer (no backface culling,
scans are open surfaces); the front-most faces under each mask form its 3D
projection. Projections are fused by building a face co-occurrence graph and
running Louvain community detection; each community keeps its top-k
supporting views above an IoU threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geom import TriMesh
from .ingest import CalibratedFrame

NEAR_PLANE = 0.01
ADJACENCY_BONUS = 0.01


@dataclass
class FaceVisibilityMap:
    frame_id: str
    face_index: np.ndarray  # (H, W) int32, -1 = background
    depth: np.ndarray       # (H, W) float meters, 0 where background


@dataclass
class MaskProjection:
    frame_id: str
    detection_index: int
    faces: np.ndarray  # sorted scene-mesh face indices
    pixel_count: int


@dataclass(frozen=True)
class SupportView:
    frame_id: str
    detection_index: int
    iou: float


@dataclass
class FusedInstance:
    instance_id: str
    faces: np.ndarray  # sorted scene-mesh face indices
    supporting_views: list[SupportView] = field(default_factory=list)


def _clip_near(tri_cam: np.ndarray, near: float) -> list[np.ndarray]:
    """Clip a camera-space triangle against z = near; returns 0-2 triangles."""
    inside = tri_cam[:, 2] >= near
    n_in = int(inside.sum())
    if n_in == 3:
        return [tri_cam]
    if n_in == 0:
        return []
    verts = []
    for i in range(3):
        a, b = tri_cam[i], tri_cam[(i + 1) % 3]
        ain, bin_ = inside[i], inside[(i + 1) % 3]
        if ain:
            verts.append(a)
        if ain != bin_:
            t = (near - a[2]) / (b[2] - a[2])
            verts.append(a + t * (b - a))
    out = []
    for k in range(1, len(verts) - 1):
        out.append(np.vstack([verts[0], verts[k], verts[k + 1]]))
    return out


def rasterize_view(mesh: TriMesh, frame: CalibratedFrame,
                   near: float = NEAR_PLANE) -> FaceVisibilityMap:
    """Z-buffered perspective rasterization of the mesh under one view.

    Pixels sample at their centers; depth is perspective-correct. Ties go to
    the lower face index (faces are processed in order with a strict depth
    test), so the result is deterministic.
    """
    intr = frame.intrinsics
    w, h = intr.width, intr.height
    face_idx = np.full((h, w), -1, np.int32)
    zbuf = np.full((h, w), np.inf)
    inv = frame.pose.inverse()
    verts_cam = inv.apply(mesh.vertices)
    tris = verts_cam[mesh.faces]  # (M, 3, 3)

    for fi in range(len(tris)):
        for tri in _clip_near(tris[fi], near):
            z = tri[:, 2]
            us = intr.fx * tri[:, 0] / z + intr.cx
            vs = intr.fy * tri[:, 1] / z + intr.cy
            x0 = max(int(np.floor(us.min() - 0.5)), 0)
            x1 = min(int(np.ceil(us.max() + 0.5)), w - 1)
            y0 = max(int(np.floor(vs.min() - 0.5)), 0)
            y1 = min(int(np.ceil(vs.max() + 0.5)), h - 1)
            if x1 < x0 or y1 < y0:
                continue
            area = (us[1] - us[0]) * (vs[2] - vs[0]) - (us[2] - us[0]) * (vs[1] - vs[0])
            if abs(area) < 1e-12:
                continue
            px, py = np.meshgrid(np.arange(x0, x1 + 1) + 0.5,
                                 np.arange(y0, y1 + 1) + 0.5)
            w0 = ((us[1] - px) * (vs[2] - py) - (us[2] - px) * (vs[1] - py)) / area
            w1 = ((us[2] - px) * (vs[0] - py) - (us[0] - px) * (vs[2] - py)) / area
            w2 = 1.0 - w0 - w1
            cover = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            if not cover.any():
                continue
            inv_z = w0 / z[0] + w1 / z[1] + w2 / z[2]
            depth = np.where(inv_z > 0, 1.0 / np.maximum(inv_z, 1e-12), np.inf)
            sub_z = zbuf[y0:y1 + 1, x0:x1 + 1]
            win = cover & (depth < sub_z)
            if not win.any():
                continue
            sub_z[win] = depth[win]
            face_idx[y0:y1 + 1, x0:x1 + 1][win] = fi

    depth_out = np.where(np.isfinite(zbuf), zbuf, 0.0)
    return FaceVisibilityMap(frame.frame_id, face_idx, depth_out)


def fill_mask_holes(mask: np.ndarray) -> np.ndarray:
    """Flip interior zero-regions to one (regions not reachable from the border)."""
    return ndimage.binary_fill_holes(np.asarray(mask, bool))


def project_mask(vis: FaceVisibilityMap, mask: np.ndarray,
                 detection_index: int = -1, min_pixels: int = 3) -> MaskProjection:
    """Front-most faces covered by the (hole-filled) mask.

    Faces supported by fewer than min_pixels mask-on pixels are dropped.
    An empty projection is a valid result; callers discard it.
    """
    if mask.shape != vis.face_index.shape:
        raise ValueError("mask dimensions do not match the visibility raster")
    filled = fill_mask_holes(mask)
    ids = vis.face_index[filled]
    ids = ids[ids >= 0]
    if ids.size == 0:
        return MaskProjection(vis.frame_id, detection_index, np.zeros(0, np.int64), 0)
    uniq, counts = np.unique(ids, return_counts=True)
    keep = uniq[counts >= min_pixels]
    return MaskProjection(vis.frame_id, detection_index,
                          keep.astype(np.int64), int(ids.size))


def face_adjacency_pairs(mesh: TriMesh) -> np.ndarray:
    """(K, 2) array of face index pairs sharing a mesh edge."""
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    owner = np.tile(np.arange(len(f)), 3)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    owner = owner[order]
    same = (np.diff(edges, axis=0) == 0).all(axis=1)
    pairs = []
    i = 0
    n = len(edges)
    while i < n:
        j = i
        while j + 1 < n and same[j]:
            j += 1
        if j > i:
            group = np.sort(owner[i:j + 1])
            for a in range(len(group)):
                for b in range(a + 1, len(group)):
                    if group[a] != group[b]:
                        pairs.append((group[a], group[b]))
        i = j + 1
    if not pairs:
        return np.zeros((0, 2), np.int64)
    return np.unique(np.asarray(pairs, np.int64), axis=0)


def iou_of_sets(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.intersect1d(a, b, assume_unique=True).size
    union = a.size + b.size - inter
    return inter / union if union else 0.0


def fuse_instances(projections: list[MaskProjection], mesh: TriMesh,
                   fuse_iou_threshold: float = 0.5, k: int = 5,
                   seed: int = 0, resolution: float = 1.0) -> list[FusedInstance]:
    """Fuse per-view mask projections into 3D instances via Louvain communities.

    The face graph weights each face pair by how many projections contain
    both, plus a small bonus for mesh-adjacent faces. Faces appearing in
    exactly the same set of projections are structurally identical, so the
    graph is aggregated over these groups before Louvain runs (the quotient
    preserves all edge weights via self-loops and keeps ties deterministic).
    Each resulting community keeps the top-k projections whose face-set IoU
    against the community reaches the threshold; communities with no
    qualifying view are dropped. Deterministic for a fixed seed regardless
    of projection input order.
    """
    import networkx as nx

    if not (0.0 < fuse_iou_threshold <= 1.0):
        raise ValueError("fuse_iou_threshold must be in (0, 1]")
    if k < 1:
        raise ValueError("k must be >= 1")
    projections = sorted((p for p in projections if p.faces.size),
                         key=lambda p: (p.frame_id, p.detection_index))
    if not projections:
        return []

    signature: dict[int, int] = {}
    for pi, proj in enumerate(projections):
        bit = 1 << pi
        for f in proj.faces:
            signature[int(f)] = signature.get(int(f), 0) | bit

    groups: dict[int, list[int]] = {}
    for face in sorted(signature):
        groups.setdefault(signature[face], []).append(face)
    atoms = sorted(groups.values(), key=lambda fs: fs[0])
    atom_of = {}
    for ai, faces in enumerate(atoms):
        for f in faces:
            atom_of[f] = ai
    sizes = np.array([len(fs) for fs in atoms], float)
    sigs = [signature[fs[0]] for fs in atoms]

    graph = nx.Graph()
    graph.add_nodes_from(range(len(atoms)))
    for ai in range(len(atoms)):
        views_a = sigs[ai].bit_count()
        if sizes[ai] > 1 and views_a:
            w = views_a * sizes[ai] * (sizes[ai] - 1) / 2.0
            graph.add_edge(ai, ai, weight=w)
        for bi in range(ai + 1, len(atoms)):
            shared = (sigs[ai] & sigs[bi]).bit_count()
            if shared:
                graph.add_edge(ai, bi, weight=shared * sizes[ai] * sizes[bi])
    for fa, fb in face_adjacency_pairs(mesh):
        fa, fb = int(fa), int(fb)
        if fa in atom_of and fb in atom_of:
            a, b = atom_of[fa], atom_of[fb]
            if graph.has_edge(a, b):
                graph[a][b]["weight"] += ADJACENCY_BONUS
            else:
                graph.add_edge(a, b, weight=ADJACENCY_BONUS)

    communities = nx.community.louvain_communities(
        graph, weight="weight", resolution=resolution, seed=seed)
    face_sets = []
    for comm in communities:
        faces = np.array(sorted(f for ai in comm for f in atoms[ai]), np.int64)
        face_sets.append(faces)
    face_sets.sort(key=lambda c: int(c[0]))

    instances = []
    for comm in face_sets:
        scored = []
        for pi, proj in enumerate(projections):
            iou = iou_of_sets(proj.faces, comm)
            if iou >= fuse_iou_threshold:
                scored.append((-iou, proj.frame_id, proj.detection_index, pi))
        if not scored:
            continue
        scored.sort()
        views = [SupportView(projections[pi].frame_id,
                             projections[pi].detection_index, -neg)
                 for neg, _, _, pi in scored[:k]]
        instances.append(FusedInstance(f"inst_{len(instances):03d}", comm, views))
    return instances
