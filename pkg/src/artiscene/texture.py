"""Vertex colors to texture maps: planar-chart unwrapping, baking, gap repair.

Charts are connected face groups split at normal discontinuities over 60
degrees, flattened onto their best-fit plane, and shelf-packed into the
atlas with 2-texel gutters at a uniform texels-per-meter scale. Baking
rasterizes each triangle in atlas space with barycentric vertex-color
interpolation; repair fills uncovered texels from their nearest valid
neighbor and smooths chart interiors without ever crossing chart borders.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse

from .geom import TriMesh
from .lift import face_adjacency_pairs

GUTTER = 2  # texels between chart footprints
CHART_SPLIT_LEVELS = 4


class UnwrapError(RuntimeError):
    """A chart cannot be packed even after recursive splitting."""


@dataclass
class TexturedMesh:
    mesh: TriMesh
    uvs: np.ndarray        # (n_faces, 3, 2) in [0, 1]^2
    texture: np.ndarray    # (S, S, 3) float in [0, 1]
    valid: np.ndarray      # (S, S) bool
    chart_id: np.ndarray   # (S, S) int32, -1 = empty
    texels_per_meter: float


def _chart_components(mesh: TriMesh, angle_deg: float = 60.0) -> list[np.ndarray]:
    """Connected face components, split where face normals disagree > angle."""
    normals = mesh.face_normals()
    pairs = face_adjacency_pairs(mesh)
    cos_tol = math.cos(math.radians(angle_deg))
    keep = [(a, b) for a, b in pairs
            if float(normals[a] @ normals[b]) >= cos_tol]
    n = mesh.n_faces
    if keep:
        arr = np.asarray(keep)
        adj = sparse.csr_matrix((np.ones(len(arr)), (arr[:, 0], arr[:, 1])), shape=(n, n))
        n_comp, labels = sparse.csgraph.connected_components(adj, directed=False)
    else:
        labels = np.arange(n)
        n_comp = n
    return [np.flatnonzero(labels == c) for c in range(n_comp)]


def _flatten_chart(mesh: TriMesh, faces: np.ndarray) -> np.ndarray:
    """2D coordinates (len(faces), 3, 2) by projecting onto the best-fit plane."""
    vids = np.unique(mesh.faces[faces])
    pts = mesh.vertices[vids]
    c = pts.mean(axis=0)
    if len(pts) >= 3:
        _, _, vt = np.linalg.svd(pts - c, full_matrices=False)
        normal = vt[2]
    else:
        normal = np.array([0.0, 0.0, 1.0])
    e1 = np.cross(normal, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 1e-6:
        e1 = np.cross(normal, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    corners = mesh.vertices[mesh.faces[faces]]  # (F, 3, 3)
    flat = np.stack([(corners - c) @ e1, (corners - c) @ e2], axis=-1)
    flat -= flat.reshape(-1, 2).min(axis=0)
    return flat


@dataclass
class _Chart:
    faces: np.ndarray
    flat: np.ndarray  # (F, 3, 2) meters, min corner at (0, 0)

    def size(self) -> np.ndarray:
        return self.flat.reshape(-1, 2).max(axis=0)


def _split_chart(chart: _Chart) -> list[_Chart]:
    """Split along the major axis of the chart's 2D bounding box (at the median)."""
    size = chart.size()
    axis = 0 if size[0] >= size[1] else 1
    centers = chart.flat[:, :, axis].mean(axis=1)
    cut = float(np.median(centers))
    left = centers <= cut
    if left.all() or not left.any():
        half = len(centers) // 2
        order = np.argsort(centers, kind="stable")
        left = np.zeros(len(centers), bool)
        left[order[:half]] = True
    out = []
    for sel in (left, ~left):
        flat = chart.flat[sel].copy()
        flat -= flat.reshape(-1, 2).min(axis=0)
        out.append(_Chart(chart.faces[sel], flat))
    return out


def _shelf_pack(sizes_px: list[tuple[int, int]], atlas: int):
    """Shelf packer; returns texel offsets per chart or None when out of room."""
    order = sorted(range(len(sizes_px)), key=lambda i: (-sizes_px[i][1], i))
    offsets: dict[int, tuple[int, int]] = {}
    x, y = GUTTER, GUTTER
    shelf_h = 0
    for i in order:
        w, h = sizes_px[i]
        if x + w + GUTTER > atlas:
            y += shelf_h + GUTTER
            x = GUTTER
            shelf_h = 0
        if x + w + GUTTER > atlas or y + h + GUTTER > atlas:
            return None
        offsets[i] = (x, y)
        x += w + GUTTER
        shelf_h = max(shelf_h, h)
    return offsets


def unwrap(mesh: TriMesh, texture_size: int = 512) -> tuple[np.ndarray, float]:
    """Compute per-corner UVs; returns (uvs, texels_per_meter).

    texture_size must be a power of two >= 64.
    """
    if texture_size < 64 or texture_size & (texture_size - 1):
        raise ValueError("texture_size must be a power of two >= 64")
    charts = [_Chart(f, _flatten_chart(mesh, f)) for f in _chart_components(mesh)]
    total_area = sum(float(np.prod(np.maximum(c.size(), 1e-6))) for c in charts)
    usable = (texture_size - 2 * GUTTER) ** 2
    scale = math.sqrt(0.6 * usable / max(total_area, 1e-12))

    for _ in range(60):
        # split charts that cannot fit alone at this scale
        level = 0
        while level < CHART_SPLIT_LEVELS:
            oversize = [i for i, c in enumerate(charts)
                        if (c.size() * scale + 2 * GUTTER + 2 > texture_size).any()]
            if not oversize:
                break
            next_charts = []
            for i, c in enumerate(charts):
                if i in oversize:
                    next_charts.extend(_split_chart(c))
                else:
                    next_charts.append(c)
            charts = next_charts
            level += 1
        if any((c.size() * scale + 2 * GUTTER + 2 > texture_size).any() for c in charts):
            scale *= 0.8
            continue
        sizes_px = [tuple(int(math.ceil(s * scale)) + 2 for s in c.size()) for c in charts]
        offsets = _shelf_pack(sizes_px, texture_size)
        if offsets is not None:
            break
        scale *= 0.9
    else:
        raise UnwrapError("charts cannot be packed into the atlas")

    uvs = np.zeros((mesh.n_faces, 3, 2))
    for i, chart in enumerate(charts):
        ox, oy = offsets[i]
        px = chart.flat * scale + np.array([ox + 1.0, oy + 1.0])
        uvs[chart.faces] = px / texture_size
    return uvs, scale


def bake(mesh: TriMesh, uvs: np.ndarray, texture_size: int = 512,
         texels_per_meter: float | None = None) -> TexturedMesh:
    """Rasterize triangles in atlas space; texel color = barycentric vertex blend."""
    if mesh.colors is None:
        raise ValueError("bake requires per-vertex colors")
    size = texture_size
    tex = np.zeros((size, size, 3))
    valid = np.zeros((size, size), bool)
    chart_id = np.full((size, size), -1, np.int32)
    charts = _chart_components(mesh)
    chart_of_face = np.zeros(mesh.n_faces, np.int32)
    for ci, faces in enumerate(charts):
        chart_of_face[faces] = ci

    def claim(xs, ys, cols, fi):
        for x, y, col in zip(xs, ys, cols):
            if 0 <= x < size and 0 <= y < size and not valid[y, x]:
                tex[y, x] = col
                valid[y, x] = True
                chart_id[y, x] = chart_of_face[fi]

    px_uv = np.asarray(uvs, float) * size
    for fi in range(mesh.n_faces):
        tri = px_uv[fi]  # (3, 2)
        cols = mesh.colors[mesh.faces[fi]]
        x0 = max(int(math.floor(tri[:, 0].min())), 0)
        x1 = min(int(math.ceil(tri[:, 0].max())), size - 1)
        y0 = max(int(math.floor(tri[:, 1].min())), 0)
        y1 = min(int(math.ceil(tri[:, 1].max())), size - 1)
        if x1 < x0 or y1 < y0:
            continue
        area = ((tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1]))
        gx, gy = np.meshgrid(np.arange(x0, x1 + 1) + 0.5, np.arange(y0, y1 + 1) + 0.5)
        if abs(area) > 1e-12:
            w0 = ((tri[1, 0] - gx) * (tri[2, 1] - gy)
                  - (tri[2, 0] - gx) * (tri[1, 1] - gy)) / area
            w1 = ((tri[2, 0] - gx) * (tri[0, 1] - gy)
                  - (tri[0, 0] - gx) * (tri[2, 1] - gy)) / area
            w2 = 1.0 - w0 - w1
            cover = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            if cover.any():
                blend = (w0[cover, None] * cols[0] + w1[cover, None] * cols[1]
                         + w2[cover, None] * cols[2])
                ys, xs = np.nonzero(cover)
                sub_valid = valid[y0:y1 + 1, x0:x1 + 1]
                fresh = ~sub_valid[ys, xs]
                tex[ys[fresh] + y0, xs[fresh] + x0] = blend[fresh]
                valid[ys[fresh] + y0, xs[fresh] + x0] = True
                chart_id[ys[fresh] + y0, xs[fresh] + x0] = chart_of_face[fi]
        # conservative edge + corner coverage so slivers and vertices own a texel
        for e in range(3):
            a, b = tri[e], tri[(e + 1) % 3]
            steps = max(2, int(np.ceil(np.linalg.norm(b - a) * 2)))
            ts = np.linspace(0.0, 1.0, steps)
            samples = a[None, :] + ts[:, None] * (b - a)[None, :]
            cols_e = cols[e][None, :] + ts[:, None] * (cols[(e + 1) % 3] - cols[e])[None, :]
            claim(samples[:, 0].astype(int), samples[:, 1].astype(int), cols_e, fi)
    tpm = texels_per_meter if texels_per_meter is not None else float(size)
    return TexturedMesh(mesh, np.asarray(uvs, float), tex, valid, chart_id, tpm)


def repair_and_smooth(tex: TexturedMesh, dilation_steps: int = 4,
                      blur_radius: float = 1.0) -> TexturedMesh:
    """Fill gaps from the nearest valid texel (BFS), then blur within charts.

    The blur is masked per chart footprint, so colors never cross gutters.
    """
    if dilation_steps < 0:
        raise ValueError("dilation_steps must be >= 0")
    size = tex.texture.shape[0]
    color = tex.texture.copy()
    valid = tex.valid.copy()
    chart = tex.chart_id.copy()

    queue = deque((int(y), int(x), 0) for y, x in np.argwhere(valid))
    while queue:
        y, x, d = queue.popleft()
        if d >= dilation_steps:
            continue
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < size and 0 <= nx < size and not valid[ny, nx]:
                valid[ny, nx] = True
                color[ny, nx] = color[y, x]
                chart[ny, nx] = chart[y, x]
                queue.append((ny, nx, d + 1))

    if blur_radius > 0:
        out = color.copy()
        for ci in np.unique(chart):
            if ci < 0:
                continue
            mask = chart == ci
            ys, xs = np.nonzero(mask)
            y0, y1 = ys.min(), ys.max() + 1
            x0, x1 = xs.min(), xs.max() + 1
            sub_mask = mask[y0:y1, x0:x1].astype(float)
            weight = ndimage.gaussian_filter(sub_mask, blur_radius)
            for c in range(3):
                num = ndimage.gaussian_filter(color[y0:y1, x0:x1, c] * sub_mask,
                                              blur_radius)
                vals = np.divide(num, weight, out=np.zeros_like(num),
                                 where=weight > 1e-12)
                region = out[y0:y1, x0:x1, c]
                region[sub_mask > 0] = vals[sub_mask > 0]
        color = out
    return TexturedMesh(tex.mesh, tex.uvs, color, valid, chart, tex.texels_per_meter)


def bake_textured(mesh: TriMesh, texture_size: int = 512,
                  dilation_steps: int = 4, blur_radius: float = 1.0) -> TexturedMesh:
    """unwrap + bake + repair_and_smooth in one call."""
    uvs, tpm = unwrap(mesh, texture_size)
    baked = bake(mesh, uvs, texture_size, tpm)
    return repair_and_smooth(baked, dilation_steps, blur_radius)
