"""Core geometric types and numerics: poses, meshes, OBB fitting, RANSAC planes, raycasting.

All positions are in meters, world frame is right-handed with up = +z.
Types are treated as immutable values; operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-6
UNIT_TOL = 1e-9


class NoPlaneFoundError(RuntimeError):
    """RANSAC found no plane satisfying the requested constraints."""


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a


def unit(v) -> np.ndarray:
    """Normalize to unit length; raises on near-zero vectors."""
    a = as_vec3(v)
    n = float(np.linalg.norm(a))
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero vector")
    return a / n


def is_unit(v, tol: float = UNIT_TOL) -> bool:
    return abs(float(np.linalg.norm(as_vec3(v))) - 1.0) <= tol


@dataclass(frozen=True)
class Se3Pose:
    """Rigid transform (rotation + translation), stored camera/object-to-world."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, float).reshape(3, 3))
        object.__setattr__(self, "translation", as_vec3(self.translation))

    def validate(self, tol: float = 1e-9) -> None:
        r = self.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=tol):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > tol:
            raise ValueError("rotation determinant is not +1")

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, float)
        return pts @ self.rotation.T + self.translation

    def apply_vector(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, float) @ self.rotation.T

    def inverse(self) -> "Se3Pose":
        rt = self.rotation.T
        return Se3Pose(rt, -rt @ self.translation)

    def compose(self, other: "Se3Pose") -> "Se3Pose":
        """Composition self*other: apply `other` first, then `self`."""
        return Se3Pose(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def identity() -> "Se3Pose":
        return Se3Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Se3Pose":
        m = np.asarray(m, float).reshape(4, 4)
        return Se3Pose(m[:3, :3], m[:3, 3])


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera intrinsics; pixel (u, v) with u along width, v along height."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def validate(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside raster")

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        """Project camera-frame points (+z forward) to pixel coordinates."""
        p = np.asarray(points_cam, float)
        z = p[..., 2]
        u = self.fx * p[..., 0] / z + self.cx
        v = self.fy * p[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1)

    def backproject(self, u, v, depth) -> np.ndarray:
        """Pixel + depth (meters along +z) to camera-frame points."""
        x = (np.asarray(u, float) - self.cx) / self.fx * depth
        y = (np.asarray(v, float) - self.cy) / self.fy * depth
        return np.stack([x, y, np.asarray(depth, float)], axis=-1)


@dataclass
class TriMesh:
    """Indexed triangle mesh with optional per-vertex RGB colors in [0, 1]."""

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, np.int64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, float).reshape(-1, 3)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def validate(self) -> None:
        if self.n_faces and (self.faces.min() < 0 or self.faces.max() >= self.n_vertices):
            raise ValueError("face index out of range")
        f = self.faces
        if self.n_faces and (
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        ).any():
            raise ValueError("degenerate face (repeated vertex index)")
        if self.colors is not None and len(self.colors) != self.n_vertices:
            raise ValueError("colors length does not match vertices")

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.faces.copy(),
                       None if self.colors is None else self.colors.copy())

    def transformed(self, pose: Se3Pose) -> "TriMesh":
        return TriMesh(pose.apply(self.vertices), self.faces.copy(),
                       None if self.colors is None else self.colors.copy())

    def face_normals(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        lens = np.linalg.norm(n, axis=1)
        lens[lens < 1e-15] = 1.0
        return n / lens[:, None]

    def submesh(self, face_indices) -> tuple["TriMesh", np.ndarray]:
        """Extract faces by index; returns (mesh, original vertex indices)."""
        fi = np.asarray(sorted(face_indices), np.int64)
        faces = self.faces[fi]
        used = np.unique(faces)
        remap = np.full(self.n_vertices, -1, np.int64)
        remap[used] = np.arange(len(used))
        cols = None if self.colors is None else self.colors[used]
        return TriMesh(self.vertices[used], remap[faces], cols), used

    def drop_vertices(self, drop_mask: np.ndarray) -> "TriMesh":
        """Remove masked vertices and their incident faces, compacting indices."""
        keep = ~np.asarray(drop_mask, bool)
        remap = np.full(self.n_vertices, -1, np.int64)
        remap[keep] = np.arange(int(keep.sum()))
        fkeep = keep[self.faces].all(axis=1)
        cols = None if self.colors is None else self.colors[keep]
        return TriMesh(self.vertices[keep], remap[self.faces[fkeep]], cols)

    def concat(self, other: "TriMesh") -> "TriMesh":
        verts = np.vstack([self.vertices, other.vertices])
        faces = np.vstack([self.faces, other.faces + self.n_vertices])
        if self.colors is None and other.colors is None:
            cols = None
        else:
            a = self.colors if self.colors is not None else np.ones((self.n_vertices, 3))
            b = other.colors if other.colors is not None else np.ones((other.n_vertices, 3))
            cols = np.vstack([a, b])
        return TriMesh(verts, faces, cols)


@dataclass(frozen=True)
class Plane:
    """Finite-thickness plane {x : dot(normal, x) = offset}, slab half-width thickness/2."""

    normal: np.ndarray
    offset: float
    thickness: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "normal", unit(self.normal))
        if self.thickness < 0:
            raise ValueError("thickness must be >= 0")

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, float) @ self.normal - self.offset

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.offset, self.thickness)


@dataclass(frozen=True)
class Obb:
    """Oriented bounding box: axes rows (u1, u2, u3), extents sorted s1 >= s2 >= s3."""

    axes: np.ndarray
    center: np.ndarray
    extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "axes", np.asarray(self.axes, float).reshape(3, 3))
        object.__setattr__(self, "center", as_vec3(self.center))
        object.__setattr__(self, "extents", np.asarray(self.extents, float).reshape(3))

    def validate(self) -> None:
        g = self.axes @ self.axes.T
        if not np.allclose(g, np.eye(3), atol=ORTHO_TOL):
            raise ValueError("obb axes not orthonormal")
        s = self.extents
        if not (s[0] >= s[1] >= s[2] >= 0):
            raise ValueError("obb extents not sorted descending")

    @property
    def u1(self) -> np.ndarray:
        return self.axes[0]

    @property
    def u2(self) -> np.ndarray:
        return self.axes[1]

    @property
    def u3(self) -> np.ndarray:
        return self.axes[2]

    def corners(self) -> np.ndarray:
        """All 8 corners, order: sign bits of (u1, u2, u3)."""
        half = self.extents / 2.0
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return self.center + (signs * half) @ self.axes

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, float) - self.center) @ self.axes.T


def _min_area_rect_angle(pts2d: np.ndarray) -> float:
    """Rotation angle (radians) of the minimum-area bounding rectangle."""
    from scipy.spatial import ConvexHull

    hull = pts2d[ConvexHull(pts2d).vertices]
    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    angles = np.arctan2(edges[:, 1], edges[:, 0]) % (math.pi / 2)
    best_area = math.inf
    best_angle = 0.0
    for a in np.unique(angles):
        c, s = math.cos(a), math.sin(a)
        rot = np.array([[c, s], [-s, c]])
        p = hull @ rot.T
        ext = p.max(axis=0) - p.min(axis=0)
        area = float(ext[0] * ext[1])
        if area < best_area - 1e-15:
            best_area = area
            best_angle = a
    return best_angle


def _refine_degenerate_axes(centered: np.ndarray, axes: np.ndarray,
                            eigvals: np.ndarray) -> np.ndarray:
    """Stabilize PCA axes when eigenvalues are (near-)repeated.

    Repeated covariance eigenvalues leave the eigenbasis arbitrary, which
    breaks rigid invariance of the fitted extents. Within a degenerate 2D
    subspace the basis is re-oriented by the minimum-area rectangle of the
    projected points; a fully isotropic spectrum falls back to a convex-hull
    flush-face search (exact for box-like point sets).
    """
    from scipy.spatial import ConvexHull

    scale = float(eigvals.max()) + 1e-300
    near = np.isclose(eigvals[:, None], eigvals[None, :], rtol=1e-6,
                      atol=1e-9 * scale)
    if near.all():
        # isotropic: try every hull-face normal as the third axis
        try:
            hull = ConvexHull(centered)
        except Exception:
            return axes
        best_vol = math.inf
        best_axes = axes
        seen: list[np.ndarray] = []
        for eq in hull.equations:
            n = eq[:3] / np.linalg.norm(eq[:3])
            if any(abs(float(n @ s)) > 1.0 - 1e-9 for s in seen):
                continue
            seen.append(n)
            e1 = np.cross(n, [1.0, 0.0, 0.0])
            if np.linalg.norm(e1) < 1e-6:
                e1 = np.cross(n, [0.0, 1.0, 0.0])
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(n, e1)
            p2 = centered @ np.vstack([e1, e2]).T
            ang = _min_area_rect_angle(p2)
            c, s = math.cos(ang), math.sin(ang)
            cand = np.vstack([c * e1 + s * e2, -s * e1 + c * e2, n])
            proj = centered @ cand.T
            ext = proj.max(axis=0) - proj.min(axis=0)
            vol = float(np.prod(np.maximum(ext, 1e-12)))
            if vol < best_vol - 1e-15:
                best_vol = vol
                best_axes = cand
        return best_axes
    for i, j in ((0, 1), (1, 2)):
        if near[i, j]:
            e1, e2 = axes[i], axes[j]
            p2 = centered @ np.vstack([e1, e2]).T
            try:
                ang = _min_area_rect_angle(p2)
            except Exception:
                continue
            c, s = math.cos(ang), math.sin(ang)
            axes = axes.copy()
            axes[i] = c * e1 + s * e2
            axes[j] = -s * e1 + c * e2
    return axes


def fit_obb(points) -> Obb:
    """PCA oriented bounding box.

    Axes are covariance eigenvectors reordered by projected extent
    (descending); extents are max-minus-min projections, so every input
    point lies inside the box (up to 1e-9 inflation). Degenerate spectra
    are stabilized so extents stay rigid-invariant. Axis signs follow a
    fixed convention (largest-magnitude component positive) so results are
    deterministic.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    if len(pts) < 4:
        raise ValueError(f"fit_obb needs at least 4 points, got {len(pts)}")
    if np.ptp(pts, axis=0).max() == 0.0:
        raise ValueError("fit_obb: all points identical")
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / len(pts)
    eigvals, vecs = np.linalg.eigh(cov)
    axes = vecs.T  # rows
    axes = _refine_degenerate_axes(centered, axes, eigvals)
    proj = centered @ axes.T
    lo = proj.min(axis=0)
    hi = proj.max(axis=0)
    ext = hi - lo
    order = np.argsort(-ext, kind="stable")
    axes = axes[order]
    ext = ext[order]
    mid = ((lo + hi) / 2.0)[order]
    for i in range(3):
        k = int(np.argmax(np.abs(axes[i])))
        if axes[i][k] < 0:
            axes[i] = -axes[i]
            mid[i] = -mid[i]
    center = mean + mid @ axes
    return Obb(axes, center, np.maximum(ext, 1e-12))


def point_in_obb(p, box: Obb, margin: float = 0.0) -> bool:
    """True iff every local coordinate satisfies |x_k| <= s_k/2 + margin."""
    local = np.abs(box.to_local(as_vec3(p)))
    return bool((local <= box.extents / 2.0 + margin).all())


def points_in_obb(points: np.ndarray, box: Obb, margin: float = 0.0) -> np.ndarray:
    """Vectorized point_in_obb; returns a boolean mask."""
    local = np.abs(box.to_local(points))
    return (local <= box.extents / 2.0 + margin).all(axis=1)


def ransac_plane(
    points,
    thickness: float,
    iters: int = 256,
    seed: int = 0,
    vertical_tol_deg: float | None = None,
) -> tuple[Plane, np.ndarray]:
    """RANSAC slab-plane fit maximizing inlier count.

    A point is an inlier when |signed distance| <= thickness/2. With
    vertical_tol_deg set, candidate planes whose normal deviates from
    horizontal by more than that angle are rejected (a vertical plane has
    a horizontal normal). Ties are broken by smaller RMS inlier distance.
    Deterministic for a fixed seed.

    Returns (plane, inlier index array). Raises NoPlaneFoundError when no
    candidate satisfies the constraints.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    n = len(pts)
    if n < 3:
        raise ValueError("ransac_plane needs at least 3 points")
    if thickness <= 0:
        raise ValueError("thickness must be > 0")
    rng = np.random.default_rng(seed)
    max_nz = math.sin(math.radians(vertical_tol_deg)) if vertical_tol_deg is not None else None

    best_count = -1
    best_rms = math.inf
    best: tuple[Plane, np.ndarray] | None = None
    half = thickness / 2.0
    for _ in range(iters):
        i, j, k = rng.choice(n, size=3, replace=False)
        nvec = np.cross(pts[j] - pts[i], pts[k] - pts[i])
        norm = np.linalg.norm(nvec)
        if norm < 1e-12:
            continue
        nvec = nvec / norm
        if max_nz is not None and abs(nvec[2]) > max_nz + 1e-12:
            continue
        offset = float(nvec @ pts[i])
        d = pts @ nvec - offset
        inl = np.abs(d) <= half
        count = int(inl.sum())
        rms = float(np.sqrt(np.mean(d[inl] ** 2))) if count else math.inf
        if count > best_count or (count == best_count and rms < best_rms):
            best_count = count
            best_rms = rms
            best = (Plane(nvec, offset, thickness), np.flatnonzero(inl))
    if best is None:
        raise NoPlaneFoundError(
            f"no plane candidate within vertical tolerance {vertical_tol_deg} deg")
    return best


def raycast(mesh: TriMesh, origin, direction, min_dist: float = 1e-9):
    """Nearest ray/triangle intersection (barycentric test over all faces).

    Returns (distance, face_index) or None. Hits closer than min_dist are
    ignored; ties resolve to the lowest face index.
    """
    o = as_vec3(origin)
    d = unit(direction)
    v0 = mesh.vertices[mesh.faces[:, 0]]
    e1 = mesh.vertices[mesh.faces[:, 1]] - v0
    e2 = mesh.vertices[mesh.faces[:, 2]] - v0
    h = np.cross(d[None, :], e2)
    a = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(a) > 1e-14
    if not ok.any():
        return None
    f = np.zeros(len(a))
    f[ok] = 1.0 / a[ok]
    s = o - v0
    u = f * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = f * (q @ d)
    t = f * np.einsum("ij,ij->i", e2, q)
    eps = 1e-12
    hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps) & (t > min_dist)
    if not hit.any():
        return None
    idx = np.flatnonzero(hit)
    best = idx[np.argmin(t[idx])]
    return float(t[best]), int(best)


def line_line_distance(o1, a1, o2, a2) -> float:
    """Minimal distance between two infinite lines given by point + unit axis."""
    o1 = as_vec3(o1)
    o2 = as_vec3(o2)
    a1 = as_vec3(a1)
    a2 = as_vec3(a2)
    if abs(float(a1 @ a2)) > 1.0 - 1e-9:
        w = o2 - o1
        return float(np.linalg.norm(w - (w @ a1) * a1))
    c = np.cross(a1, a2)
    return float(abs((o2 - o1) @ c) / np.linalg.norm(c))


def line_segment_distance(o, a, p0, p1) -> float:
    """Shortest distance between the infinite line (o, a) and segment [p0, p1]."""
    o = as_vec3(o)
    a = as_vec3(a)
    p0 = as_vec3(p0)
    p1 = as_vec3(p1)
    u = p1 - p0
    w = p0 - o
    uu = float(u @ u)
    if uu < 1e-18:
        return float(np.linalg.norm(w - (w @ a) * a))
    ua = float(u @ a)
    wa = float(w @ a)
    wu = float(w @ u)
    denom = uu - ua * ua
    if abs(denom) < 1e-15:
        # segment parallel to line: any point gives the same distance
        return float(np.linalg.norm(w - wa * a))
    s = (ua * wa - wu) / denom
    s = min(1.0, max(0.0, s))
    closest = p0 + s * u
    w2 = closest - o
    return float(np.linalg.norm(w2 - (w2 @ a) * a))
