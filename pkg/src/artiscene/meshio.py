"""Mesh file IO: PLY (ascii / binary little-endian) and OBJ, with per-vertex color.

OBJ export supports per-corner UVs plus an MTL + PNG texture for baked meshes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geom import TriMesh


class MeshFormatError(ValueError):
    """Malformed or unsupported mesh file."""


_PLY_DTYPES = {
    "char": "i1", "uchar": "u1", "int8": "i1", "uint8": "u1",
    "short": "i2", "ushort": "u2", "int16": "i2", "uint16": "u2",
    "int": "i4", "uint": "u4", "int32": "i4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def load_mesh(path: str | Path) -> TriMesh:
    path = Path(path)
    if not path.exists():
        raise MeshFormatError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".ply":
        return _load_ply(path)
    if suffix == ".obj":
        return _load_obj(path)
    raise MeshFormatError(f"unsupported mesh format: {path.suffix}")


def save_mesh(mesh: TriMesh, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        _save_ply_binary(mesh, path)
    elif path.suffix.lower() == ".obj":
        save_obj(mesh, path)
    else:
        raise MeshFormatError(f"unsupported mesh format: {path.suffix}")


def _parse_ply_header(f) -> tuple[str, list]:
    magic = f.readline().strip()
    if magic != b"ply":
        raise MeshFormatError("not a PLY file (missing magic)")
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype)|('list', count_t, item_t, name)])
    while True:
        line = f.readline()
        if not line:
            raise MeshFormatError("unexpected end of PLY header")
        tokens = line.decode("ascii", "replace").strip().split()
        if not tokens:
            continue
        if tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
            if fmt not in ("ascii", "binary_little_endian"):
                raise MeshFormatError(f"unsupported PLY format: {fmt}")
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise MeshFormatError("property before element in PLY header")
            if tokens[1] == "list":
                elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
            else:
                elements[-1][2].append((tokens[2], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt is None:
        raise MeshFormatError("PLY header missing format line")
    return fmt, elements


def _load_ply(path: Path) -> TriMesh:
    with open(path, "rb") as f:
        fmt, elements = _parse_ply_header(f)
        data = {}
        for name, count, props in elements:
            if fmt == "ascii":
                data[name] = _read_ply_ascii_element(f, count, props)
            else:
                data[name] = _read_ply_binary_element(f, count, props)
    if "vertex" not in data:
        raise MeshFormatError("PLY file has no vertex element")
    vdata = data["vertex"]
    try:
        verts = np.column_stack([vdata["x"], vdata["y"], vdata["z"]]).astype(float)
    except KeyError as e:
        raise MeshFormatError(f"PLY vertex element missing coordinate {e}")
    colors = None
    if all(c in vdata for c in ("red", "green", "blue")):
        rgb = np.column_stack([vdata["red"], vdata["green"], vdata["blue"]]).astype(float)
        if rgb.max() > 1.0 + 1e-9:
            rgb = rgb / 255.0
        colors = np.clip(rgb, 0.0, 1.0)
    faces = np.zeros((0, 3), np.int64)
    if "face" in data and "__list__" in data["face"]:
        faces = _triangulate(data["face"]["__list__"])
    return TriMesh(verts, faces, colors)


def _read_ply_ascii_element(f, count: int, props) -> dict:
    scalars = [p for p in props if p[0] != "list"]
    has_list = any(p[0] == "list" for p in props)
    out = {name: [] for name, _ in scalars}
    lists = []
    for _ in range(count):
        tokens = f.readline().split()
        if not tokens:
            raise MeshFormatError("truncated PLY ascii body")
        i = 0
        for p in props:
            if p[0] == "list":
                n = int(tokens[i])
                lists.append([int(t) for t in tokens[i + 1:i + 1 + n]])
                i += 1 + n
            else:
                out[p[0]].append(float(tokens[i]))
                i += 1
    result = {k: np.array(v) for k, v in out.items()}
    if has_list:
        result["__list__"] = lists
    return result


def _read_ply_binary_element(f, count: int, props) -> dict:
    if all(p[0] != "list" for p in props):
        dtype = np.dtype([(name, "<" + _PLY_DTYPES[t]) for name, t in props])
        raw = f.read(dtype.itemsize * count)
        if len(raw) != dtype.itemsize * count:
            raise MeshFormatError("truncated PLY binary body")
        arr = np.frombuffer(raw, dtype=dtype)
        return {name: arr[name] for name, _ in props}
    out = {p[0]: [] for p in props if p[0] != "list"}
    lists = []
    for _ in range(count):
        for p in props:
            if p[0] == "list":
                cdt = "<" + _PLY_DTYPES[p[1]]
                n = int(np.frombuffer(f.read(np.dtype(cdt).itemsize), cdt)[0])
                idt = np.dtype("<" + _PLY_DTYPES[p[2]])
                vals = np.frombuffer(f.read(idt.itemsize * n), idt)
                lists.append(vals.astype(np.int64).tolist())
            else:
                dt = np.dtype("<" + _PLY_DTYPES[p[1]])
                out[p[0]].append(np.frombuffer(f.read(dt.itemsize), dt)[0])
    result = {k: np.array(v) for k, v in out.items()}
    result["__list__"] = lists
    return result


def _triangulate(polys: list) -> np.ndarray:
    tris = []
    for poly in polys:
        if len(poly) < 3:
            raise MeshFormatError(f"face with {len(poly)} vertices")
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    return np.asarray(tris, np.int64).reshape(-1, 3)


def _save_ply_binary(mesh: TriMesh, path: Path) -> None:
    n, m = mesh.n_vertices, mesh.n_faces
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {n}",
              "property float x", "property float y", "property float z"]
    if mesh.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [f"element face {m}",
               "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if mesh.colors is not None:
            vdt = np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3)])
            rec = np.empty(n, vdt)
            rec["xyz"] = mesh.vertices.astype("<f4")
            rec["rgb"] = np.clip(np.round(mesh.colors * 255.0), 0, 255).astype("u1")
        else:
            vdt = np.dtype([("xyz", "<f4", 3)])
            rec = np.empty(n, vdt)
            rec["xyz"] = mesh.vertices.astype("<f4")
        f.write(rec.tobytes())
        fdt = np.dtype([("n", "u1"), ("idx", "<i4", 3)])
        frec = np.empty(m, fdt)
        frec["n"] = 3
        frec["idx"] = mesh.faces.astype("<i4")
        f.write(frec.tobytes())


def save_ply_ascii(mesh: TriMesh, path: str | Path) -> None:
    """ASCII PLY writer (float64 coordinates, used where bit-exactness matters)."""
    n, m = mesh.n_vertices, mesh.n_faces
    lines = ["ply", "format ascii 1.0", f"element vertex {n}",
             "property double x", "property double y", "property double z"]
    if mesh.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines += [f"element face {m}", "property list uchar int vertex_indices", "end_header"]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
        if mesh.colors is not None:
            rgb = np.clip(np.round(mesh.colors * 255.0), 0, 255).astype(int)
            for v, c in zip(mesh.vertices, rgb):
                f.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r} "
                        f"{c[0]} {c[1]} {c[2]}\n")
        else:
            for v in mesh.vertices:
                f.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for face in mesh.faces:
            f.write(f"3 {face[0]} {face[1]} {face[2]}\n")


def _load_obj(path: Path) -> TriMesh:
    verts = []
    colors = []
    faces = []
    with open(path) as f:
        for line in f:
            t = line.split()
            if not t:
                continue
            if t[0] == "v":
                verts.append([float(t[1]), float(t[2]), float(t[3])])
                if len(t) >= 7:
                    colors.append([float(t[4]), float(t[5]), float(t[6])])
            elif t[0] == "f":
                idx = [int(p.split("/")[0]) for p in t[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    if not verts:
        raise MeshFormatError(f"OBJ file has no vertices: {path}")
    cols = np.array(colors) if len(colors) == len(verts) else None
    return TriMesh(np.array(verts), np.asarray(faces, np.int64).reshape(-1, 3), cols)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def save_obj(mesh: TriMesh, path: str | Path, uvs: np.ndarray | None = None,
             texture_png: str | None = None) -> None:
    """Write OBJ; vertex colors as v-line extensions, or UVs + MTL when texture given.

    `uvs` has shape (n_faces, 3, 2); `texture_png` is a path relative to the OBJ.
    """
    path = Path(path)
    lines = []
    if uvs is not None and texture_png is not None:
        mtl_name = path.stem + ".mtl"
        lines.append(f"mtllib {mtl_name}")
        mtl = [f"newmtl {path.stem}", "Ka 1 1 1", "Kd 1 1 1", "Ks 0 0 0",
               f"map_Kd {texture_png}"]
        (path.parent / mtl_name).write_text("\n".join(mtl) + "\n")
    if mesh.colors is not None and uvs is None:
        for v, c in zip(mesh.vertices, mesh.colors):
            lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])} "
                         f"{_fmt(c[0])} {_fmt(c[1])} {_fmt(c[2])}")
    else:
        for v in mesh.vertices:
            lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    if uvs is not None:
        uv = np.asarray(uvs, float).reshape(-1, 2)
        for t in uv:
            lines.append(f"vt {_fmt(t[0])} {_fmt(t[1])}")
        if texture_png is not None:
            lines.append(f"usemtl {path.stem}")
        for i, face in enumerate(mesh.faces):
            c = 3 * i
            lines.append(f"f {face[0] + 1}/{c + 1} {face[1] + 1}/{c + 2} "
                         f"{face[2] + 1}/{c + 3}")
    else:
        for face in mesh.faces:
            lines.append(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}")
    path.write_text("\n".join(lines) + "\n")
