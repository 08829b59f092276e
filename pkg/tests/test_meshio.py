from __future__ import annotations

import numpy as np
import pytest

from artiscene.geom import TriMesh
from artiscene.meshio import (MeshFormatError, load_mesh, save_mesh, save_obj,
                              save_ply_ascii)


@pytest.fixture
def colored_mesh():
    rng = np.random.default_rng(0)
    verts = rng.normal(size=(20, 3))
    faces = np.array([[i, (i + 1) % 20, (i + 7) % 20] for i in range(18)])
    colors = rng.uniform(size=(20, 3))
    return TriMesh(verts, faces, colors)


def test_ply_binary_roundtrip(colored_mesh, tmp_path):
    path = tmp_path / "m.ply"
    save_mesh(colored_mesh, path)
    back = load_mesh(path)
    assert np.allclose(back.vertices, colored_mesh.vertices, atol=1e-6)  # f32 storage
    assert np.array_equal(back.faces, colored_mesh.faces)
    assert np.allclose(back.colors, colored_mesh.colors, atol=1 / 255)


def test_ply_ascii_roundtrip_bit_exact(colored_mesh, tmp_path):
    path = tmp_path / "m.ply"
    save_ply_ascii(colored_mesh, path)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, colored_mesh.vertices)
    assert np.array_equal(back.faces, colored_mesh.faces)


def test_obj_roundtrip_with_colors(colored_mesh, tmp_path):
    path = tmp_path / "m.obj"
    save_obj(colored_mesh, path)
    back = load_mesh(path)
    assert np.allclose(back.vertices, colored_mesh.vertices, rtol=1e-6)
    assert np.array_equal(back.faces, colored_mesh.faces)
    assert back.colors is not None
    assert np.allclose(back.colors, colored_mesh.colors, rtol=1e-5)


def test_obj_quad_triangulation(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_mesh(path)
    assert mesh.n_faces == 2


def test_missing_file():
    with pytest.raises(MeshFormatError):
        load_mesh("/nonexistent/m.ply")


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_bytes(b"not a ply\n")
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_truncated_binary(tmp_path, colored_mesh):
    path = tmp_path / "m.ply"
    save_mesh(colored_mesh, path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_unsupported_extension(tmp_path, colored_mesh):
    with pytest.raises(MeshFormatError):
        save_mesh(colored_mesh, tmp_path / "m.stl")


def test_obj_with_uvs_and_mtl(colored_mesh, tmp_path):
    uvs = np.random.default_rng(1).uniform(size=(colored_mesh.n_faces, 3, 2))
    from PIL import Image

    Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / "t.png")
    save_obj(colored_mesh, tmp_path / "m.obj", uvs=uvs, texture_png="t.png")
    text = (tmp_path / "m.obj").read_text()
    assert "mtllib m.mtl" in text
    assert "vt " in text
    assert (tmp_path / "m.mtl").read_text().count("map_Kd t.png") == 1
    back = load_mesh(tmp_path / "m.obj")  # faces with v/vt indices still parse
    assert back.n_faces == colored_mesh.n_faces
