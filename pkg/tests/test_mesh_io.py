import numpy as np
import pandas as pd
import pytest
from pytest import approx, mark

from src.geometry.mesh import make_icosphere
from src.geometry.mesh_io import load_mesh, load_obj, load_ply, save_obj, save_ply, uncertainty_colors, write_field_csv
from src.utils.errors import GeometryError, SessionIOError


def test_obj_round_trip(tmp_path, icosphere2):
    path = tmp_path / "sphere.obj"
    save_obj(str(path), icosphere2)
    loaded = load_mesh(str(path))
    assert np.array_equal(loaded.vertices, icosphere2.vertices)
    assert np.array_equal(loaded.faces, icosphere2.faces)


def test_obj_quads_slashes_and_negative_indices(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text(
        "# unit square and a triangle\n"
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
        "vn 0 0 1\n"
        "f 1/1/1 2/2/1 3/3/1 4/4/1\n"
        "f -4 -3 -1\n"
    )
    mesh = load_obj(str(path))
    assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3], [0, 1, 3]]


def test_obj_errors(tmp_path):
    with pytest.raises(SessionIOError):
        load_obj(str(tmp_path / "missing.obj"))
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 zero\n")
    with pytest.raises(GeometryError):
        load_obj(str(bad))
    empty = tmp_path / "empty.obj"
    empty.write_text("# nothing here\n")
    with pytest.raises(GeometryError):
        load_obj(str(empty))


@mark.parametrize("record", ["v 0 0", "v 1.5", "v"])
def test_obj_short_vertex_is_rejected(tmp_path, record):
    path = tmp_path / "short.obj"
    path.write_text(f"v 0 0 0\nv 1 0 0\n{record}\nf 1 2 3\n")
    with pytest.raises(GeometryError, match=":3: vertex with fewer than 3 coordinates"):
        load_obj(str(path))


def test_load_mesh_rejects_disconnected(tmp_path):
    path = tmp_path / "two.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 5 0 0\nv 6 0 0\nv 5 1 0\nf 1 2 3\nf 4 5 6\n")
    with pytest.raises(GeometryError):
        load_mesh(str(path))


def test_ply_with_uncertainty(tmp_path, icosphere2):
    u = np.linspace(0.0, 1.0, icosphere2.vertex_count)
    path = tmp_path / "snap" / "iter_000.ply"
    save_ply(str(path), icosphere2, u)
    text = path.read_text()
    assert "property float uncertainty" in text
    assert f"element vertex {icosphere2.vertex_count}" in text
    mesh, values = load_ply(str(path))
    assert mesh.vertices == approx(icosphere2.vertices, abs=1e-8)
    assert np.array_equal(mesh.faces, icosphere2.faces)
    assert values == approx(u, abs=1e-6)


def test_ply_without_uncertainty(tmp_path, icosphere2):
    path = tmp_path / "plain.ply"
    save_ply(str(path), icosphere2)
    _, values = load_ply(str(path))
    assert values is None


def test_ply_rejects_wrong_field_length(tmp_path, icosphere2):
    with pytest.raises(GeometryError):
        save_ply(str(tmp_path / "x.ply"), icosphere2, np.zeros(3))


def test_uncertainty_colors():
    colors = uncertainty_colors(np.array([1.0, 0.0, 0.5, 2.0]))
    assert colors.tolist() == [[255, 0, 0], [0, 255, 0], [128, 128, 0], [255, 0, 0]]


def test_field_csv(tmp_path):
    mesh = make_icosphere(1.0, 1)
    values = np.full(mesh.vertex_count, 0.25)
    path = tmp_path / "field.csv"
    write_field_csv(str(path), mesh, values)
    df = pd.read_csv(path)
    assert list(df.columns) == ["vertex", "x", "y", "z", "uncertainty"]
    assert len(df) == mesh.vertex_count
    assert df["uncertainty"].tolist() == [0.25] * mesh.vertex_count
