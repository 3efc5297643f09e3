import numpy as np
import pytest
from pytest import approx, mark

from src.geometry.mesh import make_icosphere
from src.geometry.shapes import SHAPE_CATALOG, make_shape
from src.utils.errors import ParameterError


@mark.parametrize("name", sorted(SHAPE_CATALOG))
def test_catalog_shapes_are_valid_closed_meshes(name):
    mesh = make_shape(name, 3)
    mesh.validate()
    assert mesh.vertex_count == make_icosphere(1.0, 3).vertex_count
    assert mesh.signed_volume() > 0
    assert np.abs(np.linalg.norm(mesh.vertex_normals, axis=1) - 1.0).max() < 1e-6


@mark.parametrize("name", sorted(SHAPE_CATALOG))
def test_catalog_shapes_are_desk_scale(name):
    extent = np.ptp(make_shape(name, 3).vertices, axis=0)
    assert extent.min() > 0.02
    assert extent.max() < 0.35


def test_sphere_radius():
    mesh = make_shape("sphere", 3)
    assert np.linalg.norm(mesh.vertices, axis=1) == approx(np.full(mesh.vertex_count, 0.1))


def test_rounded_box_fills_its_box():
    extent = np.ptp(make_shape("rounded_box", 4).vertices, axis=0)
    assert extent == approx(np.array([0.09, 0.05, 0.17]), rel=0.02)


def test_unknown_shape():
    with pytest.raises(ParameterError, match="unknown shape"):
        make_shape("teapot")
