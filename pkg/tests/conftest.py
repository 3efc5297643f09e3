import networkx as nx
import numpy as np
import pytest

from src.geometry.mesh import TriangleMesh, make_box, make_icosphere
from src.utils.config import SessionConfig


class PathGraphMesh:
    """Vertices on the x axis joined in a chain; enough of a mesh for graph code."""

    def __init__(self, n: int, spacing: float = 1.0):
        self.vertices = np.column_stack([np.arange(n) * spacing, np.zeros(n), np.zeros(n)])
        self.vertex_normals = np.tile([0.0, 0.0, 1.0], (n, 1))
        self.edge_graph = nx.path_graph(n)
        nx.set_edge_attributes(self.edge_graph, float(spacing), "weight")
        self._memo = {}

    def memo(self, key, factory):
        if key not in self._memo:
            self._memo[key] = factory()
        return self._memo[key]


def floyd_warshall(mesh) -> np.ndarray:
    n = len(mesh.vertices)
    return np.asarray(nx.floyd_warshall_numpy(mesh.edge_graph, nodelist=range(n), weight="weight"))


def _closest_on_segment(p, a, b):
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    return a + t * ab


def closest_on_triangle(p, a, b, c):
    """Plane projection if it falls inside, else the best of the three edges."""
    n = np.cross(b - a, c - a)
    q = p - ((p - a) @ n) / (n @ n) * n
    inside = all(
        np.cross(v1 - v0, q - v0) @ n >= 0
        for v0, v1 in ((a, b), (b, c), (c, a))
    )
    if inside:
        return q
    candidates = [_closest_on_segment(p, a, b), _closest_on_segment(p, b, c), _closest_on_segment(p, c, a)]
    return min(candidates, key=lambda x: np.linalg.norm(p - x))


def brute_force_distance(mesh: TriangleMesh, query) -> float:
    p = np.asarray(query, dtype=np.float64)
    best = np.inf
    for f in mesh.faces:
        a, b, c = mesh.vertices[f]
        best = min(best, float(np.linalg.norm(p - closest_on_triangle(p, a, b, c))))
    return best


def flat_square(size: float = 1.0) -> TriangleMesh:
    v = np.array([[0, 0, 0], [size, 0, 0], [size, size, 0], [0, size, 0]], dtype=float)
    return TriangleMesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture(scope="session")
def icosphere2():
    return make_icosphere(1.0, 2)


@pytest.fixture(scope="session")
def icosphere3():
    return make_icosphere(1.0, 3)


@pytest.fixture(scope="session")
def unit_cube():
    return make_box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@pytest.fixture
def fast_config():
    """Small meshes and sample counts so a session runs in a few seconds."""
    return SessionConfig(
        truth_shape="sphere",
        truth_subdivisions=3,
        template_subdivisions=2,
        chamfer_samples=2000,
        max_iterations=6,
    )
