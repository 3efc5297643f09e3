"""
Triangle mesh container shared by the ground truth and the evolving estimate.

A TriangleMesh is treated as a value: queries never mutate it, and anything
that moves vertices (template instantiation, deformation) builds a new mesh
through `with_vertices`, which keeps the face topology and recomputes normals.
Derived data (edges, adjacency, edge graph, search structures) is memoized
per instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import networkx as nx
import numpy as np

from src.utils.errors import GeometryError, ParameterError

MAX_SUBDIVISIONS = 6

# Golden-ratio icosahedron, faces wound counter-clockwise seen from outside.
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
ICOSAHEDRON_VERTICES = np.array([
    [-1.0, _PHI, 0.0],
    [1.0, _PHI, 0.0],
    [-1.0, -_PHI, 0.0],
    [1.0, -_PHI, 0.0],
    [0.0, -1.0, _PHI],
    [0.0, 1.0, _PHI],
    [0.0, -1.0, -_PHI],
    [0.0, 1.0, -_PHI],
    [_PHI, 0.0, -1.0],
    [_PHI, 0.0, 1.0],
    [-_PHI, 0.0, -1.0],
    [-_PHI, 0.0, 1.0],
])
ICOSAHEDRON_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def _unit_rows(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=1, keepdims=True)
    out = np.zeros_like(v)
    np.divide(v, n, out=out, where=n > 0)
    return out


@dataclass(eq=False)
class TriangleMesh:
    """Vertices (N, 3) in meters, faces (M, 3) vertex indices, unit vertex normals."""

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: Optional[np.ndarray] = None
    _memo: Dict[str, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise GeometryError(
                f"face index out of range for {len(self.vertices)} vertices"
            )
        if self.vertex_normals is None:
            self.recompute_normals()
        else:
            self.vertex_normals = np.ascontiguousarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)

    # -- memoized derived data -------------------------------------------

    def memo(self, key: str, factory: Callable[[], Any]) -> Any:
        """Return a cached derived value, computing it on first use."""
        if key not in self._memo:
            self._memo[key] = factory()
        return self._memo[key]

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    @property
    def corners(self):
        """The three corner arrays (M, 3) of every face."""
        return (self.vertices[self.faces[:, 0]],
                self.vertices[self.faces[:, 1]],
                self.vertices[self.faces[:, 2]])

    @property
    def face_normals(self) -> np.ndarray:
        def build():
            a, b, c = self.corners
            return _unit_rows(np.cross(b - a, c - a))
        return self.memo("face_normals", build)

    @property
    def face_areas(self) -> np.ndarray:
        def build():
            a, b, c = self.corners
            return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
        return self.memo("face_areas", build)

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (E, 2), lower index first, sorted."""
        def build():
            f = self.faces
            e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
            return np.unique(np.sort(e, axis=1), axis=0)
        return self.memo("edges", build)

    @property
    def edge_lengths(self) -> np.ndarray:
        def build():
            e = self.edges
            return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
        return self.memo("edge_lengths", build)

    @property
    def mean_edge_length(self) -> float:
        return float(self.edge_lengths.mean())

    @property
    def edge_adjacency(self) -> List[List[int]]:
        """Sorted neighbor list per vertex; symmetric by construction."""
        def build():
            adj: List[List[int]] = [[] for _ in range(self.vertex_count)]
            for i, j in self.edges:
                adj[int(i)].append(int(j))
                adj[int(j)].append(int(i))
            return [sorted(a) for a in adj]
        return self.memo("edge_adjacency", build)

    @property
    def edge_graph(self) -> nx.Graph:
        """Edge graph with Euclidean edge lengths as the `weight` attribute."""
        def build():
            g = nx.Graph()
            g.add_nodes_from(range(self.vertex_count))
            g.add_weighted_edges_from(
                (int(i), int(j), float(w)) for (i, j), w in zip(self.edges, self.edge_lengths)
            )
            return g
        return self.memo("edge_graph", build)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices - self.centroid, axis=1).max())

    def signed_volume(self) -> float:
        """Enclosed volume; positive when faces are wound outward."""
        a, b, c = self.corners
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    # -- mutation / derivation -------------------------------------------

    def recompute_normals(self) -> None:
        """Angle-weighted average of incident face normals at each vertex."""
        a, b, c = self.corners
        face_n = _unit_rows(np.cross(b - a, c - a))
        acc = np.zeros_like(self.vertices)
        for p, q, r, col in ((a, b, c, 0), (b, c, a, 1), (c, a, b, 2)):
            e1 = q - p
            e2 = r - p
            angle = np.arctan2(np.linalg.norm(np.cross(e1, e2), axis=1),
                               np.einsum("ij,ij->i", e1, e2))
            np.add.at(acc, self.faces[:, col], face_n * angle[:, None])
        normals = _unit_rows(acc)
        # unreferenced or fully degenerate vertices get a radial fallback
        missing = np.linalg.norm(normals, axis=1) == 0
        if missing.any():
            radial = _unit_rows(self.vertices[missing] - self.vertices.mean(axis=0))
            radial[np.linalg.norm(radial, axis=1) == 0] = (0.0, 0.0, 1.0)
            normals[missing] = radial
        self.vertex_normals = normals
        for key in ("face_normals", "face_areas", "edge_lengths", "edge_graph", "bvh", "kdtree", "csgraph"):
            self._memo.pop(key, None)

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same topology, new vertex positions, normals recomputed."""
        out = TriangleMesh(vertices, self.faces)
        for key in ("edges", "edge_adjacency"):
            if key in self._memo:
                out._memo[key] = self._memo[key]
        return out

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.faces.copy(), self.vertex_normals.copy())

    def validate(self) -> None:
        """Structural checks done at load: nonempty, nonzero area, connected edge graph."""
        if self.vertex_count == 0 or self.face_count == 0:
            raise GeometryError("mesh has no vertices or no faces")
        if not np.isfinite(self.vertices).all():
            raise GeometryError("mesh has non-finite vertex coordinates")
        if self.face_areas.sum() <= 0:
            raise GeometryError("mesh has zero total area")
        if not nx.is_connected(self.edge_graph):
            parts = nx.number_connected_components(self.edge_graph)
            raise GeometryError(f"edge graph is not connected ({parts} components)")


def _subdivide(vertices: np.ndarray, faces: np.ndarray):
    m = len(faces)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    unique, inverse = np.unique(np.sort(e, axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mids = _unit_rows(0.5 * (vertices[unique[:, 0]] + vertices[unique[:, 1]]))
    mid = inverse + len(vertices)
    ab, bc, ca = mid[:m], mid[m:2 * m], mid[2 * m:]
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate([
        np.stack([a, ab, ca], axis=1),
        np.stack([b, bc, ab], axis=1),
        np.stack([c, ca, bc], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ])
    return np.concatenate([vertices, mids]), new_faces


def make_icosphere(radius: float = 1.0, subdivisions: int = 3) -> TriangleMesh:
    """Subdivided icosahedron with 10 * 4**subdivisions + 2 vertices on a sphere."""
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    if int(subdivisions) != subdivisions or not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise ParameterError(
            f"subdivisions must be an integer in [0, {MAX_SUBDIVISIONS}], got {subdivisions}"
        )
    vertices = _unit_rows(ICOSAHEDRON_VERTICES)
    faces = ICOSAHEDRON_FACES.copy()
    for _ in range(int(subdivisions)):
        vertices, faces = _subdivide(vertices, faces)
    vertices = _unit_rows(vertices) * radius
    return TriangleMesh(vertices, faces)


def make_box(lower=(0.0, 0.0, 0.0), upper=(1.0, 1.0, 1.0)) -> TriangleMesh:
    """Axis-aligned box, two outward-wound triangles per side."""
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    corners = np.array([[hi[0] if i & 1 else lo[0],
                         hi[1] if i & 2 else lo[1],
                         hi[2] if i & 4 else lo[2]] for i in range(8)])
    faces = np.array([
        [0, 2, 3], [0, 3, 1],  # z = lo
        [4, 5, 7], [4, 7, 6],  # z = hi
        [0, 1, 5], [0, 5, 4],  # y = lo
        [2, 6, 7], [2, 7, 3],  # y = hi
        [0, 4, 6], [0, 6, 2],  # x = lo
        [1, 3, 7], [1, 7, 5],  # x = hi
    ])
    return TriangleMesh(corners, faces)
