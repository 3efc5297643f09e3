"""
Graph geodesics over the mesh edge graph (Euclidean edge weights).

Shortest paths on edges stand in for exact polyhedral geodesics: the
exploration score only needs a consistent ranking of distances.
"""

from __future__ import annotations

from typing import Iterable

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from src.utils.errors import ParameterError


def _source_list(sources: Iterable[int], n: int) -> list:
    src = sorted({int(s) for s in sources})
    if not src:
        raise ParameterError("geodesic sources must be nonempty")
    if src[0] < 0 or src[-1] >= n:
        raise ParameterError(f"source vertex out of range for {n} vertices")
    return src


def geodesic_distances(mesh, sources: Iterable[int]) -> np.ndarray:
    """Multi-source shortest-path distance from the nearest source to every vertex.

    Unreachable vertices get +inf (cannot happen on a validated mesh).
    """
    n = len(mesh.vertices)
    src = _source_list(sources, n)
    lengths = nx.multi_source_dijkstra_path_length(mesh.edge_graph, src, weight="weight")
    out = np.full(n, np.inf)
    for v, d in lengths.items():
        out[v] = d
    return out


def edge_csgraph(mesh):
    """Symmetric sparse adjacency with edge lengths, memoized on the mesh."""
    def build():
        n = len(mesh.vertices)
        g = mesh.edge_graph
        rows, cols, weights = [], [], []
        for i, j, w in g.edges(data="weight"):
            rows += [i, j]
            cols += [j, i]
            weights += [w, w]
        return coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
    return mesh.memo("csgraph", build)


def pairwise_geodesics(mesh, sources: Iterable[int]) -> np.ndarray:
    """Distance matrix (len(sources), n): one single-source Dijkstra per row."""
    n = len(mesh.vertices)
    src = [int(s) for s in sources]
    if not src:
        raise ParameterError("geodesic sources must be nonempty")
    _source_list(src, n)
    return dijkstra(edge_csgraph(mesh), directed=False, indices=src)


def hop_neighborhood(mesh, vertex: int, max_hops: int) -> dict:
    """Vertices within `max_hops` edges of `vertex`, mapped to their hop count."""
    return nx.single_source_shortest_path_length(mesh.edge_graph, int(vertex), cutoff=max_hops)
