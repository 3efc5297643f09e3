"""
Per-vertex uncertainty of the estimated mesh.

Untouched vertices hold 1.0. Every attractor lowers the values around its
closest vertex: a breadth-first walk of at most `traverse_threshold` edges,
where each reached vertex receives a candidate value from the attractor's
uncertainty u and its Euclidean distance t to the attractor (in mean edge
lengths):

    literal     u / (1 + t^2)
    complement  1 - (1 - u) / (1 + t^2)

and keeps the minimum over all attractors. In literal mode a neighbor ends up
*less* uncertain than the touched vertex itself; complement mode lets the
evidence fade back toward 1.0 with distance instead.

The field is rebuilt from scratch on every call.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from src.geometry.geodesic import hop_neighborhood
from src.geometry.mesh import TriangleMesh
from src.sensing.attractors import Attractor, stack_attractors
from src.utils.errors import ParameterError


class PropagationMode(str, Enum):
    LITERAL = "literal"
    COMPLEMENT = "complement"


@dataclass(frozen=True)
class PropagationConfig:
    traverse_threshold: int = 5
    mode: PropagationMode = PropagationMode.LITERAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", PropagationMode(self.mode))
        if self.traverse_threshold < 0:
            raise ParameterError(f"traverse_threshold must be >= 0, got {self.traverse_threshold}")


@dataclass(frozen=True, eq=False)
class UncertaintyField:
    values: np.ndarray
    traverse_threshold: int = 5
    propagation_mode: PropagationMode = PropagationMode.LITERAL

    def __len__(self) -> int:
        return len(self.values)


def init_field(mesh: TriangleMesh, cfg: PropagationConfig = PropagationConfig()) -> UncertaintyField:
    return UncertaintyField(np.ones(mesh.vertex_count), cfg.traverse_threshold, cfg.mode)


def proximity_candidate(u: float, t: np.ndarray, mode: PropagationMode) -> np.ndarray:
    weight = 1.0 / (1.0 + t * t)
    if mode is PropagationMode.LITERAL:
        return u * weight
    return 1.0 - (1.0 - u) * weight


def propagate(field: UncertaintyField, mesh: TriangleMesh, attractors: Sequence[Attractor]) -> UncertaintyField:
    """Field recomputed from all-1.0 for the given attractors."""
    if len(field) != mesh.vertex_count:
        raise ParameterError(
            f"field has {len(field)} values for a mesh of {mesh.vertex_count} vertices"
        )
    values = np.ones(mesh.vertex_count)
    if attractors:
        positions, uncertainties = stack_attractors(attractors)
        tree = mesh.memo("kdtree", lambda: cKDTree(mesh.vertices))
        _, nearest = tree.query(positions, k=1)
        unit = mesh.mean_edge_length
        for pos, u, start in zip(positions, uncertainties, nearest):
            reached = np.fromiter(hop_neighborhood(mesh, int(start), field.traverse_threshold).keys(), dtype=np.int64)
            t = np.linalg.norm(mesh.vertices[reached] - pos, axis=1) / unit
            cand = proximity_candidate(float(u), t, field.propagation_mode)
            values[reached] = np.minimum(values[reached], cand)
    np.clip(values, 0.0, 1.0, out=values)
    return UncertaintyField(values, field.traverse_threshold, field.propagation_mode)
