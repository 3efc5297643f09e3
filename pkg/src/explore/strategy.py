"""
Next-touch selection.

`ours` scores frontier vertices: uncertain vertices (u >= u'_min) with at
least one confident neighbor (u <= u'_max). Each candidate j gets

    total_j = alpha_G * G_j + alpha_U * U_j

where G_j is the mean edge-graph distance from j to every confident vertex,
normalized by its maximum over the candidates, and U_j = u_j. The highest
total wins, lowest vertex index on ties.

`min_u` is the baseline: the globally most uncertain vertex, wherever it is.

`min_u` is a pure argmax. With `skip_failed` set, `ours` also skips the vertices
in `excluded` (probes that just failed on an estimate that has not changed
since); without it a deterministic failure is simply picked again.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import AbstractSet, List, NamedTuple, Tuple

import numpy as np

from src.estimate.uncertainty_field import UncertaintyField
from src.geometry.geodesic import edge_csgraph, pairwise_geodesics
from src.utils.errors import ExplorationComplete, ParameterError, SessionIOError, VitreWarning

SCORE_FIELDS = ["vertex", "G", "U", "total"]


class Strategy(str, Enum):
    OURS = "ours"
    MIN_U = "min_u"


@dataclass(frozen=True)
class ExplorationConfig:
    alpha_G: float = 0.5
    alpha_U: float = 0.5
    u_prime_min: float = 0.6
    u_prime_max: float = 0.45
    strategy: Strategy = Strategy.OURS
    skip_failed: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.alpha_G < 0 or self.alpha_U < 0:
            raise ParameterError("alpha_G and alpha_U must be nonnegative")
        if not self.alpha_G + self.alpha_U > 0:
            raise ParameterError("alpha_G + alpha_U must be positive")
        for name in ("u_prime_min", "u_prime_max"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {value}")
        if self.u_prime_max > self.u_prime_min:
            warnings.warn(
                f"confident band (u <= {self.u_prime_max}) overlaps the candidate band "
                f"(u >= {self.u_prime_min})",
                VitreWarning, stacklevel=3,
            )


class CandidateScore(NamedTuple):
    vertex_index: int
    G: float
    U: float
    total: float


def _confident_neighbor_mask(mesh, confident: np.ndarray) -> np.ndarray:
    adjacency = edge_csgraph(mesh)
    return (adjacency.astype(bool).astype(np.int64) @ confident.astype(np.int64)) > 0


def score_candidates(mesh, field: UncertaintyField, cfg: ExplorationConfig,
                     excluded: AbstractSet[int] = frozenset()) -> List[CandidateScore]:
    """Scores of every frontier vertex, in vertex order."""
    u = np.asarray(field.values)
    confident = u <= cfg.u_prime_max
    mask = (u >= cfg.u_prime_min) & _confident_neighbor_mask(mesh, confident)
    if excluded:
        mask[np.fromiter(excluded, dtype=np.int64)] = False
    candidates = np.flatnonzero(mask)
    if len(candidates) == 0:
        raise ExplorationComplete("no uncertain vertex borders a confident one")

    distances = pairwise_geodesics(mesh, candidates)[:, confident]
    G = distances.mean(axis=1)
    top = float(G.max())
    if top > 0:
        G = G / top
    U = u[candidates]
    total = cfg.alpha_G * G + cfg.alpha_U * U
    return [CandidateScore(int(j), float(g), float(uj), float(s))
            for j, g, uj, s in zip(candidates, G, U, total)]


def select_next_ours(mesh, field: UncertaintyField, cfg: ExplorationConfig,
                     excluded: AbstractSet[int] = frozenset()) -> Tuple[int, List[CandidateScore]]:
    scores = score_candidates(mesh, field, cfg, excluded)
    best = int(np.argmax([s.total for s in scores]))
    return scores[best].vertex_index, scores


def select_next_min_u(mesh, field: UncertaintyField) -> int:
    u = np.asarray(field.values, dtype=np.float64)
    if len(u) == 0:
        raise ParameterError("uncertainty field is empty")
    return int(np.argmax(u))


def select_next(mesh, field: UncertaintyField, cfg: ExplorationConfig,
                excluded: AbstractSet[int] = frozenset()) -> Tuple[int, List[CandidateScore]]:
    """Dispatch on cfg.strategy; the baseline returns no score table and ignores `excluded`."""
    if cfg.strategy is Strategy.MIN_U:
        return select_next_min_u(mesh, field), []
    return select_next_ours(mesh, field, cfg, excluded if cfg.skip_failed else frozenset())


def candidate_pose(mesh, vertex_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Position and vertex normal of the candidate on the current estimate."""
    if not 0 <= vertex_index < len(mesh.vertices):
        raise ParameterError(f"vertex {vertex_index} out of range")
    return mesh.vertices[vertex_index].copy(), mesh.vertex_normals[vertex_index].copy()


def write_scores_csv(path: str, scores: List[CandidateScore]) -> None:
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=SCORE_FIELDS)
            writer.writeheader()
            for s in scores:
                writer.writerow({"vertex": s.vertex_index, "G": f"{s.G:.6f}",
                                 "U": f"{s.U:.6f}", "total": f"{s.total:.6f}"})
    except OSError as e:
        raise SessionIOError(f"cannot write score table {path}: {e}") from e
