"""
Attractors: surface evidence points that pull the estimate toward the real
surface. Visual attractors come from the single-view prior, tactile ones from
successful contacts.

Attractor sets serialize to one line per point, `x y z uncertainty source`,
so recorded sessions can be replayed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from src.utils.errors import ParameterError, SessionIOError


class AttractorSource(str, Enum):
    VISUAL = "visual"
    TACTILE = "tactile"


@dataclass(frozen=True, eq=False)
class Attractor:
    position: np.ndarray
    uncertainty: float
    source: AttractorSource

    def __post_init__(self) -> None:
        pos = np.array(self.position, dtype=np.float64).reshape(3)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "uncertainty", float(self.uncertainty))
        object.__setattr__(self, "source", AttractorSource(self.source))
        if not 0.0 <= self.uncertainty <= 1.0:
            raise ParameterError(f"attractor uncertainty must be in [0, 1], got {self.uncertainty}")
        if not np.isfinite(pos).all():
            raise ParameterError("attractor position must be finite")


def stack_attractors(attractors: Sequence[Attractor]) -> Tuple[np.ndarray, np.ndarray]:
    """Positions (N, 3) and uncertainties (N,) as arrays."""
    if not attractors:
        return np.zeros((0, 3)), np.zeros(0)
    positions = np.stack([a.position for a in attractors])
    uncertainties = np.array([a.uncertainty for a in attractors])
    return positions, uncertainties


def count_by_source(attractors: Iterable[Attractor]) -> dict:
    counts = {s.value: 0 for s in AttractorSource}
    for a in attractors:
        counts[a.source.value] += 1
    return counts


def write_attractors(path: str, attractors: Iterable[Attractor]) -> int:
    """Write the line format; returns the number of attractors written."""
    n = 0
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for a in attractors:
                x, y, z = (float(c) for c in a.position)
                f.write(f"{x!r} {y!r} {z!r} {a.uncertainty!r} {a.source.value}\n")
                n += 1
    except OSError as e:
        raise SessionIOError(f"cannot write attractors {path}: {e}") from e
    return n


def read_attractors(path: str) -> List[Attractor]:
    """Inverse of write_attractors. Blank lines and `#` comments are skipped."""
    out: List[Attractor] = []
    try:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 5:
                    raise ParameterError(f"{path}:{line_no}: expected 'x y z uncertainty source'")
                try:
                    out.append(Attractor(
                        position=[float(p) for p in parts[:3]],
                        uncertainty=float(parts[3]),
                        source=parts[4],
                    ))
                except ValueError as e:
                    raise ParameterError(f"{path}:{line_no}: {e}") from e
    except OSError as e:
        raise SessionIOError(f"cannot read attractors {path}: {e}") from e
    return out
