"""
Procedural desk-scale truth objects.

Every shape is an icosphere pushed onto a closed surface, either along its
rays (superquadrics) or by a height-dependent radius profile (surfaces of
revolution). Both maps keep the icosphere's topology and orientation, so the
results are connected, closed and outward-wound by construction.

Dimensions are meters and loosely follow common household objects.
"""

from __future__ import annotations

from typing import Callable, Dict, NamedTuple

import numpy as np

from src.geometry.mesh import TriangleMesh, make_icosphere
from src.utils.errors import ParameterError


def _superquadric(unit: np.ndarray, half_axes, exponent: float) -> np.ndarray:
    a = np.asarray(half_axes, dtype=np.float64)
    f = (np.abs(unit / a) ** exponent).sum(axis=1)
    return unit * (f ** (-1.0 / exponent))[:, None]


def _cylinder(unit: np.ndarray, radius: float, half_height: float, exponent: float) -> np.ndarray:
    radial = np.hypot(unit[:, 0], unit[:, 1]) / radius
    f = radial ** exponent + np.abs(unit[:, 2] / half_height) ** exponent
    return unit * (f ** (-1.0 / exponent))[:, None]


def _revolve(unit: np.ndarray, half_height: float, profile: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    s = unit[:, 2]
    p = profile(s)
    return np.stack([unit[:, 0] * p, unit[:, 1] * p, half_height * s], axis=1)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


class ShapeSpec(NamedTuple):
    description: str
    dimensions: str
    build: Callable[[np.ndarray], np.ndarray]


SHAPE_CATALOG: Dict[str, ShapeSpec] = {
    "sphere": ShapeSpec(
        "ball, radius 0.1 m", "r=0.100",
        lambda u: 0.1 * u,
    ),
    "ellipsoid": ShapeSpec(
        "axis-aligned ellipsoid", "a=0.06 b=0.04 c=0.09",
        lambda u: _superquadric(u, (0.06, 0.04, 0.09), 2.0),
    ),
    "rounded_box": ShapeSpec(
        "sugar-box-like rounded cuboid", "0.09 x 0.05 x 0.17",
        lambda u: _superquadric(u, (0.045, 0.025, 0.085), 10.0),
    ),
    "can": ShapeSpec(
        "coffee-can-like rounded cylinder", "d=0.10 h=0.14",
        lambda u: _cylinder(u, 0.05, 0.07, 10.0),
    ),
    "pear": ShapeSpec(
        "pear: wide base, narrowing neck", "d~0.07 h=0.10",
        lambda u: _revolve(u, 0.05, lambda s: 0.034 * (1.0 - 0.3 * s)
                           * (1.0 - 0.15 * np.exp(-((s - 0.35) / 0.25) ** 2))),
    ),
    "bottle": ShapeSpec(
        "wine-bottle-like body with a neck", "d~0.08 h=0.30",
        lambda u: _revolve(u, 0.15, lambda s: 0.014 + 0.026 * _sigmoid((0.25 - s) / 0.07)),
    ),
    "lamp": ShapeSpec(
        "lamp-shade-like tapered dome", "d~0.16 h=0.14",
        lambda u: _revolve(u, 0.07, lambda s: 0.08 * (1.0 - 0.3 * s)),
    ),
}


def make_shape(name: str, subdivisions: int = 4) -> TriangleMesh:
    """Build a catalog shape on an icosphere of the given subdivision level."""
    try:
        spec = SHAPE_CATALOG[name]
    except KeyError:
        raise ParameterError(
            f"unknown shape {name!r}; choose one of {', '.join(sorted(SHAPE_CATALOG))}"
        ) from None
    sphere = make_icosphere(1.0, subdivisions)
    return TriangleMesh(spec.build(sphere.vertices), sphere.faces)
