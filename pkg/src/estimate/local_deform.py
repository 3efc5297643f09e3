"""
Local surface estimate: displace the global (ellipsoid) mesh along its vertex
normals by an interpolant of the attractor residuals.

Each attractor x is projected onto the global mesh, giving a site p, the face
normal n there and a signed displacement d = (x - p) . n (positive for bumps,
negative for dents). A cubic radial basis interpolant with a linear tail,

    F(x) = sum_i w_i |x - p_i|^3 + a0 + a . x,

is fitted so that F(p_i) = d_i, subject to sum w_i = 0 and sum w_i p_i = 0.
The linear system is solved in a frame centered on the sites and scaled by
their spread, then converted back to world weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from src.estimate.template_fit import EllipsoidParams
from src.geometry.mesh import TriangleMesh
from src.geometry.queries import project_point
from src.sensing.attractors import Attractor
from src.utils.errors import NumericalError, ParameterError

KERNEL_EXPONENT = 3
DUPLICATE_RADIUS = 1e-9
REGULARIZATION_FACTOR = 1e-8


@dataclass(frozen=True, eq=False)
class DisplacementSample:
    site: np.ndarray
    normal: np.ndarray
    displacement: float
    uncertainty: float = 0.0


@dataclass(frozen=True, eq=False)
class RbfInterpolant:
    centers: np.ndarray
    weights: np.ndarray
    affine: np.ndarray  # (a0, ax, ay, az)
    kernel_exponent: int = KERNEL_EXPONENT

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        values = self.affine[0] + pts @ self.affine[1:]
        if len(self.centers):
            values = values + (cdist(pts, self.centers) ** self.kernel_exponent) @ self.weights
        return values

    @classmethod
    def constant(cls, value: float) -> "RbfInterpolant":
        return cls(centers=np.zeros((0, 3)), weights=np.zeros(0),
                   affine=np.array([float(value), 0.0, 0.0, 0.0]))


@dataclass(frozen=True)
class DeformConfig:
    """`regularization=None` picks 1e-8 * (mean site spacing)^3 per fit."""

    regularization: Optional[float] = None
    max_displacement_factor: float = 0.5

    def __post_init__(self) -> None:
        if self.regularization is not None and self.regularization < 0:
            raise ParameterError(f"regularization must be >= 0, got {self.regularization}")
        if not self.max_displacement_factor > 0:
            raise ParameterError("max_displacement_factor must be positive")

    def max_displacement(self, params: EllipsoidParams) -> float:
        return self.max_displacement_factor * float(params.semi_axes.min())


def compute_displacement_samples(global_mesh: TriangleMesh, attractors: Sequence[Attractor],
                                 max_displacement: Optional[float] = None) -> List[DisplacementSample]:
    samples = []
    for a in attractors:
        proj = project_point(global_mesh, a.position)
        d = float((a.position - proj.point) @ proj.normal)
        if max_displacement is not None:
            d = float(np.clip(d, -max_displacement, max_displacement))
        samples.append(DisplacementSample(proj.point, proj.normal, d, a.uncertainty))
    return samples


def deduplicate_samples(samples: Sequence[DisplacementSample],
                        radius: float = DUPLICATE_RADIUS) -> List[DisplacementSample]:
    """Drop samples whose site is within `radius` of a more trusted one.

    The survivor of each duplicate group is the sample with the lowest
    uncertainty (lowest index on ties); input order is kept otherwise.
    """
    if len(samples) < 2:
        return list(samples)
    sites = np.stack([s.site for s in samples])
    pairs = cKDTree(sites).query_pairs(radius)
    if not pairs:
        return list(samples)
    neighbors = {i: set() for i in range(len(samples))}
    for i, j in pairs:
        neighbors[i].add(j)
        neighbors[j].add(i)
    kept = []
    dropped = set()
    for i in sorted(range(len(samples)), key=lambda i: (samples[i].uncertainty, i)):
        if i in dropped:
            continue
        kept.append(i)
        dropped |= neighbors[i]
    return [samples[i] for i in sorted(kept)]


def default_regularization(sites: np.ndarray) -> float:
    if len(sites) < 2:
        return 0.0
    dist, _ = cKDTree(sites).query(sites, k=2)
    spacing = float(dist[:, 1].mean())
    return REGULARIZATION_FACTOR * spacing ** 3


def fit_interpolant(samples: Sequence[DisplacementSample], regularization: float) -> RbfInterpolant:
    if not samples:
        raise ParameterError("interpolant needs at least one sample")
    if regularization < 0:
        raise ParameterError(f"regularization must be >= 0, got {regularization}")
    samples = deduplicate_samples(samples)
    sites = np.stack([s.site for s in samples])
    d = np.array([s.displacement for s in samples])
    n = len(sites)

    center = sites.mean(axis=0)
    k = float(np.linalg.norm(sites - center, axis=1).max())
    if not k > 0:
        k = 1.0
    local = (sites - center) / k

    tail = np.hstack([np.ones((n, 1)), local])
    system = np.zeros((n + 4, n + 4))
    system[:n, :n] = cdist(local, local) ** KERNEL_EXPONENT + (regularization / k ** KERNEL_EXPONENT) * np.eye(n)
    system[:n, n:] = tail
    system[n:, :n] = tail.T
    rhs = np.concatenate([d, np.zeros(4)])

    try:
        if np.linalg.matrix_rank(tail) < 4:
            # coplanar or too few sites: the tail is not unique, take the minimum-norm solution
            solution = scipy.linalg.lstsq(system, rhs)[0]
        else:
            solution = scipy.linalg.solve(system, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"interpolation system is singular ({n} sites): {e}") from e
    if not np.isfinite(solution).all():
        raise NumericalError(f"interpolation solve produced non-finite weights ({n} sites)")

    w_local = solution[:n]
    a_local = solution[n:]
    weights = w_local / k ** KERNEL_EXPONENT
    linear = a_local[1:] / k
    affine = np.concatenate([[a_local[0] - linear @ center], linear])
    return RbfInterpolant(centers=sites, weights=weights, affine=affine)


def apply_deformation(global_mesh: TriangleMesh, F: RbfInterpolant, max_displacement: float) -> TriangleMesh:
    """Move every vertex along its normal by F, clamped to +-max_displacement."""
    offsets = np.clip(F(global_mesh.vertices), -max_displacement, max_displacement)
    return global_mesh.with_vertices(global_mesh.vertices + offsets[:, None] * global_mesh.vertex_normals)


def deform_estimate(global_mesh: TriangleMesh, attractors: Sequence[Attractor],
                    params: EllipsoidParams, cfg: DeformConfig):
    """Samples, interpolant and deformed mesh for one reconstruction step."""
    limit = cfg.max_displacement(params)
    samples = compute_displacement_samples(global_mesh, attractors, max_displacement=limit)
    reg = cfg.regularization
    if reg is None:
        reg = default_regularization(np.stack([s.site for s in deduplicate_samples(samples)]))
    F = fit_interpolant(samples, reg)
    return apply_deformation(global_mesh, F, limit), F
