"""
Global shape estimate: fit an ellipsoid (rotation R, translation t, per-axis
scale s) to the attractor set, then map the unit template sphere onto it.

A point x is mapped to

    y = diag(s) R (x - t)

and lies on the ellipsoid exactly when |y| = 1, so the fitted loss is
sum_i w_i (|y_i|^2 - 1)^2. `s` holds reciprocal semi-axes. R comes from a
quaternion (w, x, y, z) through the usual polynomial formula, which is only a
rotation for unit quaternions; the optimizer renormalizes after every step.

Fitting is gradient descent with an analytic gradient, run in a frame
centered on the attractor centroid and scaled by their spread (an exact
reparameterization, the loss is unchanged). Steps use heavy-ball momentum
and are only accepted when the loss does not increase; a rejected step first
drops the momentum, then halves the step size. No single step moves the
parameters by more than MAX_MOVE in that frame, so the iterate slides into
the nearest valley instead of jumping over a ridge toward the ever-larger
ellipsoids the algebraic loss also favors.

A start with equal scales (the modest init) is first refined as a sphere:
the three scales move together and the rotation stays put for up to
`isotropic_iterations` steps, then everything is released.

`isotropy_weight` adds w * sum_k (log s_k - mean log s)^2 to the loss. It
acts like a fixed number of extra observations that the object is round, so
it settles the axes a single partial view cannot see and fades as attractors
accumulate. With a nonzero weight the monotone quantity is the penalized
loss, not the bare ellipsoid loss.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from src.geometry.mesh import TriangleMesh
from src.sensing.attractors import Attractor, stack_attractors
from src.utils.errors import DivergenceError, ParameterError, VitreWarning

MAX_HALVINGS = 10
STEP_GROWTH = 1.2
MAX_STEP = 1.0
MAX_MOVE = 0.1
MIN_SCALE = 1e-12
MIN_WELL_POSED = 4


@dataclass(frozen=True, eq=False)
class EllipsoidParams:
    rotation: np.ndarray     # unit quaternion (w, x, y, z)
    translation: np.ndarray  # meters
    scale: np.ndarray        # reciprocal semi-axes, 1/meters

    def __post_init__(self) -> None:
        q = np.array(self.rotation, dtype=np.float64).reshape(4)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        s = np.array(self.scale, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(q))
        if not norm > 0 or not np.isfinite(q).all():
            raise ParameterError("rotation quaternion must be finite and nonzero")
        if not (s > 0).all() or not np.isfinite(s).all():
            raise ParameterError(f"scale components must be positive and finite, got {s}")
        if not np.isfinite(t).all():
            raise ParameterError("translation must be finite")
        q = q / norm
        for arr in (q, t, s):
            arr.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", s)

    @classmethod
    def identity(cls) -> "EllipsoidParams":
        return cls(rotation=(1.0, 0.0, 0.0, 0.0), translation=(0.0, 0.0, 0.0), scale=(1.0, 1.0, 1.0))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return rotation_matrix(self.rotation)

    @property
    def semi_axes(self) -> np.ndarray:
        return 1.0 / self.scale

    def to_record(self) -> str:
        """Flat `w x y z tx ty tz sx sy sz` text record."""
        return " ".join(repr(float(v)) for v in np.concatenate([self.rotation, self.translation, self.scale]))

    @classmethod
    def from_record(cls, text: str) -> "EllipsoidParams":
        try:
            values = [float(v) for v in text.split()]
        except ValueError as e:
            raise ParameterError(f"bad params record: {text!r}") from e
        if len(values) != 10:
            raise ParameterError(f"params record needs 10 numbers, got {len(values)}")
        return cls(rotation=values[:4], translation=values[4:7], scale=values[7:])


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 1e-2
    max_iterations: int = 500
    convergence_tol: float = 1e-10
    init_scale_factor: float = 0.75
    momentum: float = 0.9
    confidence_weighting: bool = False
    isotropic_iterations: int = 200
    isotropy_weight: float = 0.0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_iterations < 1:
            raise ParameterError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.convergence_tol < 0:
            raise ParameterError(f"convergence_tol must be >= 0, got {self.convergence_tol}")
        if not self.init_scale_factor > 0:
            raise ParameterError(f"init_scale_factor must be positive, got {self.init_scale_factor}")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.isotropic_iterations < 0:
            raise ParameterError(f"isotropic_iterations must be >= 0, got {self.isotropic_iterations}")
        if self.isotropy_weight < 0:
            raise ParameterError(f"isotropy_weight must be >= 0, got {self.isotropy_weight}")


class FitReport(NamedTuple):
    params: EllipsoidParams
    initial_loss: float
    final_loss: float
    iterations: int
    converged: bool


def quaternion_from_axis_angle(axis, angle: float) -> np.ndarray:
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    a = a / np.linalg.norm(a)
    return np.concatenate([[np.cos(angle / 2.0)], np.sin(angle / 2.0) * a])


def rotation_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _rotation_jacobian(q) -> np.ndarray:
    """dR/dq_k for k = w, x, y, z; shape (4, 3, 3)."""
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    return 2.0 * np.array([
        [[0, -z, y], [z, 0, -x], [-y, x, 0]],
        [[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]],
        [[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]],
        [[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]],
    ])


def normalize_point(x, params: EllipsoidParams) -> np.ndarray:
    """y = diag(s) R (x - t) for one point (3,) or many (N, 3)."""
    pts = np.asarray(x, dtype=np.float64)
    return ((pts - params.translation) @ params.rotation_matrix.T) * params.scale


def loss_and_gradient(positions: np.ndarray, weights: np.ndarray, q, t, s
                      ) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Weighted loss and its gradient w.r.t. (q, t, s), with q not assumed unit."""
    q = np.asarray(q, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    R = rotation_matrix(q)
    d = positions - t
    z = d @ R.T
    y = z * s
    r = np.einsum("ij,ij->i", y, y) - 1.0
    loss = float(np.sum(weights * r * r))

    g_y = (4.0 * weights * r)[:, None] * y
    g_s = np.sum(g_y * z, axis=0)
    h = g_y * s
    g_t = -np.sum(h, axis=0) @ R
    g_R = h.T @ d
    g_q = np.einsum("kab,ab->k", _rotation_jacobian(q), g_R)
    return loss, g_q, g_t, g_s


def _weights(attractors: Sequence[Attractor], confidence_weighting: bool) -> Tuple[np.ndarray, np.ndarray]:
    if not attractors:
        raise ParameterError("ellipsoid fit needs at least one attractor")
    positions, uncertainties = stack_attractors(attractors)
    if confidence_weighting:
        weights = 1.0 - uncertainties
    else:
        weights = np.ones(len(positions))
    return positions, weights


def ellipsoid_loss(attractors: Sequence[Attractor], params: EllipsoidParams,
                   confidence_weighting: bool = False) -> float:
    positions, weights = _weights(attractors, confidence_weighting)
    y = normalize_point(positions, params)
    r = np.einsum("ij,ij->i", y, y) - 1.0
    return float(np.sum(weights * r * r))


def isotropy_penalty(scale, weight: float) -> Tuple[float, np.ndarray]:
    """w * sum_k (log s_k - mean log s)^2 and its gradient w.r.t. s."""
    s = np.asarray(scale, dtype=np.float64).reshape(3)
    if weight == 0:
        return 0.0, np.zeros(3)
    dev = np.log(s) - np.log(s).mean()
    return float(weight * dev @ dev), 2.0 * weight * dev / s


def init_params(attractors: Sequence[Attractor], init_scale_factor: float = 0.75) -> EllipsoidParams:
    """Modest start: a sphere at the centroid, slightly smaller than the attractor spread."""
    positions, _ = _weights(attractors, False)
    center = positions.mean(axis=0)
    spread = float(np.linalg.norm(positions - center, axis=1).max())
    if not spread > 0:
        raise ParameterError("attractors are all at one point; no initial size")
    scale = 1.0 / (init_scale_factor * spread)
    return EllipsoidParams(rotation=(1.0, 0.0, 0.0, 0.0), translation=center, scale=(scale, scale, scale))


def run_fit(attractors: Sequence[Attractor], init: EllipsoidParams, cfg: FitConfig) -> FitReport:
    """Fit with full diagnostics; `fit_ellipsoid` returns only the parameters."""
    positions, weights = _weights(attractors, cfg.confidence_weighting)
    if len(positions) < MIN_WELL_POSED:
        warnings.warn(
            f"ellipsoid fit on {len(positions)} attractors is under-determined",
            VitreWarning, stacklevel=2,
        )
    wsum = float(weights.sum())
    if not wsum > 0:
        raise ParameterError("all attractors have zero fit weight")

    center = positions.mean(axis=0)
    k = float(np.linalg.norm(positions - center, axis=1).max())
    if not k > 0:
        k = 1.0
    local = (positions - center) / k

    theta = np.concatenate([init.rotation, (init.translation - center) / k, init.scale * k])

    def evaluate(th):
        loss, g_q, g_t, g_s = loss_and_gradient(local, weights, th[:4], th[4:7], th[7:])
        penalty, g_p = isotropy_penalty(th[7:], cfg.isotropy_weight)
        return loss, loss + penalty, np.concatenate([g_q, g_t, g_s + g_p])

    def objective(th):
        loss = loss_and_gradient(local, weights, th[:4], th[4:7], th[7:])[0]
        return loss + isotropy_penalty(th[7:], cfg.isotropy_weight)[0]

    def project(th):
        out = th.copy()
        out[:4] /= np.linalg.norm(out[:4])
        out[7:] = np.maximum(np.abs(out[7:]), MIN_SCALE)
        return out

    def descend(theta, budget: int, tied: bool):
        loss, value, grad = evaluate(theta)
        velocity = np.zeros_like(theta)
        step = cfg.learning_rate
        done = 0
        for done in range(1, budget + 1):
            q = theta[:4]
            grad[:4] -= (grad[:4] @ q) * q
            if tied:
                grad[:4] = 0.0
                grad[7:] = grad[7:].mean()
            grad = grad / wsum
            if not np.isfinite(grad).all():
                raise DivergenceError(f"non-finite gradient at iteration {done}")

            accepted = False
            halvings = 0
            cand_value = np.inf
            while halvings <= MAX_HALVINGS:
                move = cfg.momentum * velocity - step * grad
                length = float(np.linalg.norm(move))
                if length > MAX_MOVE:
                    move *= MAX_MOVE / length
                candidate = project(theta + move)
                cand_value = objective(candidate)
                if np.isfinite(cand_value) and cand_value <= value:
                    accepted = True
                    break
                if velocity.any():
                    velocity[:] = 0.0
                else:
                    step *= 0.5
                    halvings += 1

            if not accepted:
                if not np.isfinite(cand_value):
                    raise DivergenceError(
                        f"ellipsoid loss not finite after {MAX_HALVINGS} step halvings; "
                        "lower fit.learning_rate"
                    )
                return theta, loss, done, True

            delta = value - cand_value
            velocity = candidate - theta
            theta = candidate
            step = min(step * STEP_GROWTH, MAX_STEP)
            loss, value, grad = evaluate(theta)
            if delta <= cfg.convergence_tol:
                return theta, loss, done, True
        return theta, loss, done, False

    initial_loss, initial_value, _ = evaluate(theta)
    if not np.isfinite(initial_value):
        raise DivergenceError("ellipsoid loss is not finite at the initial parameters")

    loss = initial_loss
    converged = False
    iterations = 0
    if np.ptp(init.scale) <= 1e-12 * float(init.scale.max()):
        budget = min(cfg.isotropic_iterations, cfg.max_iterations)
        if budget:
            theta, loss, iterations, converged = descend(theta, budget, tied=True)
    if iterations < cfg.max_iterations:
        theta, loss, used, converged = descend(theta, cfg.max_iterations - iterations, tied=False)
        iterations += used

    params = EllipsoidParams(
        rotation=theta[:4],
        translation=center + k * theta[4:7],
        scale=theta[7:] / k,
    )
    return FitReport(params, initial_loss, loss, iterations, converged)


def fit_ellipsoid(attractors: Sequence[Attractor], init: EllipsoidParams, cfg: FitConfig) -> EllipsoidParams:
    return run_fit(attractors, init, cfg).params


def instantiate_template(unit_sphere: TriangleMesh, params: EllipsoidParams) -> TriangleMesh:
    """Map template vertices through the inverse of normalize_point."""
    v = (unit_sphere.vertices / params.scale) @ params.rotation_matrix + params.translation
    return unit_sphere.with_vertices(v)
