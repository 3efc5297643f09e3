import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import integers
from pytest import approx, mark

from src.estimate.template_fit import (
    MAX_MOVE, EllipsoidParams, FitConfig, ellipsoid_loss, fit_ellipsoid, init_params, instantiate_template,
    isotropy_penalty,
    loss_and_gradient, normalize_point, quaternion_from_axis_angle, rotation_matrix, run_fit,
)
from src.geometry.mesh import make_icosphere
from src.sensing.attractors import Attractor
from src.utils.errors import DivergenceError, ParameterError, VitreWarning

TEMPLATE = make_icosphere(1.0, 2)


def _directions(n, seed):
    d = np.random.default_rng(seed).normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def ellipsoid_points(semi_axes, n=200, rotation=(1.0, 0.0, 0.0, 0.0), center=(0.0, 0.0, 0.0), seed=0):
    """Noiseless points on the ellipsoid diag(1/a) R (x - c) = unit vector."""
    local = _directions(n, seed) * np.asarray(semi_axes, dtype=float)
    return local @ rotation_matrix(rotation) + np.asarray(center, dtype=float)


def as_attractors(points, u=0.0):
    return [Attractor(p, u, "visual") for p in points]


@mark.parametrize("x, params, expected", [
    ((0.3, -0.2, 0.1), EllipsoidParams((1, 0, 0, 0), (0.3, -0.2, 0.1), (1, 1, 1)), (0.0, 0.0, 0.0)),
    ((1.0, 0.0, 0.0), EllipsoidParams.identity(), (1.0, 0.0, 0.0)),
    ((2.0, 0.0, 0.0), EllipsoidParams((1, 0, 0, 0), (0, 0, 0), (0.5, 1, 1)), (1.0, 0.0, 0.0)),
])
def test_normalize_point_examples(x, params, expected):
    assert normalize_point(x, params) == approx(np.array(expected))


def test_rotation_matrix_is_orthonormal():
    R = rotation_matrix(quaternion_from_axis_angle((1.0, 2.0, -0.5), 1.1))
    assert R @ R.T == approx(np.eye(3), abs=1e-12)
    assert np.linalg.det(R) == approx(1.0)


def test_loss_examples():
    params = EllipsoidParams((1, 0, 0, 0), (0, 0, 0), 1.0 / np.array([1.0, 2.0, 3.0]))
    assert ellipsoid_loss(as_attractors(ellipsoid_points((1, 2, 3))), params) == approx(0.0, abs=1e-12)
    assert ellipsoid_loss(as_attractors([[0.0, 0.0, 0.0]]), params) == 1.0


def test_confidence_weighting():
    params = EllipsoidParams.identity()
    attractors = [Attractor((0, 0, 0), 1.0, "visual"), Attractor((1, 0, 0), 0.0, "tactile")]
    assert ellipsoid_loss(attractors, params) == 1.0
    assert ellipsoid_loss(attractors, params, confidence_weighting=True) == 0.0


def test_loss_needs_attractors():
    with pytest.raises(ParameterError):
        ellipsoid_loss([], EllipsoidParams.identity())


@settings(max_examples=100, deadline=None)
@given(integers(0, 2**31 - 1))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    positions = rng.normal(size=(int(rng.integers(1, 30)), 3))
    weights = rng.uniform(0.1, 1.0, len(positions))
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q) * rng.uniform(0.8, 1.2)
    theta = np.concatenate([q, rng.normal(size=3) * 0.3, rng.uniform(0.5, 2.0, 3)])

    def loss_at(th):
        return loss_and_gradient(positions, weights, th[:4], th[4:7], th[7:])[0]

    _, g_q, g_t, g_s = loss_and_gradient(positions, weights, theta[:4], theta[4:7], theta[7:])
    analytic = np.concatenate([g_q, g_t, g_s])
    h = 1e-6
    numeric = np.array([
        (loss_at(theta + h * e) - loss_at(theta - h * e)) / (2 * h) for e in np.eye(10)
    ])
    assert np.linalg.norm(analytic - numeric) <= 1e-4 * np.linalg.norm(numeric) + 1e-6


def test_fit_recovers_offset_sphere():
    attractors = as_attractors(ellipsoid_points((1, 1, 1), n=500, center=(1, 2, 3)))
    params = fit_ellipsoid(attractors, init_params(attractors), FitConfig())
    assert params.translation == approx(np.array([1.0, 2.0, 3.0]), abs=0.05)
    assert params.scale == approx(np.ones(3), rel=0.05)


def test_fit_recovers_rotated_ellipsoid():
    q = quaternion_from_axis_angle((0, 0, 1), np.radians(30))
    attractors = as_attractors(ellipsoid_points((1, 2, 3), n=200, rotation=q))
    report = run_fit(attractors, init_params(attractors), FitConfig(max_iterations=5000))
    assert report.final_loss < 1e-3
    assert report.final_loss <= report.initial_loss


def test_fit_at_optimum_stays_put():
    truth = EllipsoidParams(quaternion_from_axis_angle((1, 1, 0), 0.4), (0.1, 0.0, -0.2), (1.0, 0.5, 2.0))
    attractors = as_attractors(ellipsoid_points(truth.semi_axes, rotation=truth.rotation, center=truth.translation))
    report = run_fit(attractors, truth, FitConfig())
    assert report.params.rotation == approx(truth.rotation, abs=1e-9)
    assert report.params.translation == approx(truth.translation, abs=1e-9)
    assert report.params.scale == approx(truth.scale, abs=1e-9)
    assert report.final_loss <= report.initial_loss


def test_fit_never_increases_loss():
    rng = np.random.default_rng(4)
    points = ellipsoid_points((0.05, 0.03, 0.08), n=60, center=(0.3, 0.1, 0.0)) + rng.normal(0, 0.002, (60, 3))
    attractors = as_attractors(points)
    init = init_params(attractors)
    report = run_fit(attractors, init, FitConfig())
    assert report.final_loss <= ellipsoid_loss(attractors, init) * (1 + 1e-9)
    assert ellipsoid_loss(attractors, report.params) == approx(report.final_loss, rel=1e-6, abs=1e-12)


def test_rotation_invariance():
    attractors = as_attractors(ellipsoid_points((1.5, 1.5, 1.5), n=300, center=(0.2, -0.1, 0.3)))
    init = init_params(attractors)
    angle = np.radians(40)
    Q = rotation_matrix(quaternion_from_axis_angle((0, 0, 1), angle))
    rotated = [Attractor(Q @ a.position, a.uncertainty, a.source) for a in attractors]
    rotated_init = EllipsoidParams(
        rotation=(np.cos(angle / 2), 0.0, 0.0, -np.sin(angle / 2)),
        translation=Q @ init.translation,
        scale=init.scale,
    )
    assert ellipsoid_loss(rotated, rotated_init) == approx(ellipsoid_loss(attractors, init), rel=1e-9)
    cfg = FitConfig(max_iterations=2000, convergence_tol=0.0)
    a = run_fit(attractors, init, cfg).final_loss
    b = run_fit(rotated, rotated_init, cfg).final_loss
    assert abs(a - b) < 1e-9


def test_few_attractors_warn():
    attractors = as_attractors([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.warns(VitreWarning):
        fit_ellipsoid(attractors, init_params(attractors), FitConfig(max_iterations=5))


def test_divergence_is_reported():
    attractors = as_attractors(ellipsoid_points((1, 1, 1), n=20))
    blown_up = EllipsoidParams((1, 0, 0, 0), (0, 0, 0), (1e200, 1e200, 1e200))
    with pytest.raises(DivergenceError):
        fit_ellipsoid(attractors, blown_up, FitConfig())


def test_round_start_is_refined_as_a_sphere():
    attractors = as_attractors(ellipsoid_points((1, 2, 3), n=200, center=(0.5, 0, 0)))
    init = init_params(attractors)
    report = run_fit(attractors, init, FitConfig(max_iterations=5, isotropic_iterations=5, convergence_tol=0.0))
    s = report.params.scale
    assert s == approx(np.full(3, s[0]), rel=1e-12)
    assert report.params.rotation == approx(init.rotation, abs=1e-12)
    assert report.final_loss <= report.initial_loss


def test_steps_are_capped():
    attractors = as_attractors(ellipsoid_points((1, 1, 1), n=200))
    init = EllipsoidParams((1, 0, 0, 0), (0, 0, 0), (0.2, 0.2, 0.2))
    report = run_fit(attractors, init, FitConfig(max_iterations=3, learning_rate=1.0, momentum=0.0))
    # points lie on the unit sphere, so the local frame is within a few percent of world units
    assert np.abs(report.params.scale - init.scale).max() <= 3 * MAX_MOVE * 1.1


def test_isotropy_penalty_values():
    value, grad = isotropy_penalty((2.0, 2.0, 2.0), 5.0)
    assert value == approx(0.0, abs=1e-24)
    assert grad == approx(np.zeros(3), abs=1e-12)
    assert isotropy_penalty((1.0, 2.0, 4.0), 0.0)[0] == 0.0
    s = np.array([1.0, 2.0, 4.0])
    value, grad = isotropy_penalty(s, 1.0)
    assert value == approx(2 * np.log(2.0) ** 2)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (isotropy_penalty(s + e, 1.0)[0] - isotropy_penalty(s - e, 1.0)[0]) / (2 * h)
        assert grad[k] == approx(fd, rel=1e-6, abs=1e-8)


def _axis_spread(params):
    return float(np.ptp(np.log(params.semi_axes)))


def test_isotropy_weight_keeps_a_cap_round():
    directions = _directions(400, 7)
    cap = directions[directions[:, 0] < -0.9] * 0.05
    attractors = as_attractors(cap)
    held = run_fit(attractors, init_params(attractors), FitConfig(max_iterations=2000, isotropy_weight=5.0))
    assert _axis_spread(held.params) < np.log(1.2)


def test_isotropy_weight_penalizes_elongation():
    attractors = as_attractors(ellipsoid_points((1, 2, 3), n=200))
    init = init_params(attractors)
    free = run_fit(attractors, init, FitConfig(max_iterations=5000))
    held = run_fit(attractors, init, FitConfig(max_iterations=5000, isotropy_weight=1e3))
    assert _axis_spread(free.params) > np.log(2.0)
    assert _axis_spread(held.params) < _axis_spread(free.params) - 0.5


def test_negative_isotropy_settings_are_rejected():
    with pytest.raises(ParameterError):
        FitConfig(isotropy_weight=-1.0)
    with pytest.raises(ParameterError):
        FitConfig(isotropic_iterations=-1)


def test_init_needs_spread():
    with pytest.raises(ParameterError):
        init_params(as_attractors([[1, 1, 1]] * 5))


def test_init_is_modest():
    attractors = as_attractors(ellipsoid_points((1, 1, 1), n=100, center=(5, 0, 0)))
    params = init_params(attractors, 0.75)
    assert params.translation == approx(np.array([5.0, 0.0, 0.0]), abs=0.2)
    assert (params.semi_axes < 1.0).all()
    assert params.rotation.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_instantiate_identity():
    mesh = instantiate_template(TEMPLATE, EllipsoidParams.identity())
    assert mesh.vertices == approx(TEMPLATE.vertices, abs=1e-15)
    assert np.array_equal(mesh.faces, TEMPLATE.faces)


def test_instantiate_reciprocal_scale():
    mesh = instantiate_template(TEMPLATE, EllipsoidParams((1, 0, 0, 0), (0, 0, 0), (0.5, 1, 1)))
    assert np.abs(mesh.vertices[:, 0]).max() == approx(2.0)
    assert np.abs(mesh.vertices[:, 1]).max() == approx(1.0)


@settings(max_examples=30, deadline=None)
@given(integers(0, 2**31 - 1))
def test_instantiate_then_normalize_is_unit(seed):
    rng = np.random.default_rng(seed)
    params = EllipsoidParams(rng.normal(size=4), rng.normal(size=3), rng.uniform(0.2, 5.0, 3))
    y = normalize_point(instantiate_template(TEMPLATE, params).vertices, params)
    assert np.abs(np.linalg.norm(y, axis=1) - 1.0).max() < 1e-9


def test_params_record_round_trip():
    params = EllipsoidParams(quaternion_from_axis_angle((0, 1, 0), 0.3), (0.1, 0.2, 0.3), (10.0, 20.0, 30.0))
    back = EllipsoidParams.from_record(params.to_record())
    assert np.array_equal(back.rotation, params.rotation)
    assert np.array_equal(back.translation, params.translation)
    assert np.array_equal(back.scale, params.scale)


@mark.parametrize("text", ["1 0 0 0 0 0 0 1 1", "1 0 0 0 0 0 0 1 1 x", "1 0 0 0 0 0 0 1 -1 1"])
def test_bad_params_record(text):
    with pytest.raises(ParameterError):
        EllipsoidParams.from_record(text)


@mark.slow
@mark.parametrize("seed", range(20))
def test_recovers_random_ellipsoids(seed):
    rng = np.random.default_rng(seed)
    semi_axes = rng.uniform(0.5, 3.0, 3)
    q = rng.normal(size=4)
    center = rng.uniform(-2.0, 2.0, 3)
    attractors = as_attractors(ellipsoid_points(semi_axes, n=500, rotation=q / np.linalg.norm(q),
                                                center=center, seed=seed))
    cfg = FitConfig(max_iterations=5000, convergence_tol=0.0)
    params = fit_ellipsoid(attractors, init_params(attractors), cfg)
    assert np.linalg.norm(params.translation - center) <= 0.02 * semi_axes.max()
    assert np.sort(params.semi_axes) == approx(np.sort(semi_axes), rel=0.05)
