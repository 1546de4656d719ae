import math

import numpy as np
import pytest

from conftest import random_symmetric
from riemopt.errors import CapabilityError, ContractViolationError
from riemopt.manifolds import Euclidean, Sphere
from riemopt.problems import (Problem, check_gradient, check_hessian,
                              estimate_lipschitz, lipschitz_samples,
                              rayleigh_problem)


def quadratic_problem(A):
    A = np.asarray(A, dtype=float)
    return Problem(
        manifold=Euclidean(A.shape[0]),
        cost_fn=lambda x: 0.5 * float(x @ (A @ x)),
        ambient_grad=lambda x: A @ x,
        ambient_hess_vec=lambda x, v: A @ v,
        name="quadratic",
    )


def test_rayleigh_grad_examples():
    p = rayleigh_problem(np.diag([1.0, 2.0, 3.0]))
    x = p.manifold.point([1, 0, 0])
    assert np.allclose(p.grad(x).coords, 0.0)  # eigenvector is critical

    p2 = rayleigh_problem(np.array([[0.0, 1.0], [1.0, 0.0]]))
    x2 = p2.manifold.point([1, 0])
    assert np.allclose(p2.grad(x2).coords, [0, 1])


def test_euclidean_grad_is_ambient():
    A = random_symmetric(5, 0)
    p = quadratic_problem(A)
    x = p.manifold.point(np.arange(5.0))
    assert np.array_equal(p.grad(x).coords, A @ x.coords)


def test_grad_is_tangent(rng):
    A = random_symmetric(8, 1)
    p = rayleigh_problem(A)
    for _ in range(10):
        x = p.manifold.random_point(rng)
        g = p.grad(x)
        assert p.manifold.tangency_defect(x, g.coords) < 1e-12


def test_hess_vec_examples():
    p = rayleigh_problem(np.diag([1.0, 2.0, 3.0]))
    x = p.manifold.point([1, 0, 0])
    eta = p.manifold.tangent(x, [0, 1, 0])
    assert np.allclose(p.hess_vec(x, eta).coords, [0, 1, 0])  # (2 - 1) e2

    A = random_symmetric(4, 2)
    q = quadratic_problem(A)
    xe = q.manifold.point(np.ones(4))
    v = q.manifold.tangent(xe, [1.0, -1.0, 2.0, 0.0])
    assert np.allclose(q.hess_vec(xe, v).coords, A @ v.coords)


def test_hess_vec_symmetric(rng):
    p = rayleigh_problem(random_symmetric(10, 3))
    for _ in range(10):
        x = p.manifold.random_point(rng)
        u = p.manifold.random_tangent(x, rng)
        v = p.manifold.random_tangent(x, rng)
        uhv = p.manifold.inner(x, u, p.hess_vec(x, v))
        vhu = p.manifold.inner(x, v, p.hess_vec(x, u))
        assert abs(uhv - vhu) <= 1e-10 * u.norm() * v.norm()


def test_sphere_closed_forms_match_dense_projectors(rng):
    # independent oracle: dense projector matrices built explicitly
    A = random_symmetric(7, 4)
    p = rayleigh_problem(A)
    for _ in range(10):
        x = p.manifold.random_point(rng)
        P = np.eye(7) - np.outer(x.coords, x.coords)
        grad_dense = P @ (A @ x.coords)
        assert np.max(np.abs(p.grad(x).coords - grad_dense)) < 1e-12
        eta = p.manifold.random_tangent(x, rng)
        xAx = float(x.coords @ A @ x.coords)
        hess_dense = P @ (A @ eta.coords) - xAx * eta.coords
        assert np.max(np.abs(p.hess_vec(x, eta).coords - hess_dense)) < 1e-12


def test_missing_hessian_is_capability_error():
    p = Problem(Euclidean(2), lambda x: float(x @ x), lambda x: 2 * x)
    x = p.manifold.point([1.0, 2.0])
    with pytest.raises(CapabilityError):
        p.hess_vec(x, p.manifold.tangent(x, [1.0, 0.0]))


def test_pullback_examples():
    p = quadratic_problem(np.eye(2))
    x = p.manifold.point([0.0, 0.0])
    eta = p.manifold.tangent(x, [3.0, 4.0])
    assert p.pullback(x, eta) == 12.5
    assert p.pullback(x, p.manifold.zero_tangent(x)) == p.cost(x)

    A = random_symmetric(5, 5)
    pr = rayleigh_problem(A)
    rng = np.random.default_rng(0)
    xs = pr.manifold.random_point(rng)
    es = pr.manifold.random_tangent(xs, rng, norm=0.7)
    y = (xs.coords + es.coords) / np.linalg.norm(xs.coords + es.coords)
    assert pr.pullback(xs, es) == pytest.approx(0.5 * y @ A @ y, rel=1e-14)


def test_eval_counters_audit():
    p = rayleigh_problem(np.diag([1.0, 2.0]))
    x = p.manifold.point([0.0, 1.0])
    assert p.counters.snapshot() == {"cost": 0, "grad": 0, "hess": 0}
    p.cost(x)
    p.grad(x)
    p.hess_vec(x, p.manifold.tangent(x, [1.0, 0.0]))
    # hess_vec consumes one gradient eval for the curvature correction
    assert p.counters.snapshot() == {"cost": 1, "grad": 2, "hess": 1}
    p.pullback(x, p.manifold.zero_tangent(x))
    assert p.counters.snapshot()["cost"] == 2


def test_check_gradient_slopes(rng):
    p = rayleigh_problem(random_symmetric(12, 6))
    x = p.manifold.random_point(rng)
    eta = p.manifold.random_tangent(x, rng)
    report = check_gradient(p, x, eta)
    assert 1.8 <= report.slope <= 2.2 and report.passed

    # injected bug: gradient perturbed along the test direction
    bug = Problem(
        manifold=p.manifold,
        cost_fn=p.cost_fn,
        ambient_grad=lambda c, b=p.ambient_grad, d=eta.coords: b(c) + 0.1 * d,
    )
    report = check_gradient(bug, x, eta)
    assert 0.8 <= report.slope <= 1.2 and not report.passed


def test_check_gradient_exact_quadratic():
    A = random_symmetric(6, 7)
    p = quadratic_problem(A)
    rng = np.random.default_rng(1)
    x = p.manifold.random_point(rng)
    eta = p.manifold.random_tangent(x, rng)
    report = check_gradient(p, x, eta)
    # remainder is exactly (t^2/2) eta' A eta
    assert report.slope == pytest.approx(2.0, abs=0.05)


def test_check_hessian_slopes(rng):
    p = rayleigh_problem(random_symmetric(12, 8))
    x = p.manifold.random_point(rng)
    eta = p.manifold.random_tangent(x, rng)
    report = check_hessian(p, x, eta)
    assert 2.8 <= report.slope <= 3.2 and report.passed

    scaled = Problem(
        manifold=p.manifold,
        cost_fn=p.cost_fn,
        ambient_grad=p.ambient_grad,
        ambient_hess_vec=lambda c, v, b=p.ambient_hess_vec: 0.9 * b(c, v),
    )
    report = check_hessian(scaled, x, eta)
    assert 1.8 <= report.slope <= 2.2 and not report.passed


def test_check_hessian_exact_quadratic_sentinel():
    p = quadratic_problem(random_symmetric(5, 9))
    rng = np.random.default_rng(2)
    x = p.manifold.random_point(rng)
    eta = p.manifold.random_tangent(x, rng)
    report = check_hessian(p, x, eta)
    assert report.slope == math.inf and report.passed


def test_check_requires_unit_direction():
    p = rayleigh_problem(np.eye(3))
    x = p.manifold.point([1, 0, 0])
    with pytest.raises(ContractViolationError):
        check_gradient(p, x, p.manifold.tangent(x, [0, 2, 0]))


def test_estimate_lipschitz_quadratic_bounded_by_spectral_norm(rng):
    A = random_symmetric(6, 10)
    p = quadratic_problem(A)
    points = [p.manifold.random_point(rng) for _ in range(3)]
    lg, lh = estimate_lipschitz(p, lipschitz_samples(p, points, rng))
    spectral = float(np.max(np.abs(np.linalg.eigvalsh(A))))  # dense oracle
    assert 0 < lg <= spectral * (1 + 1e-9)
    assert lh < 1e-6  # quadratic: third-order residual is pure rounding


def test_estimate_lipschitz_linear_cost_is_zero(rng):
    p = Problem(Euclidean(4), lambda x: float(x @ [1, 2, 3, 4]),
                lambda x: np.array([1.0, 2.0, 3.0, 4.0]),
                lambda x, v: np.zeros(4))
    x = p.manifold.random_point(rng)
    samples = lipschitz_samples(p, [x], rng)
    lg, _ = estimate_lipschitz(p, samples)
    assert lg <= 1e-9


def test_estimate_lipschitz_stable_across_seeds():
    A = np.diag([1.0, 2.0, 3.0])
    p = rayleigh_problem(A)
    values = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        points = [p.manifold.random_point(rng) for _ in range(100)]
        lg, _ = estimate_lipschitz(
            p, lipschitz_samples(p, points, rng, dirs_per_point=4, max_norm=2.0))
        values.append(lg)
    assert max(values) < math.inf
    assert (max(values) - min(values)) / max(values) < 0.2
    # the pullback curvature of this instance tops out at lam_max - lam_min
    assert max(values) <= 2.0 + 1e-6


def test_estimate_lipschitz_empty_samples():
    p = rayleigh_problem(np.eye(2))
    with pytest.raises(ContractViolationError):
        estimate_lipschitz(p, [])
