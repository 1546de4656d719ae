import math

import numpy as np
import pytest

from conftest import random_symmetric
from riemopt.errors import ContractViolationError, NumericalError
from riemopt.gd import GDConfig, GDMode, armijo_search, gd_armijo, gd_fixed_step
from riemopt.manifolds import Euclidean
from riemopt.problems import Problem, rayleigh_problem
from riemopt.traces import GDStatus


def scalar_quadratic():
    return Problem(Euclidean(1), lambda x: 0.5 * float(x @ x),
                   lambda x: x.copy(), lambda x, v: v.copy(), name="half-x-squared")


def linear_problem(n=3):
    c = np.arange(1.0, n + 1.0)
    return Problem(Euclidean(n), lambda x: float(c @ x), lambda x: c.copy(),
                   name="linear")


def test_config_validation():
    with pytest.raises(ContractViolationError):
        GDConfig(eps_g=-1.0)
    with pytest.raises(ContractViolationError):
        GDConfig(eps_g=1e-6, c1=1.0)
    with pytest.raises(ContractViolationError):
        GDConfig(eps_g=1e-6, tau=0.0)
    with pytest.raises(ContractViolationError):
        GDConfig(eps_g=1e-6, mode=GDMode.FIXED_STEP)  # missing L


def test_armijo_boundary_equality_accepted():
    # f(1) - f(0) = 0.5 equals the threshold c1 * t * <-g, eta0> = 0.5:
    # the strict < in the loop means equality accepts with zero backtracks
    p = scalar_quadratic()
    x = p.manifold.point([1.0])
    eta0 = p.manifold.tangent(x, [-1.0])
    cfg = GDConfig(eps_g=1e-9, c1=0.5, tbar=1.0, tau=0.5)
    res = armijo_search(p, x, eta0, cfg)
    assert res.t == 1.0 and res.backtracks == 0
    assert np.allclose(res.candidate.coords, [0.0])


def test_armijo_linear_cost_never_backtracks(rng):
    p = linear_problem()
    cfg = GDConfig(eps_g=1e-9, c1=0.9, tbar=2.0)
    for _ in range(5):
        x = p.manifold.random_point(rng)
        g = p.grad(x)
        res = armijo_search(p, x, -g, cfg)
        assert res.t == cfg.tbar and res.backtracks == 0


def test_armijo_rejects_ascent_direction():
    p = scalar_quadratic()
    x = p.manifold.point([1.0])
    uphill = p.manifold.tangent(x, [1.0])
    with pytest.raises(ContractViolationError):
        armijo_search(p, x, uphill, GDConfig(eps_g=1e-9))


def test_armijo_backtrack_cap_is_numerical_error():
    p = Problem(Euclidean(1), lambda x: float(x[0]) * 0 + 1.0,
                lambda x: np.array([1.0]), name="flat")  # no decrease possible
    x = p.manifold.point([0.0])
    eta0 = p.manifold.tangent(x, [-1.0])
    with pytest.raises(NumericalError):
        armijo_search(p, x, eta0, GDConfig(eps_g=1e-9, c1=0.5))


def test_fixed_step_critical_start_takes_no_steps():
    p = rayleigh_problem(np.diag([1.0, 2.0, 3.0]))
    x0 = p.manifold.point([1, 0, 0])  # eigenvector: gradient is zero
    cfg = GDConfig(eps_g=1e-8, mode=GDMode.FIXED_STEP, L=4.0)
    x, trace = gd_fixed_step(p, x0, cfg)
    assert trace.iterations == 0
    assert trace.status is GDStatus.GRAD_TOLERANCE_MET
    assert np.array_equal(x.coords, x0.coords)


def test_fixed_step_exact_newton_like():
    # L equal to the curvature: x - x = 0, one step to the minimum
    p = scalar_quadratic()
    x0 = p.manifold.point([1.0])
    cfg = GDConfig(eps_g=1e-6, mode=GDMode.FIXED_STEP, L=1.0, debug_checks=True)
    x, trace = gd_fixed_step(p, x0, cfg)
    assert trace.iterations == 1
    assert x.coords[0] == 0.0


def test_fixed_step_rayleigh_respects_iteration_bound():
    from riemopt.problems import estimate_lipschitz, lipschitz_samples
    rng = np.random.default_rng(0)
    A = random_symmetric(20, 42)
    p = rayleigh_problem(A)
    x0 = p.manifold.random_point(rng)
    pts = [x0] + [p.manifold.random_point(rng) for _ in range(3)]
    lg, _ = estimate_lipschitz(p, lipschitz_samples(p, pts, rng, max_norm=2.0))
    L = 1.5 * lg
    cfg = GDConfig(eps_g=1e-4, mode=GDMode.FIXED_STEP, L=L, debug_checks=True)
    x, trace = gd_fixed_step(p, x0, cfg)
    assert trace.status is GDStatus.GRAD_TOLERANCE_MET
    f_star = float(np.linalg.eigvalsh(A)[0]) / 2.0  # dense oracle
    bound = math.ceil(2.0 * (trace.records[0].f - f_star) * L / 1e-4**2)
    assert trace.iterations <= bound
    # trace invariants
    fs = [r.f for r in trace.records]
    assert all(b <= a for a, b in zip(fs, fs[1:]))
    assert trace.records[-1].gradnorm <= 1e-4
    assert all(r.costevals == 1 and r.gradevals == 1 for r in trace.records[:-1])


def test_gd_armijo_converges_to_leftmost_eigenvector():
    rng = np.random.default_rng(3)
    A = random_symmetric(20, 11)
    p = rayleigh_problem(A)
    x0 = p.manifold.random_point(rng)
    cfg = GDConfig(eps_g=1e-8, mode=GDMode.ARMIJO)
    x, trace = gd_armijo(p, x0, cfg)
    assert trace.status is GDStatus.GRAD_TOLERANCE_MET
    lam, vecs = np.linalg.eigh(A)
    angle = math.acos(min(1.0, abs(float(vecs[:, 0] @ x.coords))))
    assert angle <= 1e-4
    # strict decrease while above tolerance
    fs = [r.f for r in trace.records]
    assert all(b < a for a, b in zip(fs[:-1], fs[1:]))


def test_gd_armijo_eval_audit():
    rng = np.random.default_rng(5)
    p = rayleigh_problem(random_symmetric(10, 5))
    x0 = p.manifold.random_point(rng)
    cfg = GDConfig(eps_g=1e-6, mode=GDMode.ARMIJO, c1=0.1, tau=0.5, tbar=1.0)
    before = p.counters.snapshot()
    x, trace = gd_armijo(p, x0, cfg)
    after = p.counters.snapshot()
    steps = trace.records[:-1]
    assert all(r.gradevals == 1 for r in steps)
    assert all(r.costevals == r.backtracks + 1 for r in steps)
    # a-posteriori per-iteration work bound with the measured constant
    L = trace.observed["lipschitz"]
    cap = max(1, 2 + math.ceil(math.log(cfg.tbar * L / (2 * (1 - cfg.c1)))
                               / math.log(1 / cfg.tau)))
    assert all(r.costevals <= cap for r in steps)
    # totals: setup cost/grad eval plus the per-iteration ledger
    assert after["cost"] - before["cost"] == 1 + sum(r.costevals for r in steps)
    assert after["grad"] - before["grad"] == 1 + sum(r.gradevals for r in steps)
    assert after["hess"] == before["hess"]


def test_gd_armijo_step_floor_and_theorem_bound():
    rng = np.random.default_rng(8)
    A = random_symmetric(15, 21)
    p = rayleigh_problem(A)
    x0 = p.manifold.random_point(rng)
    cfg = GDConfig(eps_g=1e-5, mode=GDMode.ARMIJO, c1=1e-4, tau=0.5, tbar=1.0)
    _, trace = gd_armijo(p, x0, cfg)
    L = trace.observed["lipschitz"]
    t_floor = min(cfg.tbar, 2 * cfg.tau * (1 - cfg.c1) / L)
    assert all(r.t >= t_floor * (1 - 1e-12) for r in trace.records[:-1])
    f_star = float(np.linalg.eigvalsh(A)[0]) / 2.0
    bound = math.ceil((trace.records[0].f - f_star)
                      / (cfg.c1 * t_floor * cfg.eps_g**2))
    assert trace.iterations <= bound


def test_non_finite_cost_raises_numerical_error():
    def bad_cost(x):
        return math.nan if x[0] < 0.5 else 0.5 * float(x @ x)

    p = Problem(Euclidean(1), bad_cost, lambda x: x.copy())
    x0 = p.manifold.point([1.0])
    cfg = GDConfig(eps_g=1e-9, mode=GDMode.FIXED_STEP, L=1.0)
    with pytest.raises(NumericalError) as err:
        gd_fixed_step(p, x0, cfg)
    assert err.value.trace is not None


def test_iteration_cap_status():
    p = rayleigh_problem(random_symmetric(12, 2))
    x0 = p.manifold.random_point(np.random.default_rng(1))
    cfg = GDConfig(eps_g=1e-12, mode=GDMode.ARMIJO, max_iters=3)
    _, trace = gd_armijo(p, x0, cfg)
    assert trace.status is GDStatus.ITER_CAP_REACHED
    assert trace.iterations == 3
