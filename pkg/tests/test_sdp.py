import math

import numpy as np
import pytest
import scipy.optimize

from conftest import random_symmetric
from riemopt.errors import ContractViolationError, FormatError
from riemopt.problems import check_gradient, check_hessian
from riemopt.rtr import RTRConfig
from riemopt.sdp import (SDPInstance, bm_problem, default_width, dual_certificate,
                         load_matrix, minimal_width, solve_relaxation)
from riemopt.traces import RTRStatus


def sdp3_oracle(C):
    """Optimum of the n=3 diagonally constrained SDP, independently.

    Order-3 correlation matrices have extreme points of rank <= 2, so the
    optimum is attained by X = YY' with unit rows in the plane:
    parameterize rows by angles (first fixed to 0), brute-force on a grid,
    then polish with a local solver.
    """
    C = np.asarray(C, dtype=float)

    def objective(angles):
        th = np.concatenate(([0.0], angles))
        Y = np.column_stack([np.cos(th), np.sin(th)])
        return float(np.sum(Y * (C @ Y)))

    grid = np.linspace(0.0, 2.0 * math.pi, 181)
    best, best_angles = math.inf, None
    for a in grid:
        for b in grid:
            v = objective(np.array([a, b]))
            if v < best:
                best, best_angles = v, (a, b)
    res = scipy.optimize.minimize(objective, np.array(best_angles),
                                  method="Nelder-Mead",
                                  options={"xatol": 1e-12, "fatol": 1e-14})
    th = np.concatenate(([0.0], res.x))
    Y = np.column_stack([np.cos(th), np.sin(th)])
    return float(res.fun), Y


# ---------------------------------------------------------------------------
# ingestion


def test_load_dense_text(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("0 1\n1 0\n")
    inst = load_matrix(path)
    assert inst.n == 2
    assert np.array_equal(inst.C, [[0.0, 1.0], [1.0, 0.0]])


def test_load_matrixmarket_symmetric(tmp_path):
    path = tmp_path / "c.mtx"
    path.write_text(
        "%%MatrixMarket matrix coordinate real symmetric\n"
        "% comment line\n"
        "2 2 2\n"
        "1 1 2.0\n"
        "2 1 1.0\n"
    )
    inst = load_matrix(path)
    assert np.array_equal(inst.C, [[2.0, 1.0], [1.0, 0.0]])


def test_load_matrixmarket_array_general(tmp_path):
    path = tmp_path / "c.mtx"
    path.write_text(
        "%%MatrixMarket matrix array real general\n"
        "2 2\n1.0\n3.0\n3.0\n2.0\n"
    )
    inst = load_matrix(path)
    assert np.array_equal(inst.C, [[1.0, 3.0], [3.0, 2.0]])


def test_load_asymmetric_symmetrizes_with_warning(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("0 1\n2 0\n")
    with pytest.warns(UserWarning, match="symmetrizing"):
        inst = load_matrix(path)
    assert np.array_equal(inst.C, [[0.0, 1.5], [1.5, 0.0]])


def test_load_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "c.mtx"
    path.write_text(
        "%%MatrixMarket matrix coordinate real general\n"
        "2 2 1\n"
        "1 nope 3\n"
    )
    with pytest.raises(FormatError, match=r":3:"):
        load_matrix(path)

    bad = tmp_path / "ragged.txt"
    bad.write_text("1 2\n3\n")
    with pytest.raises(FormatError, match=r":2:"):
        load_matrix(bad)


def test_load_nonsquare_is_format_error(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("1 2 3\n4 5 6\n")
    with pytest.raises(FormatError, match="square"):
        load_matrix(path)


# ---------------------------------------------------------------------------
# factorized problem


def test_bm_problem_zero_matrix():
    inst = SDPInstance.from_matrix(np.zeros((3, 3)))
    p = bm_problem(inst, 2)
    rng = np.random.default_rng(0)
    x = p.manifold.random_point(rng)
    assert p.cost(x) == 0.0
    assert np.array_equal(p.grad(x).coords, np.zeros(6))


def test_bm_problem_hand_value():
    inst = SDPInstance.from_matrix([[0.0, 1.0], [1.0, 0.0]])
    p = bm_problem(inst, 2)
    x = p.manifold.point([1, 0, 1, 0])  # both rows e1: YY' is all-ones
    assert p.cost(x) == 2.0


def test_bm_problem_taylor_orders(rng):
    inst = SDPInstance.from_matrix(random_symmetric(8, 31))
    p = bm_problem(inst, 4)
    for _ in range(5):
        x = p.manifold.random_point(rng)
        eta = p.manifold.random_tangent(x, rng)
        assert 1.8 <= check_gradient(p, x, eta).slope <= 2.2
        assert check_hessian(p, x, eta).slope >= 2.8


# ---------------------------------------------------------------------------
# dual certificate


def test_dual_certificate_diagonal_cost(rng):
    c = np.array([3.0, -1.0, 2.0])
    inst = SDPInstance.from_matrix(np.diag(c))
    p = bm_problem(inst, 3)
    Y = p.manifold.as_matrix(p.manifold.random_point(rng).coords)
    S, lam_min, gap = dual_certificate(inst, Y)
    # diag cost with unit rows: ddiag(C YY') = C, so S = 0 and the
    # objective is the constant sum(c)
    assert np.max(np.abs(S)) < 1e-12
    assert gap <= 1e-10
    assert p.cost_fn(Y.reshape(-1)) == pytest.approx(float(np.sum(c)))


def test_dual_certificate_nonnegative_gap(rng):
    inst = SDPInstance.from_matrix(random_symmetric(6, 37))
    p = bm_problem(inst, 3)
    for _ in range(20):
        Y = p.manifold.as_matrix(p.manifold.random_point(rng).coords)
        _, _, gap = dual_certificate(inst, Y)
        assert gap >= 0.0


def test_dual_certificate_rejects_infeasible():
    inst = SDPInstance.from_matrix(np.eye(2))
    with pytest.raises(ContractViolationError):
        dual_certificate(inst, np.array([[2.0, 0.0], [0.0, 1.0]]))


def test_dual_certificate_tight_at_oracle_optimum():
    # at a true SDP optimum the constructed dual is optimal: zero gap bound
    C = random_symmetric(3, 41)
    inst = SDPInstance.from_matrix(C)
    opt_val, Y_opt = sdp3_oracle(inst.C)
    _, lam_min, gap = dual_certificate(inst, Y_opt)
    assert gap <= 1e-6
    assert lam_min >= -1e-7


def test_dual_certificate_sound_lower_bound(rng):
    # Tr(C YY') + n lambda_min(S) never exceeds the true optimum
    for seed in range(5):
        inst = SDPInstance.from_matrix(random_symmetric(3, 100 + seed))
        opt_val, _ = sdp3_oracle(inst.C)
        for _ in range(10):
            Y = np.column_stack([np.cos(th := rng.uniform(0, 2 * np.pi, 3)),
                                 np.sin(th)])
            obj = float(np.sum(Y * (inst.C @ Y)))
            _, lam_min, gap = dual_certificate(inst, Y)
            assert obj + inst.n * lam_min <= opt_val + 1e-8
            assert obj - gap <= opt_val + 1e-8


# ---------------------------------------------------------------------------
# end-to-end relaxation


def test_solve_relaxation_hand_instance():
    inst = SDPInstance.from_matrix([[0.0, 1.0], [1.0, 0.0]])
    eps_h = 1e-5
    sol = solve_relaxation(inst, 3, RTRConfig(eps_g=1e-7, eps_h=eps_h), seed=1)
    assert sol.status is RTRStatus.SECOND_ORDER_MET
    # optimum -2 from the 1-parameter family X = [[1,t],[t,1]], t in [-1,1]
    assert sol.objective <= -2.0 + (inst.n / 2) * eps_h
    assert sol.gap_bound <= (inst.n / 2) * eps_h + 1e-9
    assert np.max(np.abs(np.linalg.norm(sol.Y, axis=1) - 1.0)) <= 1e-9


def test_solve_relaxation_zero_matrix():
    inst = SDPInstance.from_matrix(np.zeros((4, 4)))
    sol = solve_relaxation(inst, 5, RTRConfig(eps_g=1e-8, eps_h=1e-6), seed=0)
    assert sol.objective == 0.0
    assert sol.gap_bound == 0.0


def test_solve_relaxation_matches_n3_oracle():
    inst = SDPInstance.from_matrix(random_symmetric(3, 55))
    opt_val, _ = sdp3_oracle(inst.C)
    eps_h = 1e-6
    sol = solve_relaxation(inst, 4, RTRConfig(eps_g=1e-8, eps_h=eps_h), seed=2)
    assert sol.status is RTRStatus.SECOND_ORDER_MET
    assert sol.objective <= opt_val + (inst.n / 2) * eps_h
    assert sol.objective >= opt_val - 1e-6  # cannot beat the true optimum


def test_grad_norm_equals_tangent_dual_residual(rng):
    # grad f(Y) = 2 * (S Y) exactly, and S Y is automatically tangent
    inst = SDPInstance.from_matrix(random_symmetric(7, 61))
    p = bm_problem(inst, 4)
    for _ in range(5):
        x = p.manifold.random_point(rng)
        Y = p.manifold.as_matrix(x.coords)
        S, _, _ = dual_certificate(inst, Y)
        g = p.grad(x)
        assert np.max(np.abs(g.coords - 2.0 * (S @ Y).reshape(-1))) < 1e-12


def test_width_helpers():
    assert default_width(20) == 21
    assert minimal_width(20) == math.ceil(math.sqrt(40))
    with pytest.raises(ContractViolationError):
        solve_relaxation(SDPInstance.from_matrix(np.eye(2)), 1,
                         RTRConfig(eps_g=1e-6, eps_h=1e-4))


def test_p_sweep_objective_trend():
    # wider factorizations should not do worse (logged audit, tolerant)
    inst = SDPInstance.from_matrix(random_symmetric(8, 71))
    eps_h = 1e-5
    cfg = RTRConfig(eps_g=1e-7, eps_h=eps_h)
    widths = list(range(minimal_width(inst.n), default_width(inst.n) + 1))
    table = []
    for p in widths:
        best = min(solve_relaxation(inst, p, cfg, seed=s).objective
                   for s in range(5))
        table.append((p, best))
    values = [v for _, v in table]
    slack = (inst.n / 2) * eps_h + 1e-8
    trend_ok = all(b <= a + slack for a, b in zip(values, values[1:]))
    # logged, not asserted per the audit's tolerance for rare bad seeds
    print("p-sweep best-of-5:", table, "monotone:", trend_ok)
    assert values[-1] <= values[0] + slack
