"""Experiment engine behind the command-line interface.

Builds problems from a small spec (seeded Rayleigh instances or cost
matrices from disk), runs the chosen solver, writes trace and solution
artifacts, sweeps tolerance grids, and re-checks the descent/trust-region
inequalities on the artifacts it produced. Everything is deterministic
given (spec, seed): replicate r draws from the stream seeded with
(seed, r), artifacts carry no timestamps, and JSON is written with sorted
keys.
"""

import concurrent.futures as futures
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ContractViolationError, FormatError
from .gd import GDConfig, GDMode, gd_armijo, gd_fixed_step
from .problems import (check_gradient, check_hessian, estimate_lipschitz,
                       lipschitz_samples, rayleigh_problem)
from .rtr import RTRConfig, rtr_solve
from .sdp import (SDPInstance, bm_problem, default_width, dual_certificate,
                  load_matrix, minimal_width)
from .traces import GDStatus, RTRStatus, read_json, write_csv, write_json
from .verify import BoundReport, Constant, check_gd_trace, check_rtr_trace

SOLUTION_SCHEMA = "solution-v1"
SWEEP_SCHEMA = "sweep-v1"

SOLVERS = ("gd-fixed", "gd-armijo", "rtr")
PROBLEMS = ("rayleigh", "maxcut")

#: safety factor applied to sampled Lipschitz estimates before they feed
#: the fixed step size (sampling gives a lower estimate)
L_SAFETY = 1.5


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one experiment."""

    problem: str
    solver: str
    n: int = 30
    seed: int = 0
    matrix: Optional[str] = None
    p: Optional[int] = None  # None = auto (n + 1) for maxcut
    eps_g: float = 1e-6
    eps_h: Optional[float] = None
    delta0: Optional[float] = None
    delta_bar: Optional[float] = None
    rho_prime: float = 0.1
    c1: float = 1e-4
    tau: float = 0.5
    tbar: float = 1.0
    L: Optional[float] = None
    max_iters: int = 10**6
    eps_list: list = field(default_factory=list)
    order: int = 1
    replicates: int = 1
    jobs: int = 1
    out: str = "experiment"
    trace_format: str = "json"
    dump_factor: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ContractViolationError(f"unknown problem {self.problem!r}")
        if self.solver not in SOLVERS:
            raise ContractViolationError(f"unknown solver {self.solver!r}")
        if self.problem == "maxcut" and not self.matrix:
            raise ContractViolationError("maxcut needs --matrix")
        if self.replicates < 1 or self.jobs < 1:
            raise ContractViolationError("replicates and jobs must be >= 1")
        if self.order not in (1, 2):
            raise ContractViolationError("order must be 1 or 2")
        if self.trace_format not in ("csv", "json"):
            raise ContractViolationError("trace format must be csv or json")
        if self.eps_list:
            eps = list(self.eps_list)
            if any(not e > 0 for e in eps):
                raise ContractViolationError("sweep tolerances must be positive")
            if any(a <= b for a, b in zip(eps, eps[1:])):
                raise ContractViolationError(
                    "sweep tolerances must be strictly decreasing")


def random_symmetric(n, rng):
    """Seeded dense symmetric test matrix with O(1) spectrum."""
    B = rng.standard_normal((n, n))
    return (B + B.T) / (2.0 * math.sqrt(n))


def build_problem(spec: ExperimentSpec):
    """Instantiate the problem and its optimum oracle (when available).

    Returns (problem, info) where info carries ``f_star`` (a Constant, or
    None when no oracle exists a priori) plus problem metadata.
    """
    if spec.problem == "rayleigh":
        if spec.matrix:
            A = load_matrix(spec.matrix).C
        else:
            A = random_symmetric(spec.n, np.random.default_rng([spec.seed]))
        problem = rayleigh_problem(A)
        lam_min = float(np.linalg.eigvalsh(A)[0])
        info = {
            "kind": "rayleigh", "n": A.shape[0],
            "f_star": Constant(lam_min / 2.0, "oracle"),
            "matrix": spec.matrix,
        }
        return problem, info
    inst = load_matrix(spec.matrix)
    p = spec.p if spec.p else default_width(inst.n)
    problem = bm_problem(inst, p)
    info = {
        "kind": "maxcut", "n": inst.n, "p": p, "instance": inst,
        "f_star": None,  # dual bound computed at the terminal point
        "matrix": spec.matrix,
    }
    return problem, info


def _solver_config(spec: ExperimentSpec, problem, rng):
    """Build the solver config; estimates L for fixed-step mode if needed."""
    if spec.solver == "rtr":
        cfg = RTRConfig(
            eps_g=spec.eps_g, eps_h=spec.eps_h, delta0=spec.delta0,
            delta_bar=spec.delta_bar, rho_prime=spec.rho_prime,
            max_iters=spec.max_iters,
        )
        return cfg, None
    if spec.solver == "gd-armijo":
        cfg = GDConfig(eps_g=spec.eps_g, mode=GDMode.ARMIJO, c1=spec.c1,
                       tau=spec.tau, tbar=spec.tbar, max_iters=spec.max_iters)
        return cfg, None
    if spec.L is not None:
        L = Constant(spec.L, "user")
    else:
        points = [problem.manifold.random_point(rng) for _ in range(4)]
        lg, _ = estimate_lipschitz(
            problem, lipschitz_samples(problem, points, rng, max_norm=2.0))
        L = Constant(L_SAFETY * lg, "estimated")
    cfg = GDConfig(eps_g=spec.eps_g, mode=GDMode.FIXED_STEP, L=L.value,
                   max_iters=spec.max_iters)
    return cfg, L


def _run_one(spec, problem, info, replicate):
    """Solve one replicate; returns (trace, solution dict)."""
    rng = np.random.default_rng([spec.seed, replicate])
    x0 = problem.manifold.random_point(rng)
    cfg, L_const = _solver_config(spec, problem, rng)

    before = problem.counters.snapshot()
    cert = None
    if spec.solver == "rtr":
        x, cert, trace = rtr_solve(problem, x0, cfg)
    elif spec.solver == "gd-armijo":
        x, trace = gd_armijo(problem, x0, cfg)
    else:
        x, trace = gd_fixed_step(problem, x0, cfg)
    after = problem.counters.snapshot()
    evals = {k: after[k] - before[k] for k in after}

    constants = {}
    if info["f_star"] is not None:
        constants["f_star"] = {"value": info["f_star"].value,
                               "provenance": info["f_star"].provenance}
    if L_const is not None:
        constants["L"] = {"value": L_const.value, "provenance": L_const.provenance}

    solution = {
        "schema": SOLUTION_SCHEMA,
        "problem": {"kind": info["kind"], "n": info["n"],
                    "matrix": info.get("matrix"), "p": info.get("p")},
        "solver": spec.solver,
        "seed": spec.seed,
        "replicate": replicate,
        "config": trace.config,
        "status": trace.status.value,
        "iterations": trace.iterations,
        "f": trace.records[-1].f if trace.records else None,
        "grad_norm": trace.records[-1].gradnorm if trace.records else None,
        "certificate": cert.to_dict() if cert is not None else None,
        "evals": evals,
        "constants": constants,
        "observed": {k: (None if isinstance(v, float) and math.isnan(v) else v)
                     for k, v in trace.observed.items()},
    }

    if info["kind"] == "maxcut":
        inst = info["instance"]
        Y = problem.manifold.as_matrix(x.coords)
        _, lam_min_s, gap_bound = dual_certificate(inst, Y)
        objective = problem.cost_fn(x.coords)
        solution["bmsol"] = {
            "schema": "bmsol-v1",
            "n": inst.n,
            "p": info["p"],
            "objective": objective,
            "lambda_min_S": lam_min_s,
            "gap_bound": gap_bound,
            "status": trace.status.value,
            "iterations": trace.iterations,
            "seed": spec.seed,
        }
        # dual value is a certified lower bound on the factorized optimum
        solution["constants"]["f_star"] = {
            "value": objective - gap_bound, "provenance": "oracle"}
    return trace, solution, x


def _dump_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def run_experiment(spec: ExperimentSpec):
    """Run all replicates, write artifacts, return the summary dict."""
    problem, info = build_problem(spec)
    many = spec.replicates > 1

    def job(r):
        trace, solution, x = _run_one(spec, problem, info, r)
        prefix = f"{spec.out}.r{r}" if many else spec.out
        if spec.trace_format == "csv":
            trace_path = f"{prefix}.trace.csv"
            write_csv(trace, trace_path)
        else:
            trace_path = f"{prefix}.trace.json"
            write_json(trace, trace_path)
        sol_path = f"{prefix}.solution.json"
        _dump_json(solution, sol_path)
        if info["kind"] == "maxcut":
            _dump_json(solution["bmsol"], f"{prefix}.bmsol.json")
            if spec.dump_factor:
                Y = problem.manifold.as_matrix(x.coords)
                np.savetxt(f"{prefix}.Y.txt", Y)
        return {"replicate": r, "status": solution["status"],
                "iterations": solution["iterations"], "f": solution["f"],
                "trace": trace_path, "solution": sol_path}

    if spec.jobs > 1 and many:
        with futures.ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(job, range(spec.replicates)))
    else:
        results = [job(r) for r in range(spec.replicates)]

    summary = {"schema": "runsummary-v1", "problem": spec.problem,
               "solver": spec.solver, "seed": spec.seed, "runs": results}
    if many:
        _dump_json(summary, f"{spec.out}.summary.json")
    return summary


def fit_count_slope(eps_values, counts):
    """Least-squares slope of log(count) vs log(1/eps)."""
    x = np.log(1.0 / np.asarray(eps_values, dtype=float))
    y = np.log(np.maximum(np.asarray(counts, dtype=float), 1.0))
    return float(np.polyfit(x, y, 1)[0])


def sweep_epsilon(spec: ExperimentSpec):
    """Tolerance sweep: solve once per eps, fit the iteration-count slope.

    First-order sweeps must stay below slope 2.3, second-order sweeps
    (eps_g = eps_h = eps) below 3.3 — the worst-case rates are upper
    bounds, so staying well below is the normal outcome.
    """
    if len(spec.eps_list) < 4:
        raise ContractViolationError("sweeps need at least 4 tolerance values")
    if spec.eps_list[0] / spec.eps_list[-1] < 100.0:
        raise ContractViolationError("sweep tolerances must span >= 2 decades")
    if spec.order == 2 and spec.solver != "rtr":
        raise ContractViolationError("second-order sweeps need the rtr solver")

    _, info = build_problem(spec)

    def job(eps):
        # fresh problem per job: isolates the eval counters
        problem, _ = build_problem(spec)
        point_spec = replace(spec, eps_g=eps,
                             eps_h=eps if spec.order == 2 else None,
                             eps_list=[])
        trace, solution, _ = _run_one(point_spec, problem, info, 0)
        evals = solution["evals"]
        return {"eps": eps, "iterations": solution["iterations"],
                "status": solution["status"], "costevals": evals["cost"],
                "gradevals": evals["grad"], "hessevals": evals["hess"]}

    if spec.jobs > 1:
        with futures.ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(job, spec.eps_list))
    else:
        rows = [job(e) for e in spec.eps_list]

    slope = fit_count_slope([r["eps"] for r in rows],
                            [r["iterations"] for r in rows])
    cap = 3.3 if spec.order == 2 else 2.3
    doc = {
        "schema": SWEEP_SCHEMA,
        "problem": spec.problem,
        "solver": spec.solver,
        "order": spec.order,
        "seed": spec.seed,
        "rows": rows,
        "slope": slope,
        "slope_cap": cap,
        "ok": slope <= cap,
    }
    _dump_json(doc, f"{spec.out}.sweep.json")
    with open(f"{spec.out}.sweep.csv", "w") as fh:
        fh.write("eps,iterations,costevals,gradevals,hessevals\n")
        for r in rows:
            fh.write(f"{r['eps']!r},{r['iterations']},{r['costevals']},"
                     f"{r['gradevals']},{r['hessevals']}\n")
    return doc


def verify_artifacts(trace_paths, solution_path=None, f_star=None, out=None):
    """Re-check the descent inequalities on serialized artifacts.

    Constants are taken from the solution JSON when given (oracle f*,
    user/estimated L), otherwise from the trace's observed block and the
    --f-star override.
    """
    from .rtr import Certificate
    from .traces import GDTrace, RTRTrace

    solution = None
    if solution_path:
        try:
            with open(solution_path) as fh:
                solution = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read solution {solution_path}: {exc}") from exc
        if solution.get("schema") != SOLUTION_SCHEMA:
            raise FormatError(
                f"{solution_path}: expected schema {SOLUTION_SCHEMA}, "
                f"got {solution.get('schema')!r}")

    fstar_const = None
    if f_star is not None:
        fstar_const = Constant(float(f_star), "user")
    elif solution and solution.get("constants", {}).get("f_star"):
        c = solution["constants"]["f_star"]
        fstar_const = Constant(float(c["value"]), c["provenance"])

    combined = BoundReport()
    for path in trace_paths:
        trace = read_json(path)
        if isinstance(trace, GDTrace):
            L_const = None
            if solution and solution.get("constants", {}).get("L"):
                c = solution["constants"]["L"]
                L_const = Constant(float(c["value"]), c["provenance"])
            report = check_gd_trace(trace, f_star=fstar_const, L=L_const)
        elif isinstance(trace, RTRTrace):
            cert = None
            if solution and solution.get("certificate"):
                cd = solution["certificate"]
                cert = Certificate(
                    grad_norm=float(cd["grad_norm"]),
                    hess_lambda_min=(math.nan if cd["hess_lambda_min"] is None
                                     else float(cd["hess_lambda_min"])),
                    eps_g=float(cd["eps_g"]),
                    eps_h=cd["eps_h"],
                    retraction_order=int(cd["retraction_order"]),
                    sym_residual=(math.nan if cd.get("sym_residual") is None
                                  else float(cd["sym_residual"])),
                )
            report = check_rtr_trace(trace, f_star=fstar_const, certificate=cert)
        else:  # pragma: no cover - read_json only returns the two types
            raise FormatError(f"{path}: unsupported trace type")
        for entry in report.entries:
            entry.name = f"{path}: {entry.name}" if len(trace_paths) > 1 else entry.name
        combined.entries.extend(report.entries)

    if out:
        combined.dump_json(f"{out}.report.json")
    return combined


def derivative_check(spec: ExperimentSpec, pairs=8):
    """Taylor-order checks on a named problem at random points/directions."""
    problem, _ = build_problem(spec)
    rng = np.random.default_rng([spec.seed, 0])
    results = []
    ok = True
    for i in range(pairs):
        x = problem.manifold.random_point(rng)
        eta = problem.manifold.random_tangent(x, rng)
        gr = check_gradient(problem, x, eta)
        row = {"pair": i, "grad_slope": gr.slope, "grad_ok": gr.passed}
        ok = ok and gr.passed
        if problem.has_hessian:
            hr = check_hessian(problem, x, eta)
            row.update(hess_slope=hr.slope, hess_ok=hr.passed)
            ok = ok and hr.passed
        results.append(row)
    return {"ok": ok, "pairs": results}
