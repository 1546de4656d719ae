"""Riemannian gradient descent and trust regions with verifiable traces.

Solvers for smooth minimization over embedded submanifolds (Euclidean
space, the unit sphere, products of spheres), with per-iteration traces
rich enough to re-check every descent inequality afterwards, terminal
second-order certificates, and a Burer-Monteiro front end for diagonally
constrained SDPs.
"""

from .errors import (CapabilityError, ContractViolationError, FormatError,
                     NumericalError)
from .gd import ArmijoResult, GDConfig, GDMode, armijo_search, gd_armijo, gd_fixed_step
from .manifolds import (Euclidean, Manifold, Oblique, Point, Sphere,
                        TangentBasis, TangentVector)
from .problems import (EvalCounters, Problem, TaylorCheckReport, check_gradient,
                       check_hessian, estimate_lipschitz, lipschitz_samples,
                       rayleigh_problem)
from .rtr import (Certificate, EigenstepResult, HessianModel, InnerSolver,
                  ModelOperator, OperatorKind, RTRConfig, cauchy_step, eigenstep,
                  exact_hessian_operator, fd_hessian_operator,
                  hessian_gap_diagnostic, rho_ratio, rtr_solve, truncated_cg)
from .sdp import (BMSolution, SDPInstance, bm_problem, dual_certificate,
                  load_matrix, solve_relaxation)
from .traces import (GDRecord, GDStatus, GDTrace, RTRRecord, RTRStatus, RTRTrace,
                     StepType, read_csv, read_json, write_csv, write_json)
from .verify import (BoundEntry, BoundReport, Constant, check_gd_trace,
                     check_rtr_trace, lambda_constants)

__version__ = "0.1.0"

__all__ = [
    "ArmijoResult", "BMSolution", "BoundEntry", "BoundReport", "CapabilityError",
    "Certificate", "Constant", "ContractViolationError", "EigenstepResult",
    "Euclidean", "EvalCounters", "FormatError", "GDConfig", "GDMode", "GDRecord",
    "GDStatus", "GDTrace", "HessianModel", "InnerSolver", "Manifold",
    "ModelOperator", "NumericalError", "Oblique", "OperatorKind", "Point",
    "Problem", "RTRConfig", "RTRRecord", "RTRStatus", "RTRTrace", "SDPInstance",
    "Sphere", "StepType", "TangentBasis", "TangentVector", "TaylorCheckReport",
    "armijo_search", "bm_problem", "cauchy_step", "check_gd_trace",
    "check_gradient", "check_hessian", "check_rtr_trace", "dual_certificate",
    "eigenstep", "estimate_lipschitz", "exact_hessian_operator",
    "fd_hessian_operator", "gd_armijo", "gd_fixed_step", "hessian_gap_diagnostic",
    "lambda_constants", "lipschitz_samples", "load_matrix", "rayleigh_problem",
    "read_csv", "read_json", "rho_ratio", "rtr_solve", "solve_relaxation",
    "truncated_cg", "write_csv", "write_json",
]
