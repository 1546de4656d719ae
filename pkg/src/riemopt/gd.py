"""Riemannian gradient descent: fixed step size and backtracking Armijo.

Both variants iterate x_{k+1} = Retr_{x_k}(eta_k) with eta_k along the
negative Riemannian gradient, stopping at the first iterate whose gradient
norm drops to the tolerance. The fixed-step variant uses eta_k =
-(1/L) grad f(x_k) for a user-supplied smoothness constant L; the Armijo
variant backtracks from an initial trial step until the sufficient-decrease
inequality holds.

Along the way the solver measures the largest first-order Taylor-remainder
ratio of the pullback over every trial step it evaluates (accepted or not).
That running maximum is stored in the trace as ``observed_lipschitz`` and
is exactly the constant the a-posteriori bound checks in
:mod:`riemopt.verify` need.
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .errors import ContractViolationError, NumericalError
from .manifolds import Point, TangentVector
from .traces import GDRecord, GDStatus, GDTrace

#: line searches giving up after this many reductions indicate NaNs or a
#: wrong gradient; abort loudly instead of looping
BACKTRACK_CAP = 100


class GDMode(enum.Enum):
    FIXED_STEP = "fixed"
    ARMIJO = "armijo"


@dataclass
class GDConfig:
    """Tunables for the gradient descent variants.

    ``L`` is only used (and required) in fixed-step mode. ``c1``, ``tau``
    and ``tbar`` are the Armijo slope fraction, backtracking factor and
    initial trial step.
    """

    eps_g: float
    mode: GDMode = GDMode.ARMIJO
    L: Optional[float] = None
    c1: float = 1e-4
    tau: float = 0.5
    tbar: float = 1.0
    max_iters: int = 10**6
    debug_checks: bool = False

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = GDMode(self.mode)
        if not self.eps_g > 0:
            raise ContractViolationError("eps_g must be positive")
        if not 0 < self.c1 < 1:
            raise ContractViolationError("c1 must lie in (0, 1)")
        if not 0 < self.tau < 1:
            raise ContractViolationError("tau must lie in (0, 1)")
        if not self.tbar > 0:
            raise ContractViolationError("tbar must be positive")
        if self.max_iters < 1:
            raise ContractViolationError("max_iters must be at least 1")
        if self.mode is GDMode.FIXED_STEP and not (self.L and self.L > 0):
            raise ContractViolationError("fixed-step mode needs L > 0")

    def to_dict(self):
        return {
            "solver": f"gd-{self.mode.value}",
            "eps_g": self.eps_g,
            "L": self.L,
            "c1": self.c1,
            "tau": self.tau,
            "tbar": self.tbar,
            "max_iters": self.max_iters,
        }


@dataclass
class ArmijoResult:
    """Accepted line-search step plus the already-evaluated candidate."""

    t: float
    eta: TangentVector
    backtracks: int
    candidate: Point
    f_candidate: float


def _check_finite(value, what, trace):
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {what} encountered", trace=trace)


class _LipschitzMeter:
    """Running max of 2|f(Retr_x(eta)) - f(x) - <eta, g>| / ||eta||^2."""

    def __init__(self):
        self.value = 0.0

    def update(self, f_x, slope, f_trial, stepnorm):
        if stepnorm > 0:
            ratio = 2.0 * abs(f_trial - f_x - slope) / stepnorm**2
            if ratio > self.value:
                self.value = ratio


def armijo_search(problem, x, eta0, cfg, f_x=None, g=None, _meter=None, _trace=None):
    """Backtracking Armijo line search along the descent direction eta0.

    Starting from t = tbar, the trial step t*eta0 is shrunk by tau until

        f(x) - f(Retr_x(t*eta0)) >= c1 * t * <-grad f(x), eta0>,

    with equality accepted. Requires <-grad f(x), eta0> > 0.

    Returns the accepted step together with the retracted candidate point
    and its cost, so callers can reuse the final evaluation.
    """
    man = problem.manifold
    if f_x is None:
        f_x = problem.cost(x)
    if g is None:
        g = problem.grad(x)
    descent = -man.inner(x, g, eta0)  # <-g, eta0>
    if not descent > 0:
        raise ContractViolationError(
            f"armijo_search needs a descent direction, got <-g, eta0> = {descent:.3e}"
        )
    eta0_norm = eta0.norm()
    t = cfg.tbar
    backtracks = 0
    while True:
        eta = t * eta0
        candidate = man.retract(x, eta)
        f_trial = problem.cost(candidate)
        _check_finite(f_trial, "cost in line search", _trace)
        if _meter is not None:
            _meter.update(f_x, -t * descent, f_trial, t * eta0_norm)
        if not (f_x - f_trial < cfg.c1 * t * descent):
            return ArmijoResult(t, eta, backtracks, candidate, f_trial)
        if backtracks >= BACKTRACK_CAP:
            raise NumericalError(
                f"Armijo backtracking exceeded {BACKTRACK_CAP} reductions "
                f"(last trial t = {t:.3e}); suspect a wrong gradient or NaN cost",
                trace=_trace,
            )
        t *= cfg.tau
        backtracks += 1


def gd_fixed_step(problem, x0, cfg):
    """Gradient descent with the constant step size 1/L.

    Stops at the first iterate with gradient norm <= eps_g (or at the
    iteration cap, reported as a distinct status). When the supplied L
    really bounds the pullback curvature, each step decreases the cost by
    at least ||grad||^2 / (2L); ``debug_checks`` enforces that inequality.
    """
    if cfg.mode is not GDMode.FIXED_STEP:
        raise ContractViolationError("gd_fixed_step needs cfg.mode == FIXED_STEP")
    return _descent_loop(problem, x0, cfg)


def gd_armijo(problem, x0, cfg):
    """Gradient descent with backtracking Armijo line search.

    The initial search direction is the negative gradient and the last
    line-search cost evaluation is reused as f(x_{k+1}).
    """
    if cfg.mode is not GDMode.ARMIJO:
        raise ContractViolationError("gd_armijo needs cfg.mode == ARMIJO")
    return _descent_loop(problem, x0, cfg)


def _descent_loop(problem, x0, cfg):
    man = problem.manifold
    man._require_feasible(x0)
    trace = GDTrace(config=cfg.to_dict())
    meter = _LipschitzMeter()

    x = x0
    f_x = problem.cost(x)
    g = problem.grad(x)
    _check_finite(f_x, "initial cost", trace)
    gradnorm = g.norm()
    _check_finite(gradnorm, "initial gradient", trace)

    k = 0
    status = None
    while True:
        if gradnorm <= cfg.eps_g:
            status = GDStatus.GRAD_TOLERANCE_MET
            break
        if k >= cfg.max_iters:
            status = GDStatus.ITER_CAP_REACHED
            break

        before = problem.counters.snapshot()
        if cfg.mode is GDMode.FIXED_STEP:
            t = 1.0 / cfg.L
            eta = -t * g
            x_next = man.retract(x, eta)
            f_next = problem.cost(x_next)
            _check_finite(f_next, f"cost at iteration {k}", trace)
            meter.update(f_x, -t * gradnorm**2, f_next, eta.norm())
            backtracks = 0
            if cfg.debug_checks:
                need = gradnorm**2 / (2.0 * cfg.L)
                if f_x - f_next < need * (1 - 1e-9) - 1e-15:
                    raise NumericalError(
                        f"iteration {k}: decrease {f_x - f_next:.3e} below "
                        f"||g||^2/(2L) = {need:.3e}; the supplied L does not "
                        "bound the pullback curvature here",
                        trace=trace,
                    )
        else:
            res = armijo_search(problem, x, -g, cfg, f_x=f_x, g=g,
                                _meter=meter, _trace=trace)
            t, eta, backtracks = res.t, res.eta, res.backtracks
            x_next, f_next = res.candidate, res.f_candidate

        g_next = problem.grad(x_next)
        gradnorm_next = g_next.norm()
        _check_finite(gradnorm_next, f"gradient at iteration {k + 1}", trace)
        after = problem.counters.snapshot()

        trace.records.append(GDRecord(
            k=k, f=f_x, gradnorm=gradnorm, stepnorm=eta.norm(), t=t,
            backtracks=backtracks,
            costevals=after["cost"] - before["cost"],
            gradevals=after["grad"] - before["grad"],
        ))
        x, f_x, g, gradnorm = x_next, f_next, g_next, gradnorm_next
        k += 1

    # terminal iterate, step fields zeroed
    trace.records.append(GDRecord(
        k=k, f=f_x, gradnorm=gradnorm, stepnorm=0.0, t=0.0,
        backtracks=0, costevals=0, gradevals=0,
    ))
    trace.status = status
    trace.observed["lipschitz"] = meter.value
    return x, trace
