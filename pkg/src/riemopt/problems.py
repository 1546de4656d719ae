"""Cost functions bound to a manifold.

A :class:`Problem` wraps user callbacks written in ambient coordinates
(cost, gradient, optional Hessian-vector product) and exposes the
Riemannian derivatives: the gradient is the tangent projection of the
ambient gradient, the Hessian-vector product adds the per-manifold
curvature (Weingarten) correction, and the pullback is the cost composed
with the retraction.

Taylor-order checks recover the expected remainder orders (2 for the
gradient, 3 for the Hessian with the shipped second-order retractions) as
log-log slopes, which catches sign and scale bugs in user callbacks.
"""

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, ContractViolationError
from .manifolds import Manifold, Point, TangentVector
from .slopes import fit_loglog_slope, log_spaced

#: a Taylor check passes when the fitted slope is within this margin of
#: the expected order (loose enough for double precision, tight enough to
#: catch factor-of-two and sign errors)
SLOPE_MARGIN = 0.2


class EvalCounters:
    """Thread-safe tally of callback invocations."""

    __slots__ = ("_lock", "cost", "grad", "hess")

    def __init__(self):
        self._lock = threading.Lock()
        self.cost = 0
        self.grad = 0
        self.hess = 0

    def bump(self, which):
        with self._lock:
            setattr(self, which, getattr(self, which) + 1)

    def snapshot(self):
        with self._lock:
            return {"cost": self.cost, "grad": self.grad, "hess": self.hess}

    def __repr__(self):
        s = self.snapshot()
        return f"EvalCounters(cost={s['cost']}, grad={s['grad']}, hess={s['hess']})"


@dataclass
class Problem:
    """A smooth cost on a manifold, with call accounting.

    Parameters
    ----------
    manifold : Manifold
    cost : callable
        Ambient coordinates -> float.
    ambient_grad : callable
        Ambient coordinates -> ambient gradient array.
    ambient_hess_vec : callable, optional
        (ambient coordinates, ambient direction) -> ambient
        Hessian-vector product. Callbacks must be reentrant; the counters
        are atomic so one Problem may serve concurrent solver runs.
    """

    manifold: Manifold
    cost_fn: Callable[[np.ndarray], float]
    ambient_grad: Callable[[np.ndarray], np.ndarray]
    ambient_hess_vec: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "problem"
    counters: EvalCounters = field(default_factory=EvalCounters)

    @property
    def has_hessian(self):
        return self.ambient_hess_vec is not None

    def cost(self, x: Point) -> float:
        self.counters.bump("cost")
        return float(self.cost_fn(x.coords))

    def egrad(self, x: Point) -> np.ndarray:
        self.counters.bump("grad")
        return np.asarray(self.ambient_grad(x.coords), dtype=float)

    def grad(self, x: Point) -> TangentVector:
        """Riemannian gradient: tangent projection of the ambient gradient."""
        self.manifold._require_feasible(x)
        return self.manifold.project(x, self.egrad(x))

    def hess_vec(self, x: Point, eta: TangentVector) -> TangentVector:
        """Riemannian Hessian applied to eta (exact curvature correction)."""
        if not self.has_hessian:
            raise CapabilityError(f"{self.name} provides no Hessian-vector callback")
        if not eta.base.same_as(x):
            raise ContractViolationError("hess_vec() called with mismatched base point")
        self.counters.bump("grad")
        egrad = np.asarray(self.ambient_grad(x.coords), dtype=float)
        self.counters.bump("hess")
        ehess_eta = np.asarray(self.ambient_hess_vec(x.coords, eta.coords), dtype=float)
        return TangentVector(
            self.manifold.ehess_to_rhess(x, egrad, ehess_eta, eta.coords), x
        )

    def pullback(self, x: Point, eta: TangentVector) -> float:
        """Cost of the retracted point, f(Retr_x(eta))."""
        y = self.manifold.retract(x, eta)
        return self.cost(y)


@dataclass(frozen=True)
class TaylorCheckReport:
    """Outcome of a derivative check along one direction."""

    ts: np.ndarray
    residuals: np.ndarray
    slope: float
    expected_order: int

    @property
    def passed(self):
        return self.slope >= self.expected_order - SLOPE_MARGIN


def _taylor_residuals(problem, x, eta, model, num=20, t_lo=1e-8, t_hi=1.0):
    ts = log_spaced(t_lo, t_hi, num)
    res = np.array([abs(problem.pullback(x, float(t) * eta) - model(float(t))) for t in ts])
    return ts, res


def check_gradient(problem, x, eta, num=20):
    """First-order Taylor check: residual of f(Retr_x(t eta)) against the
    linear model should shrink like t^2 for a correct gradient.

    eta must be a unit tangent vector.
    """
    if abs(eta.norm() - 1.0) > 1e-12:
        raise ContractViolationError("check_gradient needs a unit direction")
    f0 = problem.cost(x)
    slope_dir = problem.manifold.inner(x, eta, problem.grad(x))
    ts, res = _taylor_residuals(problem, x, eta, lambda t: f0 + t * slope_dir, num)
    floor = 1e-13 * (1.0 + abs(f0))
    return TaylorCheckReport(ts, res, fit_loglog_slope(ts, res, floor=floor), 2)


def check_hessian(problem, x, eta, num=20):
    """Second-order Taylor check: with a second-order retraction and a
    correct Hessian the cubic remainder gives slope 3. An exactly
    quadratic pullback reports an inf slope (zero residual).
    """
    if abs(eta.norm() - 1.0) > 1e-12:
        raise ContractViolationError("check_hessian needs a unit direction")
    f0 = problem.cost(x)
    g = problem.grad(x)
    slope_dir = problem.manifold.inner(x, eta, g)
    quad = problem.manifold.inner(x, eta, problem.hess_vec(x, eta))
    model = lambda t: f0 + t * slope_dir + 0.5 * t * t * quad
    ts, res = _taylor_residuals(problem, x, eta, model, num)
    floor = 1e-13 * (1.0 + abs(f0))
    return TaylorCheckReport(ts, res, fit_loglog_slope(ts, res, floor=floor), 3)


def estimate_lipschitz(problem, samples):
    """Sampled smoothness constants of the pullbacks.

    Parameters
    ----------
    samples : list of (Point, TangentVector)
        Base points with tangent displacements to probe.

    Returns
    -------
    (Lg_hat, LH_hat) : tuple of float
        ``Lg_hat`` is the largest observed ratio
        2|f(Retr_x(eta)) - f(x) - <eta, grad f(x)>| / ||eta||^2,
        a lower estimate of the gradient-Lipschitz constant of the
        pullbacks. ``LH_hat`` is the analogous third-order ratio
        6|residual| / ||eta||^3 (NaN when no Hessian callback exists).

    These are lower estimates; callers that need a usable upper bound
    multiply by a safety factor.
    """
    if not samples:
        raise ContractViolationError("estimate_lipschitz needs at least one sample")
    lg = 0.0
    lh = 0.0 if problem.has_hessian else math.nan
    for x, eta in samples:
        nrm = eta.norm()
        if nrm == 0.0:
            continue
        f0 = problem.cost(x)
        g = problem.grad(x)
        lin = f0 + problem.manifold.inner(x, eta, g)
        fh = problem.pullback(x, eta)
        lg = max(lg, 2.0 * abs(fh - lin) / nrm**2)
        if problem.has_hessian:
            quad = lin + 0.5 * problem.manifold.inner(x, eta, problem.hess_vec(x, eta))
            lh = max(lh, 6.0 * abs(fh - quad) / nrm**3)
    return lg, lh


def lipschitz_samples(problem, points, rng, dirs_per_point=8, max_norm=1.0, min_norm=1e-3):
    """Convenience sampler for :func:`estimate_lipschitz`.

    Draws ``dirs_per_point`` random tangent directions at each point with
    log-uniform norms in [min_norm, max_norm]. Random directions alone
    badly understate the dominant curvature in high dimension, so when a
    Hessian callback is available the sampler also runs a short power
    iteration at each point and probes along the dominant eigendirection
    at several scales.
    """
    samples = []
    for x in points:
        for _ in range(dirs_per_point):
            nrm = math.exp(rng.uniform(math.log(min_norm), math.log(max_norm)))
            samples.append((x, problem.manifold.random_tangent(x, rng, norm=nrm)))
        if problem.has_hessian:
            u = _dominant_curvature_direction(problem, x, rng)
            for nrm in (min_norm, 0.1 * max_norm, max_norm):
                samples.append((x, nrm * u))
    return samples


def _dominant_curvature_direction(problem, x, rng, iters=20):
    """Unit tangent direction of largest |<u, Hess u>| via power iteration."""
    u = problem.manifold.random_tangent(x, rng)
    for _ in range(iters):
        v = problem.hess_vec(x, u)
        nrm = v.norm()
        if nrm < 1e-14:
            break
        u = (1.0 / nrm) * v
    return (1.0 / u.norm()) * u


def rayleigh_problem(A, manifold=None):
    """Minimize x' A x / 2 over the unit sphere.

    Critical points are the unit eigenvectors of the symmetric matrix A;
    the global minimum is the smallest eigenvalue halved. Used as the
    stock eigenvector benchmark.
    """
    from .manifolds import Sphere

    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractViolationError("rayleigh_problem needs a square matrix")
    if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
        raise ContractViolationError("rayleigh_problem needs a symmetric matrix")
    if manifold is None:
        manifold = Sphere(A.shape[0])
    return Problem(
        manifold=manifold,
        cost_fn=lambda x: 0.5 * float(x @ (A @ x)),
        ambient_grad=lambda x: A @ x,
        ambient_hess_vec=lambda x, v: A @ v,
        name=f"rayleigh(n={A.shape[0]})",
    )
