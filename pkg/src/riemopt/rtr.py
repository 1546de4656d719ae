"""Riemannian trust regions with first- and second-order steps.

While the gradient is large the solver takes cheap first-order steps
(Cauchy point or Steihaug–Toint truncated conjugate gradients) on the
quadratic model of the pullback. Once the gradient norm drops to ``eps_g``
it either returns (no second-order target) or examines the smallest
eigenvalue of the model Hessian on the tangent space: if that eigenvalue
is at least ``-eps_h`` the point is returned with a certificate, otherwise
a radius-length *eigenstep* along the certified negative-curvature
direction forces further descent.

Step acceptance and the radius schedule follow the classic
quarter / keep / double rule driven by rho, the ratio of actual to model
decrease; candidates are accepted when rho exceeds ``rho_prime``
(strictly). The exact Riemannian Hessian is used in the model whenever a
second-order certificate is requested; with the shipped projection
retractions (second order) that certificate speaks directly about the
Riemannian Hessian. A finite-difference model built from gradient
evaluations is available for purely first-order runs.

The solver measures, along the realized trial steps, the constants the
worst-case descent lemmas consume (model-operator quadratic bound,
second-order and third-order Taylor-remainder ratios of the pullback) and
stores them in the trace for the a-posteriori checks in
:mod:`riemopt.verify`.
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapabilityError, ContractViolationError, NumericalError
from .manifolds import TangentBasis, TangentVector
from .traces import RTRRecord, RTRStatus, RTRTrace, StepType

#: eigensteps reject model operators whose dense matrix is this asymmetric
SYMMETRY_TOL = 1e-6

#: relative slack for "the step reached the trust-region boundary"
BOUNDARY_RTOL = 1e-9

#: default finite-difference increment for the gradient-based model
FD_STEP = 2.0 ** -14


class InnerSolver(enum.Enum):
    CAUCHY = "cauchy"
    TCG = "tcg"


class HessianModel(enum.Enum):
    EXACT = "exact"
    FD = "fd"


class OperatorKind(enum.Enum):
    RADIALLY_LINEAR = "radially-linear"
    LINEAR_SYMMETRIC = "linear-symmetric"


class ModelOperator:
    """The map H in the quadratic model m(eta) = f + <eta,g> + <eta,H eta>/2.

    ``kind`` declares what the solver may assume: truncated CG and
    eigensteps need a linear symmetric operator, the Cauchy step only
    radial linearity. Quadratic forms evaluated through
    :meth:`quad_with` feed a running bound on |<u,Hu>|/||u||^2, the
    operator-norm surrogate the a-posteriori checks use.
    """

    def __init__(self, apply_fn, kind):
        self.apply_fn = apply_fn
        self.kind = kind
        self.observed_quad_bound = 0.0
        self.applications = 0

    def apply(self, eta: TangentVector) -> TangentVector:
        self.applications += 1
        return self.apply_fn(eta)

    def quad_with(self, u: TangentVector, Hu: TangentVector) -> float:
        """<u, Hu> for a precomputed product, recording the Rayleigh ratio."""
        q = float(u.coords @ Hu.coords)
        n2 = float(u.coords @ u.coords)
        if n2 > 0.0:
            ratio = abs(q) / n2
            if ratio > self.observed_quad_bound:
                self.observed_quad_bound = ratio
        return q


def exact_hessian_operator(problem, x):
    """Model operator applying the exact Riemannian Hessian at x."""
    if not problem.has_hessian:
        raise CapabilityError(f"{problem.name} provides no Hessian-vector callback")
    return ModelOperator(lambda eta: problem.hess_vec(x, eta), OperatorKind.LINEAR_SYMMETRIC)


def fd_hessian_operator(problem, x, g, step=FD_STEP):
    """Radially linear finite-difference model built from gradients.

    H[eta] = (||eta||/h) * Proj_x(grad f(Retr_x(h * eta/||eta||)) - grad f(x)),
    one extra gradient evaluation and retraction per application. Only a
    first-order model: not symmetric, not usable for eigensteps.
    """
    man = problem.manifold
    g_coords = g.coords

    def apply(eta):
        nrm = eta.norm()
        if nrm == 0.0:
            return man.zero_tangent(x)
        probe = TangentVector((step / nrm) * eta.coords, x)
        gy = problem.grad(man.retract(x, probe))
        diff = man._project_array(x.coords, gy.coords) - g_coords
        return TangentVector((nrm / step) * diff, x)

    return ModelOperator(apply, OperatorKind.RADIALLY_LINEAR)


def hit_boundary(stepnorm, delta):
    """Did a step of this norm reach the trust-region boundary?"""
    return stepnorm >= delta * (1.0 - BOUNDARY_RTOL)


def model_decrease(g, H, eta):
    """m(0) - m(eta) evaluated with a fresh operator application."""
    q = H.quad_with(eta, H.apply(eta))
    return -float(eta.coords @ g.coords) - 0.5 * q


# ---------------------------------------------------------------------------
# inner solvers


def _cauchy(g, H, delta):
    """Cauchy point: exact minimizer of the model along -g in the region.

    Returns (eta, model decrease, reached boundary). Valid for any
    radially linear H; the quadratic form is evaluated along the actual
    direction, so the reported decrease is exact for the realized step.
    """
    gnorm = g.norm()
    if not gnorm > 0.0:
        raise ContractViolationError("cauchy step needs a nonzero gradient")
    if not delta > 0.0:
        raise ContractViolationError("cauchy step needs a positive radius")
    d = -g
    Hd = H.apply(d)
    q = H.quad_with(d, Hd)  # <d, H d> along the realized direction
    gg = float(g.coords @ g.coords)
    alpha_edge = delta / gnorm
    if q > 0.0:
        alpha = min(gg / q, alpha_edge)
    else:
        alpha = alpha_edge
    decrease = alpha * gg - 0.5 * alpha * alpha * q
    return alpha * d, decrease, alpha == alpha_edge


def cauchy_step(g: TangentVector, H: ModelOperator, delta: float) -> TangentVector:
    """The Cauchy step -alpha g with the optimal clipped step length.

    alpha = min(||g||^2 / <g,Hg>, delta/||g||) under positive curvature
    along g, else delta/||g||. The induced model decrease is at least
    min(delta, ||g||/c0) * ||g|| / 2 whenever |<g,Hg>| <= c0 ||g||^2.
    """
    eta, _, _ = _cauchy(g, H, delta)
    return eta


def _tcg(g, H, delta, kappa=0.1, theta=1.0, max_iters=None):
    """Steihaug–Toint truncated conjugate gradients from the origin.

    Returns (eta, model decrease, reason). The first iterate coincides
    with the Cauchy point, and each CG iteration decreases the model (a
    guard returns the best iterate if numerics ever break that), so the
    final decrease is at least the Cauchy decrease. Exits on negative
    curvature, on the trust-region boundary, or when the residual passes
    ||r_j|| <= ||r_0|| * min(kappa, ||r_0||^theta).
    """
    if H.kind is not OperatorKind.LINEAR_SYMMETRIC:
        raise ContractViolationError("truncated CG needs a linear symmetric model operator")
    gnorm = g.norm()
    if not gnorm > 0.0:
        raise ContractViolationError("truncated CG needs a nonzero gradient")
    if max_iters is None:
        max_iters = max(1, g.base.manifold.dim)

    zero = g.base.manifold.zero_tangent(g.base)
    eta, Heta = zero, zero
    r = g
    r_r = float(r.coords @ r.coords)
    target = math.sqrt(r_r) * min(kappa, math.sqrt(r_r) ** theta)
    d = -r
    e_e, e_d, d_d = 0.0, 0.0, r_r
    model_value = 0.0  # m(eta) - f(x), starts at 0 for eta = 0
    reason = "max-inner-iterations"

    for _ in range(max_iters):
        Hd = H.apply(d)
        d_Hd = H.quad_with(d, Hd)
        if d_Hd > 0.0:
            alpha = r_r / d_Hd
            e_e_new = e_e + 2.0 * alpha * e_d + alpha * alpha * d_d
        else:
            alpha = math.inf
            e_e_new = math.inf
        if d_Hd <= 0.0 or e_e_new >= delta * delta:
            # follow d to the boundary
            tau = (-e_d + math.sqrt(e_d * e_d + d_d * (delta * delta - e_e))) / d_d
            eta = eta + tau * d
            Heta = Heta + tau * Hd
            reason = "negative-curvature" if d_Hd <= 0.0 else "boundary"
            break
        eta_new = eta + alpha * d
        Heta_new = Heta + alpha * Hd
        new_model_value = float(eta_new.coords @ g.coords) + 0.5 * float(
            eta_new.coords @ Heta_new.coords
        )
        if new_model_value >= model_value:  # numerical safeguard
            reason = "model-stalled"
            break
        eta, Heta, model_value = eta_new, Heta_new, new_model_value
        e_e = e_e_new
        r = r + alpha * Hd
        r_r_new = float(r.coords @ r.coords)
        if math.sqrt(r_r_new) <= target:
            reason = "residual-target"
            break
        beta = r_r_new / r_r
        d = -r + beta * d
        r_r = r_r_new
        e_d = beta * (e_d + alpha * d_d)
        d_d = r_r + beta * beta * d_d

    decrease = -float(eta.coords @ g.coords) - 0.5 * float(eta.coords @ Heta.coords)
    return eta, decrease, reason


def truncated_cg(g, H, delta, cfg=None):
    """Truncated CG step for the trust-region subproblem (see RTRConfig
    for the kappa/theta residual test parameters)."""
    kappa = cfg.tcg_kappa if cfg else 0.1
    theta = cfg.tcg_theta if cfg else 1.0
    max_iters = cfg.tcg_max_iters if cfg else None
    eta, _, _ = _tcg(g, H, delta, kappa, theta, max_iters)
    return eta


@dataclass(frozen=True)
class EigenstepResult:
    """Either a certified spectral bound or an escape step.

    ``step`` is None when lambda_min(H) >= -eps_h was certified; otherwise
    it is the radius-length step along the negative-curvature direction
    (sign chosen so <u, g> <= 0).
    """

    step: Optional[TangentVector]
    lambda_min: float
    sym_residual: float

    @property
    def certified(self):
        return self.step is None


def eigenstep(g, H, basis: TangentBasis, delta, eps_h):
    """Check the least eigenvalue of H on the tangent space; escape if small.

    Builds the dense matrix H_ij = <v_i, H v_j> in the orthonormal basis,
    symmetrizes it (asymmetry beyond SYMMETRY_TOL is a contract error) and
    takes a dense symmetric eigendecomposition. If lambda_min >= -eps_h the
    bound is certified; otherwise the returned step is delta * u for the
    unit eigenvector u, which decreases the model by at least
    delta^2 * eps_h / 2.
    """
    if H.kind is not OperatorKind.LINEAR_SYMMETRIC:
        raise ContractViolationError("eigensteps need a linear symmetric model operator")
    x = basis.base
    B = basis.matrix
    cols = np.empty((B.shape[0], B.shape[1]))
    for j, row in enumerate(B):
        cols[j] = H.apply(TangentVector(row, x)).coords
    M = B @ cols.T  # M[i, j] = <v_i, H v_j>
    sym_residual = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if sym_residual > SYMMETRY_TOL:
        raise ContractViolationError(
            f"model operator is not symmetric (residual {sym_residual:.3e})"
        )
    Ms = 0.5 * (M + M.T)
    evals, evecs = np.linalg.eigh(Ms)
    lam_min = float(evals[0])
    if lam_min >= -eps_h:
        return EigenstepResult(None, lam_min, sym_residual)
    u = B.T @ evecs[:, 0]
    u /= np.linalg.norm(u)
    if float(u @ g.coords) > 0.0:
        u = -u
    return EigenstepResult(TangentVector(delta * u, x), lam_min, sym_residual)


def rho_ratio(problem, x, eta, model_dec):
    """Actual-over-predicted decrease of one trust-region candidate."""
    if not model_dec > 0.0:
        raise ContractViolationError(
            f"model decrease must be positive, got {model_dec:.3e} "
            "(step construction bug)"
        )
    return (problem.cost(x) - problem.pullback(x, eta)) / model_dec


# ---------------------------------------------------------------------------
# config, certificate, outer loop


@dataclass
class RTRConfig:
    """Tunables of the trust-region solver.

    ``eps_h = None`` disables the second-order target entirely (the
    classic first-order method); in that mode the model is built by
    finite differences of the gradient and steps are Cauchy points, so
    the Hessian callback is never evaluated. ``delta_bar`` and ``delta0``
    default to sqrt(dim(M)) and sqrt(dim(M))/8 at solve time.
    """

    eps_g: float = 1e-6
    eps_h: Optional[float] = None
    delta_bar: Optional[float] = None
    delta0: Optional[float] = None
    rho_prime: float = 0.1
    inner_solver: InnerSolver = InnerSolver.TCG
    hess_model: HessianModel = HessianModel.EXACT
    tcg_kappa: float = 0.1
    tcg_theta: float = 1.0
    tcg_max_iters: Optional[int] = None
    fd_step: float = FD_STEP
    max_iters: int = 10**6

    def __post_init__(self):
        if isinstance(self.inner_solver, str):
            self.inner_solver = InnerSolver(self.inner_solver)
        if isinstance(self.hess_model, str):
            self.hess_model = HessianModel(self.hess_model)
        if self.eps_h is not None and math.isinf(self.eps_h):
            self.eps_h = None
        if not self.eps_g > 0:
            raise ContractViolationError("eps_g must be positive")
        if self.eps_h is not None and not self.eps_h > 0:
            raise ContractViolationError("eps_h must be positive (or None)")
        if not 0 < self.rho_prime < 0.25:
            raise ContractViolationError("rho_prime must lie in (0, 1/4)")
        if self.delta_bar is not None and not self.delta_bar > 0:
            raise ContractViolationError("delta_bar must be positive")
        if self.delta0 is not None:
            if not self.delta0 > 0:
                raise ContractViolationError("delta0 must be positive")
            if self.delta_bar is not None and self.delta0 > self.delta_bar:
                raise ContractViolationError("delta0 must not exceed delta_bar")
        if self.max_iters < 1:
            raise ContractViolationError("max_iters must be at least 1")

    def resolved(self, manifold):
        """Fill radius defaults from the manifold dimension."""
        delta_bar = self.delta_bar if self.delta_bar is not None else math.sqrt(
            max(1, manifold.dim))
        delta0 = self.delta0 if self.delta0 is not None else delta_bar / 8.0
        if delta0 > delta_bar:
            raise ContractViolationError("delta0 must not exceed delta_bar")
        return delta_bar, delta0

    def to_dict(self, manifold=None):
        delta_bar, delta0 = (self.delta_bar, self.delta0)
        if manifold is not None:
            delta_bar, delta0 = self.resolved(manifold)
        return {
            "solver": "rtr",
            "eps_g": self.eps_g,
            "eps_h": self.eps_h,
            "delta_bar": delta_bar,
            "delta0": delta0,
            "rho_prime": self.rho_prime,
            "inner_solver": self.inner_solver.value,
            "hess_model": self.hess_model.value,
            "tcg_kappa": self.tcg_kappa,
            "tcg_theta": self.tcg_theta,
            "max_iters": self.max_iters,
        }


@dataclass(frozen=True)
class Certificate:
    """Terminal optimality certificate of a trust-region run.

    ``hess_lambda_min`` is the least eigenvalue of the model Hessian on
    the tangent space (NaN when never computed, e.g. first-order-only
    runs); ``sym_residual`` is the asymmetry of the dense matrix it came
    from. ``retraction_order`` is 2 for all shipped manifolds, so the
    spectral statement transfers to the Riemannian Hessian as-is.
    """

    grad_norm: float
    hess_lambda_min: float
    eps_g: float
    eps_h: Optional[float]
    retraction_order: int = 2
    sym_residual: float = math.nan

    def to_dict(self):
        out = {
            "grad_norm": self.grad_norm,
            "hess_lambda_min": None if math.isnan(self.hess_lambda_min)
            else self.hess_lambda_min,
            "eps_g": self.eps_g,
            "eps_h": self.eps_h,
            "retraction_order": self.retraction_order,
            "sym_residual": None if math.isnan(self.sym_residual) else self.sym_residual,
            "diagnostic_bound": None if self.eps_h is None
            else hessian_gap_diagnostic(self, 0.0, self.eps_g, 0.0),
        }
        return out


def hessian_gap_diagnostic(cert: Certificate, a: float, eps_g: float, delta: float):
    """Guaranteed Riemannian-Hessian lower bound, eps_h + a*eps_g + delta.

    ``a`` bounds the retraction's acceleration at the terminal point
    (zero for second-order retractions) and ``delta`` the operator-norm
    gap between the model and the pullback Hessian (zero for the exact
    model). With a = delta = 0 this is just eps_h.
    """
    if a < 0 or delta < 0:
        raise ContractViolationError("acceleration and model-gap bounds must be >= 0")
    eps_h = math.inf if cert.eps_h is None else cert.eps_h
    return eps_h + a * eps_g + delta


def rtr_solve(problem, x0, cfg: RTRConfig):
    """Run the trust-region method from x0.

    Returns ``(x, certificate, trace)``. Status ``FirstOrderMet`` means
    the gradient tolerance was reached with no second-order target;
    ``SecondOrderMet`` additionally certifies
    lambda_min(Hess) >= -eps_h on the tangent space; ``IterCap`` means the
    step budget ran out (never silent).
    """
    man = problem.manifold
    man._require_feasible(x0)
    delta_bar, delta0 = cfg.resolved(man)
    second_order = cfg.eps_h is not None
    if second_order and not problem.has_hessian:
        raise CapabilityError(
            "second-order trust regions (eps_h set) need a Hessian-vector callback"
        )
    # first-order-only runs must not touch the Hessian callback, and the
    # FD model is only radially linear, which rules out truncated CG
    model = cfg.hess_model if second_order else HessianModel.FD
    inner = cfg.inner_solver if model is HessianModel.EXACT else InnerSolver.CAUCHY

    trace = RTRTrace(config=cfg.to_dict(man))
    observed = {"c0": 0.0, "lipschitz_grad": 0.0, "lipschitz_hess": math.nan}
    eps = float(np.finfo(float).eps)

    x = x0
    f_x = problem.cost(x)
    if not math.isfinite(f_x):
        raise NumericalError("non-finite initial cost", trace=trace)
    delta = delta0
    k = 0
    status = None
    cert = None

    while True:
        g = problem.grad(x)
        gradnorm = g.norm()
        if not math.isfinite(gradnorm):
            raise NumericalError(f"non-finite gradient at iteration {k}", trace=trace)

        lambda_min = math.nan
        if gradnorm > cfg.eps_g:
            if k >= cfg.max_iters:
                status = RTRStatus.ITER_CAP
                cert = Certificate(gradnorm, math.nan, cfg.eps_g, cfg.eps_h)
                break
            steptype = StepType.FIRST_ORDER
            if model is HessianModel.EXACT:
                H = exact_hessian_operator(problem, x)
            else:
                H = fd_hessian_operator(problem, x, g, cfg.fd_step)
            if inner is InnerSolver.TCG:
                eta, dec, _ = _tcg(g, H, delta, cfg.tcg_kappa, cfg.tcg_theta,
                                   cfg.tcg_max_iters)
            else:
                eta, dec, _ = _cauchy(g, H, delta)
            observed["c0"] = max(observed["c0"], H.observed_quad_bound)
            quad_eta = None
        elif second_order:
            H = exact_hessian_operator(problem, x)
            basis = man.tangent_basis(x)
            es = eigenstep(g, H, basis, delta, cfg.eps_h)
            lambda_min = es.lambda_min
            if es.certified:
                status = RTRStatus.SECOND_ORDER_MET
                cert = Certificate(gradnorm, es.lambda_min, cfg.eps_g, cfg.eps_h,
                                   sym_residual=es.sym_residual)
                break
            if k >= cfg.max_iters:
                status = RTRStatus.ITER_CAP
                cert = Certificate(gradnorm, es.lambda_min, cfg.eps_g, cfg.eps_h,
                                   sym_residual=es.sym_residual)
                break
            steptype = StepType.SECOND_ORDER
            eta = es.step
            quad_eta = delta * delta * es.lambda_min  # <eta, H eta> for eta = delta*u
            dec = -float(eta.coords @ g.coords) - 0.5 * quad_eta
        else:
            status = RTRStatus.FIRST_ORDER_MET
            cert = Certificate(gradnorm, math.nan, cfg.eps_g, None)
            break

        y = man.retract(x, eta)
        f_trial = problem.cost(y)
        if not math.isfinite(f_trial):
            raise NumericalError(f"non-finite cost at iteration {k}", trace=trace)
        stepnorm = eta.norm()

        # running Taylor-remainder ratios of the pullback at the trial step
        slope = float(eta.coords @ g.coords)
        if stepnorm > 0.0:
            ratio_g = 2.0 * abs(f_trial - f_x - slope) / stepnorm**2
            observed["lipschitz_grad"] = max(observed["lipschitz_grad"], ratio_g)
            if steptype is StepType.SECOND_ORDER:
                resid3 = f_trial - f_x - slope - 0.5 * quad_eta
                ratio_h = 6.0 * abs(resid3) / stepnorm**3
                if math.isnan(observed["lipschitz_hess"]) or ratio_h > observed["lipschitz_hess"]:
                    observed["lipschitz_hess"] = ratio_h

        actual = f_x - f_trial
        precision_floor = 1e3 * eps * (1.0 + abs(f_x))
        if abs(dec) <= precision_floor and abs(actual) <= precision_floor:
            # limit of precision: both decreases drowned in rounding
            rho = math.nan
            accepted = True
            delta_next = delta
        else:
            if not dec > 0.0:
                raise NumericalError(
                    f"iteration {k}: model decrease {dec:.3e} not positive "
                    "(step construction bug)",
                    trace=trace,
                )
            rho = actual / dec
            if rho < 0.25:
                delta_next = delta / 4.0
            elif rho > 0.75 and hit_boundary(stepnorm, delta):
                delta_next = min(2.0 * delta, delta_bar)
            else:
                delta_next = delta
            accepted = rho > cfg.rho_prime

        trace.records.append(RTRRecord(
            k=k, f=f_x, gradnorm=gradnorm, delta=delta, steptype=steptype,
            stepnorm=stepnorm, modeldec=dec, rho=rho, accepted=accepted,
            lambdamin=lambda_min,
        ))
        if accepted:
            x, f_x = y, f_trial
        delta = delta_next
        k += 1

    trace.status = status
    trace.observed.update(observed)
    return x, cert, trace
