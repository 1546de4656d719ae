"""A-posteriori verification of descent and trust-region traces.

Every inequality the solvers' worst-case analysis promises is re-checked
record by record (or on aggregate iteration counts) from serialized
traces. Each report entry names the constants it used together with their
provenance:

* ``user``      — supplied on the command line / API,
* ``estimated`` — measured along the realized run (trial-step Taylor
  ratios, model quadratic-form bounds) or sampled,
* ``oracle``    — computed independently (dense eigensolver for the
  Rayleigh optimum, dual bound for the SDP).

Failures of checks whose constants are merely estimated are reported as
warnings (the inequalities are guaranteed for the true constants, which
estimates can undershoot); failures of structural checks or checks with
oracle/user constants are errors.

Inequalities are asserted with a tiny relative slack (REL_SLACK): the
analysis assumes exact arithmetic and the recorded floats carry rounding.
"""

import json
import math
from dataclasses import dataclass, field

from .errors import FormatError
from .rtr import hit_boundary
from .traces import GDStatus, GDTrace, RTRStatus, RTRTrace, StepType

REPORT_SCHEMA = "boundreport-v1"

#: relative rounding allowance on inequality checks
REL_SLACK = 1e-9

PROVENANCES = ("user", "estimated", "oracle")


@dataclass(frozen=True)
class Constant:
    """A named constant with its provenance."""

    value: float
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise FormatError(f"unknown constant provenance {self.provenance!r}")


@dataclass
class BoundEntry:
    """One verified inequality (or an informational note).

    ``passed`` is None for informational / not-applicable entries.
    ``severity`` is what a failure means: "error" or "warning".
    """

    name: str
    passed: bool
    severity: str
    detail: str
    constants: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "severity": self.severity,
            "detail": self.detail,
            "constants": {
                k: {"value": c.value, "provenance": c.provenance}
                for k, c in self.constants.items()
            },
        }

    def format_line(self):
        if self.passed is None:
            tag = "INFO"
        elif self.passed:
            tag = "PASS"
        else:
            tag = "FAIL" if self.severity == "error" else "WARN"
        return f"{tag:4s} {self.name}: {self.detail}"


@dataclass
class BoundReport:
    entries: list = field(default_factory=list)

    @property
    def ok(self):
        return not any(
            e.passed is False and e.severity == "error" for e in self.entries
        )

    @property
    def warnings(self):
        return [e for e in self.entries if e.passed is False and e.severity == "warning"]

    def to_dict(self):
        return {"schema": REPORT_SCHEMA, "ok": self.ok,
                "entries": [e.to_dict() for e in self.entries]}

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def format_lines(self):
        return [e.format_line() for e in self.entries]


def _geq(lhs, rhs):
    """lhs >= rhs up to the rounding allowance."""
    return lhs >= rhs - REL_SLACK * (abs(lhs) + abs(rhs)) - 1e-15


def _severity(*constants):
    return "warning" if any(c.provenance == "estimated" for c in constants) else "error"


def lambda_constants(c0, Lg, LH, c1=0.0, c2=0.5, c3=0.5):
    """The composite radius-floor constants.

    lambda_g = min(1/c0, c2/(Lg + c0)) / 4 and
    lambda_H = (3/4) c3 / (LH + c1); degenerate inputs (zero curvature or
    no second-order data) give inf, which downstream mins absorb.
    """
    inv_c0 = math.inf if c0 <= 0 else 1.0 / c0
    denom = Lg + c0
    lam_g = 0.25 * min(inv_c0, (c2 / denom) if denom > 0 else math.inf)
    if LH is None or math.isnan(LH):
        lam_h = math.nan
    else:
        denom_h = LH + c1
        lam_h = 0.75 * (c3 / denom_h) if denom_h > 0 else math.inf
    return lam_g, lam_h


# ---------------------------------------------------------------------------
# gradient descent


def check_gd_trace(trace: GDTrace, f_star: Constant = None, L: Constant = None):
    """All applicable descent inequalities for one GD trace."""
    if not isinstance(trace, GDTrace):
        raise FormatError("check_gd_trace needs a gdtrace-v1 trace")
    entries = []
    recs = trace.records
    cfg = trace.config
    if not recs:
        return BoundReport([BoundEntry("nonempty-trace", False, "error",
                                       "trace has no records")])
    eps_g = cfg.get("eps_g")
    mode = cfg.get("solver", "")
    steps = recs[:-1]

    # structural: monotone cost
    bad = [r.k for prev, r in zip(recs, recs[1:]) if r.f > prev.f]
    entries.append(BoundEntry(
        "monotone-cost", not bad, "error",
        "f non-increasing across records" if not bad
        else f"f increases at k={bad[0]}"))

    # structural: terminal status vs final gradient
    if trace.status is not None and eps_g is not None:
        if trace.status is GDStatus.GRAD_TOLERANCE_MET:
            ok = recs[-1].gradnorm <= eps_g
            entries.append(BoundEntry(
                "status-consistency", ok, "error",
                f"terminal gradnorm {recs[-1].gradnorm:.3e} vs eps_g {eps_g:.3e}"))
        else:
            entries.append(BoundEntry(
                "status-consistency", True, "error",
                f"status {trace.status.value} (no tolerance claim)"))

    L_obs = trace.observed.get("lipschitz")
    if L is None and L_obs is not None:
        L = Constant(L_obs, "estimated")

    # per-record sufficient decrease
    if steps and eps_g is not None:
        if mode == "gd-fixed" and cfg.get("L"):
            Lfix = Constant(float(cfg["L"]), L.provenance if L else "user")
            c = 1.0 / (2.0 * Lfix.value)
            bad = [r.k for r, nxt in zip(steps, recs[1:])
                   if not _geq(r.f - nxt.f, c * r.gradnorm**2)]
            entries.append(BoundEntry(
                "sufficient-decrease", not bad, _severity(Lfix),
                "every step decreases f by ||g||^2/(2L)" if not bad
                else f"decrease below ||g||^2/(2L) at k={bad[0]}",
                {"L": Lfix}))
        elif mode == "gd-armijo":
            c1 = float(cfg["c1"])
            bad = [r.k for r, nxt in zip(steps, recs[1:])
                   if not _geq(r.f - nxt.f, c1 * r.t * r.gradnorm**2)]
            entries.append(BoundEntry(
                "armijo-inequality", not bad, "error",
                "every accepted t satisfies the backtracking inequality" if not bad
                else f"Armijo inequality violated at k={bad[0]}"))

    # Armijo-specific bounds with the observed smoothness constant
    if mode == "gd-armijo" and steps and L is not None and L.value > 0:
        c1, tau, tbar = float(cfg["c1"]), float(cfg["tau"]), float(cfg["tbar"])
        t_floor = min(tbar, 2.0 * tau * (1.0 - c1) / L.value)
        bad = [r.k for r in steps if not _geq(r.t, t_floor)]
        entries.append(BoundEntry(
            "armijo-step-floor", not bad, _severity(L),
            f"every accepted t >= min(tbar, 2 tau (1-c1)/L) = {t_floor:.3e}"
            if not bad else f"t below the floor at k={bad[0]}",
            {"L": L}))
        inner = tbar * L.value / (2.0 * (1.0 - c1))
        count_bound = max(1, 2 + math.ceil(math.log(inner) / math.log(1.0 / tau))) \
            if inner > 0 else 1
        bad = [r.k for r in steps if r.backtracks + 1 > count_bound]
        entries.append(BoundEntry(
            "armijo-backtrack-count", not bad, _severity(L),
            f"cost evaluations per search <= {count_bound}" if not bad
            else f"too many backtracks at k={bad[0]}",
            {"L": L}))
        bad = [r.k for r in steps
               if r.gradevals != 1 or r.costevals != r.backtracks + 1]
        entries.append(BoundEntry(
            "armijo-eval-audit", not bad, "error",
            "per iteration: 1 gradient eval, backtracks+1 cost evals" if not bad
            else f"evaluation accounting off at k={bad[0]}"))

    # aggregate iteration bounds (need f*)
    if f_star is not None and steps and eps_g is not None:
        f0 = recs[0].f
        gap = f0 - f_star.value
        dec_rates = [(r.f - nxt.f) / r.gradnorm**2
                     for r, nxt in zip(steps, recs[1:]) if r.gradnorm > 0]
        if dec_rates and min(dec_rates) > 0:
            c_min = min(dec_rates)
            bound = math.ceil(gap / (c_min * eps_g**2))
            realized = trace.iterations
            if trace.status is GDStatus.GRAD_TOLERANCE_MET:
                entries.append(BoundEntry(
                    "master-iteration-bound", realized <= bound, _severity(f_star),
                    f"{realized} iterations vs ceil((f0-f*)/(c eps^2)) = {bound} "
                    f"with c = min realized decrease rate {c_min:.3e}",
                    {"f_star": f_star, "c": Constant(c_min, "estimated")}))
            # prefix inequality: min gradient so far decays like 1/sqrt(K)
            ok = True
            worst = None
            run_min_g, run_min_c = math.inf, math.inf
            for K, r in enumerate(steps, start=1):
                run_min_g = min(run_min_g, r.gradnorm)
                run_min_c = min(run_min_c, dec_rates[K - 1])
                rhs = math.sqrt(gap / run_min_c) / math.sqrt(K)
                if not _geq(rhs, run_min_g):
                    ok, worst = False, K
                    break
            entries.append(BoundEntry(
                "prefix-min-gradient", ok, _severity(f_star),
                "min_k ||g_k|| <= sqrt((f0-f*)/c) / sqrt(K) on every prefix"
                if ok else f"prefix inequality fails at K={worst}",
                {"f_star": f_star}))

        if mode == "gd-fixed" and cfg.get("L"):
            Lfix = Constant(float(cfg["L"]), L.provenance if L else "user")
            bound = math.ceil(2.0 * gap * Lfix.value / eps_g**2)
            realized = trace.iterations
            if trace.status is GDStatus.GRAD_TOLERANCE_MET:
                entries.append(BoundEntry(
                    "fixed-step-iteration-bound", realized <= bound,
                    _severity(f_star, Lfix),
                    f"{realized} iterations vs ceil(2 (f0-f*) L / eps^2) = {bound}",
                    {"f_star": f_star, "L": Lfix}))
            else:
                entries.append(BoundEntry(
                    "fixed-step-iteration-bound",
                    None if realized < bound else False,
                    _severity(f_star, Lfix),
                    f"tolerance not reached in {realized} iterations; bound {bound}",
                    {"f_star": f_star, "L": Lfix}))
        elif mode == "gd-armijo" and L is not None and L.value > 0:
            c1, tau, tbar = float(cfg["c1"]), float(cfg["tau"]), float(cfg["tbar"])
            c = c1 * min(tbar, 2.0 * tau * (1.0 - c1) / L.value)
            bound = math.ceil(gap / (c * eps_g**2))
            realized = trace.iterations
            if trace.status is GDStatus.GRAD_TOLERANCE_MET:
                entries.append(BoundEntry(
                    "armijo-iteration-bound", realized <= bound,
                    _severity(f_star, L),
                    f"{realized} iterations vs ceil((f0-f*)/(c1 min(tbar, "
                    f"2 tau (1-c1)/L) eps^2)) = {bound}",
                    {"f_star": f_star, "L": L}))

    return BoundReport(entries)


# ---------------------------------------------------------------------------
# trust regions


def check_rtr_trace(trace: RTRTrace, f_star: Constant = None, certificate=None,
                    c0: Constant = None, Lg: Constant = None, LH: Constant = None):
    """All applicable trust-region inequalities for one RTR trace."""
    if not isinstance(trace, RTRTrace):
        raise FormatError("check_rtr_trace needs an rtrtrace-v1 trace")
    entries = []
    recs = trace.records
    cfg = trace.config
    eps_g = cfg.get("eps_g")
    eps_h = cfg.get("eps_h")  # None means no second-order target
    delta0 = cfg.get("delta0")
    delta_bar = cfg.get("delta_bar")
    rho_prime = cfg.get("rho_prime")

    if c0 is None and trace.observed.get("c0") is not None:
        c0 = Constant(trace.observed["c0"], "estimated")
    if Lg is None and trace.observed.get("lipschitz_grad") is not None:
        Lg = Constant(trace.observed["lipschitz_grad"], "estimated")
    if LH is None:
        lh_obs = trace.observed.get("lipschitz_hess")
        if lh_obs is not None and not math.isnan(lh_obs):
            LH = Constant(lh_obs, "estimated")

    # structural record checks -------------------------------------------
    bad = [r.k for prev, r in zip(recs, recs[1:]) if r.f > prev.f]
    entries.append(BoundEntry(
        "monotone-cost", not bad, "error",
        "f non-increasing across records" if not bad
        else f"f increases at k={bad[0]}"))

    if rho_prime is not None:
        bad = [r.k for r in recs
               if not (r.accepted if math.isnan(r.rho) else
                       r.accepted == (r.rho > rho_prime))]
        entries.append(BoundEntry(
            "acceptance-rule", not bad, "error",
            "accepted exactly when rho > rho' (precision-guard steps accepted)"
            if not bad else f"acceptance flag inconsistent with rho at k={bad[0]}"))

    bad = [r.k for r, nxt in zip(recs, recs[1:]) if not r.accepted and nxt.f != r.f]
    entries.append(BoundEntry(
        "rejection-keeps-point", not bad, "error",
        "rejected steps leave the cost record unchanged" if not bad
        else f"cost changed after a rejected step at k={bad[0]}"))

    if delta_bar is not None:
        bad = []
        for r, nxt in zip(recs, recs[1:]):
            if math.isnan(r.rho):
                expect = r.delta  # precision-guard branch
            elif r.rho < 0.25:
                expect = r.delta / 4.0
            elif r.rho > 0.75 and hit_boundary(r.stepnorm, r.delta):
                expect = min(2.0 * r.delta, delta_bar)
            else:
                expect = r.delta
            if nxt.delta != expect:
                bad.append(r.k)
        cap_ok = all(r.delta <= delta_bar * (1 + REL_SLACK) for r in recs)
        entries.append(BoundEntry(
            "radius-schedule", not bad and cap_ok, "error",
            "every radius update matches the quarter/keep/double rule"
            if not bad and cap_ok else
            f"radius update off at k={bad[0]}" if bad else "radius exceeds delta_bar"))

    # model-decrease ledgers ----------------------------------------------
    first_steps = [r for r in recs if r.steptype is StepType.FIRST_ORDER]
    second_steps = [r for r in recs if r.steptype is StepType.SECOND_ORDER]

    if first_steps and eps_g is not None and c0 is not None:
        lim = (eps_g / c0.value) if c0.value > 0 else math.inf
        bad = [r.k for r in first_steps
               if not _geq(r.modeldec, 0.5 * min(r.delta, lim) * eps_g)]
        entries.append(BoundEntry(
            "first-order-decrease", not bad, _severity(c0),
            "model decrease >= min(delta, eps_g/c0) eps_g / 2 on all first-order steps"
            if not bad else f"first-order decrease too small at k={bad[0]}",
            {"c0": c0}))

    if eps_h is not None:
        bad = [r.k for r in second_steps
               if not _geq(r.modeldec, 0.5 * r.delta**2 * eps_h)]
        entries.append(BoundEntry(
            "second-order-decrease", not bad, "error",
            f"model decrease >= delta^2 eps_h / 2 on all {len(second_steps)} "
            "second-order steps" if not bad
            else f"eigenstep decrease too small at k={bad[0]}"))

    accept_bad = [r.k for r, nxt in zip(recs, recs[1:])
                  if r.accepted and not math.isnan(r.rho)
                  and rho_prime is not None
                  and not _geq(r.f - nxt.f, rho_prime * r.modeldec)]
    entries.append(BoundEntry(
        "accepted-step-decrease", not accept_bad, "error",
        "accepted steps decrease f by at least rho' * model decrease"
        if not accept_bad else f"accepted decrease too small at k={accept_bad[0]}"))

    # radius floor and success fraction ------------------------------------
    lam_g = lam_h = None
    if c0 is not None and Lg is not None:
        lam_g, lam_h = lambda_constants(
            c0.value, Lg.value, LH.value if LH is not None else math.nan)
    have_floor = (
        recs and lam_g is not None and eps_g is not None and delta0 is not None
    )
    if have_floor:
        terms = [delta0, lam_g * eps_g]
        if eps_h is not None and lam_h is not None and not math.isnan(lam_h):
            terms.append(lam_h * eps_h)
        floor = min(terms)
        consts = {"lambda_g": Constant(lam_g, "estimated")}
        if len(terms) == 3:
            consts["lambda_H"] = Constant(lam_h, "estimated")
        bad = [r.k for r in recs if not _geq(r.delta, floor)]
        entries.append(BoundEntry(
            "radius-floor", not bad, "warning",
            f"delta_k >= min(delta0, lambda_g eps_g, lambda_H eps_H) = {floor:.3e}"
            if not bad else f"radius below the floor at k={bad[0]}",
            consts))

        # success fraction over the whole trace
        n_total = len(recs)
        successes = sum(1 for r in recs if r.accepted)
        logs = [0.0]
        if lam_g * eps_g > 0:
            logs.append(math.log2(delta0 / (lam_g * eps_g)))
        if eps_h is not None and lam_h is not None and not math.isnan(lam_h) \
                and lam_h * eps_h > 0 and not math.isinf(lam_h):
            logs.append(math.log2(delta0 / (lam_h * eps_h)))
        needed = (2.0 / 3.0) * n_total - (1.0 / 3.0) * max(logs)
        entries.append(BoundEntry(
            "success-fraction", _geq(successes, needed), "warning",
            f"{successes} successful of {n_total} attempted steps "
            f"(lemma floor {needed:.2f})",
            consts))

    # iteration bounds (need f*) -------------------------------------------
    if f_star is not None and recs and have_floor and rho_prime is not None:
        f0 = recs[0].f
        gap = f0 - f_star.value
        c2 = c3 = 0.5
        consts = {"f_star": f_star, "lambda_g": Constant(lam_g, "estimated")}
        pre_n1 = eps_g <= delta0 / lam_g if lam_g > 0 else True
        entries.append(BoundEntry(
            "n1-precondition", None, "warning",
            f"eps_g <= delta0/lambda_g {'holds' if pre_n1 else 'fails'} "
            f"({eps_g:.1e} vs {delta0 / lam_g:.1e})", consts))
        n1 = next((r.k for r in recs if r.gradnorm <= eps_g), None)
        if n1 is None and trace.status in (RTRStatus.FIRST_ORDER_MET,
                                           RTRStatus.SECOND_ORDER_MET):
            n1 = len(recs)
        if pre_n1 and n1 is not None and lam_g * eps_g > 0:
            bound = (1.5 * gap / (rho_prime * c2 * lam_g * eps_g**2)
                     + 0.5 * max(0.0, math.log2(delta0 / (lam_g * eps_g))))
            entries.append(BoundEntry(
                "n1-iteration-bound", n1 <= bound, "warning",
                f"first eps_g-critical iterate at N1={n1} vs bound {bound:.1f}",
                consts))
        if eps_h is not None and lam_h is not None and not math.isnan(lam_h) \
                and trace.status is RTRStatus.SECOND_ORDER_MET:
            pre_a = eps_g <= (c2 / c3) * lam_h / lam_g**2 if lam_g > 0 else True
            pre_b = eps_h <= (c2 / c3) / lam_g if lam_g > 0 else True
            consts2 = dict(consts, lambda_H=Constant(lam_h, "estimated"))
            entries.append(BoundEntry(
                "n2-preconditions", None, "warning",
                f"eps_g <= (c2/c3) lambda_H/lambda_g^2 {'holds' if pre_a else 'fails'}; "
                f"eps_H <= (c2/c3)/lambda_g {'holds' if pre_b else 'fails'}", consts2))
            mineps = min(lam_g * eps_g, lam_h * eps_h)
            if pre_n1 and pre_a and pre_b and mineps > 0:
                bound = (1.5 * gap / (rho_prime * c3 * mineps**2 * eps_h)
                         + 0.5 * max(0.0, math.log2(delta0 / mineps)))
                n2 = len(recs)
                entries.append(BoundEntry(
                    "n2-iteration-bound", n2 <= bound, "warning",
                    f"second-order certificate at N2={n2} vs bound {bound:.1f}",
                    consts2))

    # terminal certificate ---------------------------------------------------
    if certificate is not None and eps_g is not None:
        grad_ok = certificate.grad_norm <= eps_g
        if trace.status is RTRStatus.SECOND_ORDER_MET and eps_h is not None:
            lam_ok = certificate.hess_lambda_min >= -eps_h
            sym_ok = (math.isnan(certificate.sym_residual)
                      or certificate.sym_residual <= 1e-8)
            entries.append(BoundEntry(
                "terminal-certificate", grad_ok and lam_ok and sym_ok, "error",
                f"||grad|| = {certificate.grad_norm:.3e} <= eps_g and "
                f"lambda_min = {certificate.hess_lambda_min:.3e} >= -eps_h"
                if grad_ok and lam_ok and sym_ok else "terminal certificate violated"))
        elif trace.status is RTRStatus.FIRST_ORDER_MET:
            entries.append(BoundEntry(
                "terminal-certificate", grad_ok, "error",
                f"||grad|| = {certificate.grad_norm:.3e} <= eps_g = {eps_g:.1e}"
                if grad_ok else "terminal gradient above tolerance"))

    return BoundReport(entries)
