"""Command-line front end.

Subcommands:

* ``run``   — solve one problem, write trace + solution artifacts
* ``sweep`` — tolerance sweep with a fitted iteration-count slope
* ``verify`` — re-check the descent inequalities on saved artifacts
* ``check`` — Taylor-order derivative checks on a named problem

Exit codes: 0 ok, 1 usage, 2 I/O or parse error, 3 solver numerical
error, 4 verification failure.
"""

import argparse
import sys

from .errors import ContractViolationError, FormatError, NumericalError
from .harness import (ExperimentSpec, derivative_check, run_experiment,
                      sweep_epsilon, verify_artifacts)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _float_or_inf(text):
    if text.lower() in ("inf", "none"):
        return None
    return float(text)


def _p_value(text):
    return None if text == "auto" else int(text)


def _eps_list(text):
    return [float(tok) for tok in text.split(",") if tok]


def _add_problem_args(parser):
    parser.add_argument("problem", choices=("rayleigh", "maxcut"))
    parser.add_argument("--n", type=int, default=30, help="Rayleigh dimension")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--matrix", help="cost matrix file (MatrixMarket or dense text)")
    parser.add_argument("--p", type=_p_value, default=None,
                        help="factorization width for maxcut (int or 'auto' = n+1)")


def _add_solver_args(parser):
    parser.add_argument("--solver", choices=("gd-fixed", "gd-armijo", "rtr"),
                        default="rtr")
    parser.add_argument("--eps-g", type=float, default=1e-6)
    parser.add_argument("--eps-h", type=_float_or_inf, default=None,
                        help="second-order tolerance; omit or 'inf' for first-order only")
    parser.add_argument("--delta0", type=float, default=None)
    parser.add_argument("--delta-bar", type=float, default=None)
    parser.add_argument("--rho-prime", type=float, default=0.1)
    parser.add_argument("--c1", type=float, default=1e-4)
    parser.add_argument("--tau", type=float, default=0.5)
    parser.add_argument("--tbar", type=float, default=1.0)
    parser.add_argument("--L", type=float, default=None,
                        help="fixed-step smoothness constant (default: 1.5x sampled)")
    parser.add_argument("--max-iters", type=int, default=10**6)


def build_parser():
    parser = _Parser(prog="riemopt",
                     description="Riemannian descent solvers with verifiable traces")
    parser.add_argument("--config", help="key = value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[], help="solve one problem")
    _add_problem_args(run)
    _add_solver_args(run)
    run.add_argument("--replicates", type=int, default=1)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--out", default="experiment")
    run.add_argument("--format", choices=("csv", "json"), default="json",
                     help="trace serialization format")
    run.add_argument("--dump-factor", action="store_true",
                     help="also write the maxcut factor Y as dense text")

    sweep = sub.add_parser("sweep", help="tolerance sweep with slope fit")
    _add_problem_args(sweep)
    _add_solver_args(sweep)
    sweep.add_argument("--eps-list", type=_eps_list, required=True,
                       help="comma-separated, strictly decreasing tolerances")
    sweep.add_argument("--order", type=int, choices=(1, 2), default=1,
                       help="2 sets eps_g = eps_h = eps (rtr only)")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--out", default="sweep")

    verify = sub.add_parser("verify", help="re-check inequalities on artifacts")
    verify.add_argument("traces", nargs="+", help="trace JSON files")
    verify.add_argument("--solution", help="solution JSON with constants/certificate")
    verify.add_argument("--f-star", type=float, default=None,
                        help="override the optimum value (user provenance)")
    verify.add_argument("--out", default=None, help="also write <out>.report.json")

    check = sub.add_parser("check", help="derivative Taylor-order checks")
    _add_problem_args(check)
    check.add_argument("--pairs", type=int, default=8)

    return parser


def _apply_config_file(parser, argv):
    """Load key = value defaults from --config before the real parse."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    defaults = {}
    try:
        with open(known.config) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise FormatError(
                        f"{known.config}:{lineno}: expected 'key = value'")
                key, value = (part.strip() for part in line.split("=", 1))
                defaults[key.replace("-", "_")] = value
    except OSError as exc:
        raise FormatError(f"cannot read config {known.config}: {exc}") from exc
    for action in _iter_actions(parser):
        dest = action.dest
        if dest in defaults:
            raw = defaults[dest]
            value = action.type(raw) if action.type else raw
            action.default = value


def _iter_actions(parser):
    for action in parser._actions:
        yield action
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                yield from _iter_actions(sub)


def _spec_from_args(args, **extra):
    return ExperimentSpec(
        problem=args.problem, solver=getattr(args, "solver", "rtr"),
        n=args.n, seed=args.seed, matrix=args.matrix, p=args.p,
        eps_g=getattr(args, "eps_g", 1e-6), eps_h=getattr(args, "eps_h", None),
        delta0=getattr(args, "delta0", None),
        delta_bar=getattr(args, "delta_bar", None),
        rho_prime=getattr(args, "rho_prime", 0.1),
        c1=getattr(args, "c1", 1e-4), tau=getattr(args, "tau", 0.5),
        tbar=getattr(args, "tbar", 1.0), L=getattr(args, "L", None),
        max_iters=getattr(args, "max_iters", 10**6),
        **extra,
    )


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)

        if args.command == "run":
            spec = _spec_from_args(
                args, replicates=args.replicates, jobs=args.jobs,
                out=args.out, trace_format=args.format,
                dump_factor=args.dump_factor)
            summary = run_experiment(spec)
            for run in summary["runs"]:
                print(f"replicate {run['replicate']}: {run['status']} in "
                      f"{run['iterations']} iterations, f = {run['f']:.9e} "
                      f"-> {run['trace']}")
            return EXIT_OK

        if args.command == "sweep":
            spec = _spec_from_args(
                args, eps_list=args.eps_list, order=args.order,
                jobs=args.jobs, out=args.out)
            doc = sweep_epsilon(spec)
            for row in doc["rows"]:
                print(f"eps={row['eps']:.3e}  iterations={row['iterations']:<8d}"
                      f" cost={row['costevals']} grad={row['gradevals']}"
                      f" hess={row['hessevals']}")
            print(f"fitted slope {doc['slope']:.3f} (cap {doc['slope_cap']})")
            if not doc["ok"]:
                print("slope exceeds the worst-case cap", file=sys.stderr)
                return EXIT_VERIFICATION
            return EXIT_OK

        if args.command == "verify":
            report = verify_artifacts(args.traces, solution_path=args.solution,
                                      f_star=args.f_star, out=args.out)
            for line in report.format_lines():
                print(line)
            return EXIT_OK if report.ok else EXIT_VERIFICATION

        if args.command == "check":
            spec = _spec_from_args(args)
            result = derivative_check(spec, pairs=args.pairs)
            for row in result["pairs"]:
                hess = (f"  hess slope {row['hess_slope']:.2f} "
                        f"{'ok' if row['hess_ok'] else 'BAD'}"
                        if "hess_slope" in row else "")
                print(f"pair {row['pair']}: grad slope {row['grad_slope']:.2f} "
                      f"{'ok' if row['grad_ok'] else 'BAD'}{hess}")
            return EXIT_OK if result["ok"] else EXIT_VERIFICATION

        parser.error(f"unknown command {args.command!r}")
    except SystemExit as exc:  # argparse --help or usage error
        code = exc.code
        return EXIT_OK if code in (0, None) else code
    except (FormatError, OSError) as exc:
        print(f"riemopt: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"riemopt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ContractViolationError as exc:
        print(f"riemopt: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
