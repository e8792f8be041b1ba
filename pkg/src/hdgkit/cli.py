"""``hdgkit`` command line: solve, sweep, rates and dump subcommands.

Exit codes: 0 converged, 1 usage error, 2 non-convergence, 3 numerical
failure. Logs go to stderr; CSV/JSON/summary output to stdout or files.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import densekit
from .errors import HdgError, LineSearchFailed, NumericalFailure
from .hdglocal import assemble_element_operators
from .newtonstep import TimeStepError
from .studyrun import (CASES, CaseSpec, build_case, convdiff_sinsin, convergence_study, load_config,
                       rates_to_csv, rows_to_csv, rows_to_json, run_case, run_sweep)
from .traceassembly import assemble_global, dump_matrix

log = logging.getLogger("hdgkit")

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _case_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    nargs = "+" if multi else None
    p.add_argument("--case", choices=CASES, default="burgers2d", help="model problem")
    p.add_argument("--k", type=int, nargs=nargs, default=[1] if multi else 1, help="polynomial degree(s)")
    p.add_argument("--n", type=int, nargs=nargs, default=[16] if multi else 16,
                   help="elements per direction, 1/h")
    p.add_argument("--precond", choices=("none", "bj", "asm"), nargs=nargs,
                   default=["bj"] if multi else "bj", help="base preconditioner(s)")
    p.add_argument("--poly-degree", type=int, nargs=nargs, default=[0] if multi else 0,
                   help="harmonic-Ritz polynomial degree(s) P; 0 disables the polynomial layer")
    p.add_argument("--ritz-seed", type=int, default=0, help="seed of the Arnoldi start vector")
    p.add_argument("--ritz-per-restart", action="store_true",
                   help="recompute Ritz values at every GMRES restart")
    p.add_argument("--restart", type=int, default=50, help="GMRES restart length")
    p.add_argument("--gmres-tol", type=float, default=1e-6, help="relative GMRES tolerance")
    p.add_argument("--max-gmres", type=int, default=1000, help="GMRES iteration cap per solve")
    p.add_argument("--orth", choices=("cgs", "mgs"), default="cgs", help="Gram-Schmidt variant")
    p.add_argument("--steady", action="store_true", help="steady solve (default)")
    p.add_argument("--dt", type=float, default=None, help="backward-Euler time step")
    p.add_argument("--steps", type=int, default=1, help="number of time steps")
    p.add_argument("--newton-tol", type=float, default=1e-8, help="nonlinear residual tolerance")
    p.add_argument("--max-newton", type=int, default=50, help="Newton iteration cap")
    p.add_argument("--tau", type=float, default=None, help="stabilization override")
    p.add_argument("--nu", type=float, default=1.0 / 200.0, help="Burgers viscosity")
    p.add_argument("--nquad", type=int, default=None, help="1-D Gauss points (default k+2)")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help="parallel width (0 = all cores; default HDG_THREADS or 1)")
    p.add_argument("--config", default=None, help="key = value file overriding defaults")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdgkit", description="HDG trace-system solver benchmarks.",
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one case and print a summary")
    _case_flags(p)
    _common_flags(p)
    p.add_argument("--dump-matrix", default=None, help="write the first Newton operator here")
    p.add_argument("--json", default=None, help="write the report as JSON to this path ('-' = stdout)")
    p.add_argument("--out", default=None, help="write the summary to this path instead of stdout")

    p = sub.add_parser("sweep", help="run a grid of cases and emit CSV rows")
    _case_flags(p, multi=True)
    _common_flags(p)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.add_argument("--json", default=None, help="also write a JSON report here")
    p.add_argument("--repeat", type=int, default=1, help="repetitions per case (median/min timers)")
    p.add_argument("--warmup", action="store_true", help="one untimed warm-up run per case")
    p.add_argument("--parallel-cases", type=int, default=1,
                   help="worker processes; timers are then flagged unreliable")

    p = sub.add_parser("rates", help="L2 convergence study against the manufactured solution")
    p.add_argument("--case", choices=("poisson2d", "convdiff2d"), default="poisson2d")
    p.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--precond", choices=("none", "bj", "asm"), default="asm")
    p.add_argument("--poly-degree", type=int, default=10)
    p.add_argument("--gmres-tol", type=float, default=1e-12)
    p.add_argument("--newton-tol", type=float, default=1e-11)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    _common_flags(p)

    p = sub.add_parser("dump", help="assemble the operator at the initial state and dump it")
    _case_flags(p)
    _common_flags(p)
    p.add_argument("--out", required=True, help="binary HDGK output path")
    parser.epilog = _flag_summary(sub)
    return parser


def flag_registry(parser: argparse.ArgumentParser | None = None) -> dict:
    """Long option strings accepted by every subcommand."""
    parser = parser or build_parser()
    sub = parser._subparsers._group_actions[0]
    return {name: sorted(o for a in p._actions for o in a.option_strings if o.startswith("--"))
            for name, p in sub.choices.items()}


def _flag_summary(sub) -> str:
    lines = ["flags per subcommand (see 'hdgkit <command> --help'):"]
    for name, p in sub.choices.items():
        flags = sorted(o for a in p._actions for o in a.option_strings if o.startswith("--"))
        lines.append(f"  {name}: " + " ".join(flags))
    lines.append("exit codes: 0 converged, 1 usage error, 2 not converged, 3 numerical failure")
    return "\n".join(lines)


def _apply_config(parser, argv):
    """Re-parse with defaults overridden by ``--config`` (CLI flags still win)."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        raise UsageError(f"config {args.config}: {exc}") from exc
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"config {args.config}: unknown keys {sorted(unknown)}")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def _validate(args) -> None:
    if getattr(args, "steady", False) and args.dt is not None:
        raise UsageError("--steady conflicts with --dt: choose a steady solve or time stepping")
    if getattr(args, "dt", None) is not None and args.dt <= 0:
        raise UsageError("--dt must be positive")
    if getattr(args, "steps", 1) < 1:
        raise UsageError("--steps must be >= 1")
    for name in ("k", "n", "poly_degree"):
        vals = getattr(args, name, None)
        for v in (vals if isinstance(vals, list) else [vals]):
            if v is not None and v < (0 if name == "poly_degree" else 1):
                raise UsageError(f"--{name.replace('_', '-')} out of range: {v}")


def _spec(args, **over) -> CaseSpec:
    base = dict(
        case=args.case, k=args.k, n=args.n, precond=args.precond, poly_degree=args.poly_degree,
        seed=args.ritz_seed, ritz_per_restart=args.ritz_per_restart, restart=args.restart,
        gmres_tol=args.gmres_tol, max_gmres=args.max_gmres, orth=args.orth,
        newton_tol=args.newton_tol, max_newton=args.max_newton, dt=args.dt, steps=args.steps,
        tau=args.tau, nu=args.nu, nquad=args.nquad,
    )
    base.update(over)
    try:
        return CaseSpec(**base)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _dump(spec: CaseSpec, path) -> None:
    model, space, state = build_case(spec)
    u_prev = state.u if spec.dt is not None else None
    ops = assemble_element_operators(model, state, space, dt=spec.dt, u_prev=u_prev)
    K, r = assemble_global(ops, space.mesh)
    dump_matrix(path, K, r)
    log.info("wrote %s (%d faces, block %d)", path, K.nf, K.bs)


def initial_guess_text(spec: CaseSpec) -> str:
    if spec.case == "burgers2d":
        return "u = 1 - 2x"
    if spec.case == "poisson2d" and spec.dt is not None:
        return "u = sin(pi x) sin(pi y)"
    return "u = 0"


def summary_text(spec: CaseSpec, rep) -> str:
    mode = "steady" if spec.dt is None else f"backward Euler dt={spec.dt:g} steps={spec.steps}"
    lines = [
        f"case            {spec.case}  k={spec.k}  n={spec.n}  ({mode})",
        f"preconditioner  {spec.label}",
    ]
    lines.append(f"initial guess   {initial_guess_text(spec)}")
    lines += [
        f"converged       {'yes' if rep.converged else 'no'}",
        f"residual        {rep.residual_final:.3e}",
        f"n_newton        {rep.n_newton}",
        f"n_gmres         {rep.n_gmres_total}",
        f"t_ass           {rep.t_ass:.4f} s",
        f"t_mv            {rep.t_mv:.4f} s",
        f"t_prec          {rep.t_prec:.4f} s",
        f"t_orth          {rep.t_orth:.4f} s",
        f"t_total         {rep.t_total:.4f} s",
    ]
    return "\n".join(lines) + "\n"


def _report_dict(spec: CaseSpec, rep) -> dict:
    return {
        "spec": spec.to_dict(), "precond": spec.label, "converged": rep.converged,
        "n_newton": rep.n_newton, "n_gmres": rep.n_gmres_total, "gmres_per_newton": rep.gmres_iters,
        "residual_history": rep.residual_history, "alphas": rep.alphas,
        "t_ass": rep.t_ass, "t_setup": rep.t_setup, "t_mv": rep.t_mv, "t_prec": rep.t_prec,
        "t_orth": rep.t_orth, "t_total": rep.t_total,
        "initial_guess": initial_guess_text(spec),
    }


def cmd_solve(args) -> int:
    spec = _spec(args)
    if args.dump_matrix:
        _dump(spec, args.dump_matrix)
    _, rep, _, _ = run_case(spec)
    if args.json:
        _emit(json.dumps(_report_dict(spec, rep), indent=2) + "\n", args.json)
    if args.json != "-":
        _emit(summary_text(spec, rep), args.out)
    return EXIT_OK if rep.converged else EXIT_NOCONV


def cmd_sweep(args) -> int:
    specs = [_spec(args, k=k, n=n, precond=pc, poly_degree=p)
             for k in args.k for n in args.n for pc in args.precond for p in args.poly_degree]
    rows = run_sweep(specs, args.repeat, args.warmup, args.parallel_cases)
    _emit(rows_to_csv(rows), args.out)
    if args.json:
        _emit(rows_to_json(rows) + "\n", args.json)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOCONV


def cmd_rates(args) -> int:
    if args.case == "poisson2d":
        from .pdemodels import sinsin_poisson
        model = sinsin_poisson(tau=1.0 if args.tau is None else args.tau)
    else:
        model = convdiff_sinsin(tau=args.tau)
    rows = convergence_study(model, args.k, args.n, args.precond, args.poly_degree,
                             args.gmres_tol, args.newton_tol)
    _emit(rates_to_csv(rows), args.out)
    return EXIT_OK


def cmd_dump(args) -> int:
    _dump(_spec(args), args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "rates": cmd_rates, "dump": cmd_dump}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        _validate(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)])
    try:
        densekit.set_threads(args.threads)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hdgkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TimeStepError as exc:
        print(f"hdgkit: {exc}", file=sys.stderr)
        if isinstance(exc.cause, LineSearchFailed):
            return EXIT_NOCONV
        return EXIT_NUMERIC if isinstance(exc.cause, NumericalFailure) else EXIT_USAGE
    except LineSearchFailed as exc:
        print(f"hdgkit: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except NumericalFailure as exc:
        print(f"hdgkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HdgError, ValueError, OSError) as exc:
        print(f"hdgkit: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
