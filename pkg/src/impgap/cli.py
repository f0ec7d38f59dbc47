"""Command-line interface.

Exit codes: 0 success (feasible candidate, residuals within tolerance, no
gap), 1 input error, 2 infeasible candidate, 3 residuals above tolerance,
4 gap detected, 5 inconclusive.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .analysis import (DEFAULT_EPS_GRID, GAP_DETECTED, INCONCLUSIVE, ISOLATION_TOL, gap_probe,
                       isolation_probe)
from .corpus import (EXAMPLES, example_ids, example_multiplier_text, export_example, load_example,
                     load_example_minimizer)
from .dynamics import IntegrationError
from .pmp import GridMismatchError, classify_normality, extremal_residuals, load_multipliers
from .problemfile import ProblemFileError, load_problem
from .processes import read_extended_csv, write_extended_csv
from .solver import SolveConfig, solve_extended, solve_strict_restricted

__all__ = ["main", "build_parser", "RunManifest", "EXIT_OK", "EXIT_INPUT", "EXIT_INFEASIBLE",
           "EXIT_RESIDUAL", "EXIT_GAP", "EXIT_INCONCLUSIVE"]

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_RESIDUAL, EXIT_GAP, EXIT_INCONCLUSIVE = range(6)
_DEFAULTS = SolveConfig()


class InputError(Exception):
    """Bad user input; reported on standard error with exit code 1."""


@dataclass
class RunManifest:
    """Everything needed to replay a command.

    ``argv`` is the full argument list; :func:`main` on it reproduces the
    outputs, since every run is seeded.
    """

    command: str
    problem: str
    overrides: dict
    seed: int
    out: str | None
    version: str = __version__
    argv: list = field(default_factory=list)

    def write(self, directory: Path) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _add_problem(sp):
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--example", choices=example_ids(), help="bundled example id")
    g.add_argument("--problem", metavar="PATH", help="problem file (TOML)")


def _add_solver(sp):
    d = _DEFAULTS
    sp.add_argument("--N", type=int, default=d.N, help="parameter intervals (default %(default)s)")
    sp.add_argument("--multistarts", type=int, default=d.multistarts,
                    help="multistart runs (default %(default)s)")
    sp.add_argument("--seed", type=int, default=d.seed, help="root seed (default %(default)s)")
    sp.add_argument("--tol-feas", type=float, default=d.tol_feas,
                    help="feasibility tolerance (default %(default)s)")
    sp.add_argument("--tol-stat", type=float, default=d.tol_stat,
                    help="stationarity tolerance (default %(default)s)")


def _add_out(sp):
    sp.add_argument("--out", metavar="DIR", default=None,
                    help="directory for reports, CSV files and the run manifest "
                         "(default: print only)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="impgap",
                                 description="Impulsive optimal control: extended and strict "
                                             "solves, maximum-principle checks and gap probes.")
    ap.add_argument("--version", action="version", version=f"impgap {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve the extended or an eps-restricted strict problem")
    _add_problem(sp)
    _add_solver(sp)
    sp.add_argument("--strict-eps", type=float, default=None,
                    help="solve the strict problem with w0 >= eps (default: extended problem)")
    _add_out(sp)

    sp = sub.add_parser("check", help="maximum-principle residuals of a process and multipliers")
    _add_problem(sp)
    sp.add_argument("--trajectory", metavar="CSV",
                    help="extended process (default: bundled minimizer of --example)")
    sp.add_argument("--multipliers", metavar="FILE",
                    help="multiplier file (default: bundled multipliers of --example)")
    sp.add_argument("--tol", type=float, default=1e-5,
                    help="residual tolerance (default %(default)s)")
    _add_out(sp)

    sp = sub.add_parser("classify", help="normal / abnormal classification of a process")
    _add_problem(sp)
    sp.add_argument("--trajectory", metavar="CSV",
                    help="extended process (default: bundled minimizer of --example)")
    sp.add_argument("--tol", type=float, default=1e-6,
                    help="LP tolerance (default %(default)s)")
    _add_out(sp)

    sp = sub.add_parser("gap", help="empirical gap probe with no-gap certification")
    _add_problem(sp)
    _add_solver(sp)
    sp.add_argument("--eps-grid", type=_floats,
                    default=list(DEFAULT_EPS_GRID),
                    help="comma-separated eps values (default %s)"
                         % ",".join(map(str, DEFAULT_EPS_GRID)))
    _add_out(sp)

    sp = sub.add_parser("isolate", help="smallest violation of strict processes near a process")
    _add_problem(sp)
    _add_solver(sp)
    sp.add_argument("--trajectory", metavar="CSV",
                    help="extended process (default: bundled minimizer of --example)")
    sp.add_argument("--delta", type=float, required=True, help="d-infinity radius")
    sp.add_argument("--strict-eps", type=float, default=0.05,
                    help="lower bound on w0 (default %(default)s)")
    sp.add_argument("--isolation-tol", type=float, default=ISOLATION_TOL,
                    help="violation above which the process is isolated (default %(default)s)")
    _add_out(sp)

    sp = sub.add_parser("examples", help="list or export the bundled examples")
    esub = sp.add_subparsers(dest="action", required=True)
    esub.add_parser("list", help="list example ids")
    ex = esub.add_parser("export", help="copy an example's files to a directory")
    ex.add_argument("id", help="example id")
    ex.add_argument("--out", metavar="DIR", default=".", help="target directory (default %(default)s)")

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest", help="manifest.json written by a previous run")
    return ap


# ---------------------------------------------------------------- helpers


def _problem(args):
    if args.example:
        return load_example(args.example), args.example
    return load_problem(args.problem), args.problem


def _trajectory(args):
    if getattr(args, "trajectory", None):
        try:
            return read_extended_csv(Path(args.trajectory))
        except OSError as exc:
            raise InputError(f"{args.trajectory}: {exc.strerror or exc}") from None
        except ValueError as exc:
            raise InputError(f"{args.trajectory}: {exc}") from None
    if args.example:
        return load_example_minimizer(args.example)
    raise InputError("--trajectory is required with --problem")


def _config(args) -> SolveConfig:
    try:
        return SolveConfig(N=args.N, multistarts=args.multistarts, seed=args.seed,
                           tol_feas=args.tol_feas, tol_stat=args.tol_stat)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _emit(args, name: str, text: str) -> None:
    sys.stdout.write(text)
    if args.out:
        (Path(args.out) / name).write_text(text, encoding="utf-8")


def _prepare_out(args, argv, problem_id: str, overrides: dict) -> None:
    if not args.out:
        return
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"{out}: {exc.strerror or exc}") from None
    RunManifest(command=args.command, problem=problem_id, overrides=overrides,
                seed=getattr(args, "seed", 0), out=str(out), argv=list(argv)).write(out)


def _overrides(args) -> dict:
    skip = {"command", "example", "problem", "out", "seed", "action"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _candidate_text(c, label: str) -> str:
    lines = [f"[{label}]", f"cost = {c.cost!r}", f"residual = {c.residual:.3e}",
             f"feasible = {c.feasible}", f"converged = {c.converged}",
             f"S = {c.process.S!r}", f"eps = {c.eps:g}", f"best run = {c.run}", "", "[runs]"]
    for r, cost, res, feas, conv in c.runs:
        lines.append(f"run {r}: cost = {cost:.10g} residual = {res:.3e} feasible = {feas} "
                     f"converged = {conv}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands


def cmd_solve(args, argv) -> int:
    p, pid = _problem(args)
    cfg = _config(args)
    _prepare_out(args, argv, pid, _overrides(args))
    if args.strict_eps is not None:
        if not 0.0 < args.strict_eps < 1.0:
            raise InputError("--strict-eps must lie in (0, 1)")
        c = solve_strict_restricted(p, args.strict_eps, cfg)
        label = f"strict solve, eps = {args.strict_eps:g}"
    else:
        c = solve_extended(p, cfg)
        label = "extended solve"
    _emit(args, "report.txt", _candidate_text(c, label))
    if args.out:
        write_extended_csv(c.process, Path(args.out) / "candidate.csv")
        (Path(args.out) / "solver.log").write_text("\n".join(c.log) + "\n", encoding="utf-8")
    return EXIT_OK if c.feasible else EXIT_INFEASIBLE


def cmd_check(args, argv) -> int:
    p, pid = _problem(args)
    ep = _trajectory(args)
    _prepare_out(args, argv, pid, _overrides(args))
    if args.multipliers:
        source = Path(args.multipliers)
    elif args.example:
        source = example_multiplier_text(args.example)
    else:
        raise InputError("--multipliers is required with --problem")
    ms = load_multipliers(source, p, ep)
    rep = extremal_residuals(p, ep, ms)
    _emit(args, "residuals.txt", rep.to_text(args.tol))
    return EXIT_OK if rep.ok(args.tol) else EXIT_RESIDUAL


def cmd_classify(args, argv) -> int:
    p, pid = _problem(args)
    ep = _trajectory(args)
    _prepare_out(args, argv, pid, _overrides(args))
    c = classify_normality(p, ep, tol=args.tol)
    _emit(args, "classification.txt", c.to_text())
    return EXIT_OK


def cmd_gap(args, argv) -> int:
    p, pid = _problem(args)
    cfg = _config(args)
    if any(not 0.0 < e < 1.0 for e in args.eps_grid):
        raise InputError("--eps-grid values must lie in (0, 1)")
    _prepare_out(args, argv, pid, _overrides(args))
    known = load_example_minimizer(args.example) if args.example else None
    rep = gap_probe(p, cfg, eps_grid=args.eps_grid, minimizer=known)
    _emit(args, "gap.txt", rep.to_text())
    if args.out:
        (Path(args.out) / "gap.csv").write_text(rep.to_csv(), encoding="utf-8")
    if rep.conclusion == GAP_DETECTED:
        return EXIT_GAP
    if rep.conclusion == INCONCLUSIVE:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_isolate(args, argv) -> int:
    p, pid = _problem(args)
    ep = _trajectory(args)
    cfg = _config(args)
    if args.delta <= 0 or not 0.0 < args.strict_eps < 1.0:
        raise InputError("--delta must be positive and --strict-eps in (0, 1)")
    _prepare_out(args, argv, pid, _overrides(args))
    res = isolation_probe(p, ep, args.delta, cfg, eps=args.strict_eps, tol=args.isolation_tol)
    _emit(args, "isolation.txt", f"[isolation]\n{res}\n")
    if args.out and res.process is not None:
        write_extended_csv(res.process, Path(args.out) / "nearest.csv")
    return EXIT_OK


def cmd_examples(args, argv) -> int:
    if args.action == "list":
        for eid in example_ids():
            print(f"{eid}  {EXAMPLES[eid]}")
        return EXIT_OK
    if args.id not in EXAMPLES:
        raise InputError(f"unknown example {args.id!r}; known: {', '.join(example_ids())}")
    try:
        paths = export_example(args.id, args.out)
    except OSError as exc:
        raise InputError(f"{args.out}: {exc.strerror or exc}") from None
    for path in paths:
        print(path)
    return EXIT_OK


_COMMANDS = {"solve": cmd_solve, "check": cmd_check, "classify": cmd_classify, "gap": cmd_gap,
             "isolate": cmd_isolate, "examples": cmd_examples}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.command == "replay":
            try:
                manifest = RunManifest.read(args.manifest)
            except (OSError, ValueError, TypeError) as exc:
                raise InputError(f"{args.manifest}: cannot read manifest ({exc})") from None
            return main(manifest.argv)
        return _COMMANDS[args.command](args, argv)
    except (InputError, ProblemFileError, GridMismatchError) as exc:
        print(f"impgap: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IntegrationError as exc:
        print(f"impgap: integration failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
