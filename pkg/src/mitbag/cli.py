"""Command-line front end.

Subcommands: ball-spectrum, robin-model, effective-spectrum, verify.
Options can also come from a key=value file given by --config; explicit flags
win over file values. Exit codes: 0 pass, 1 check failed, 2 usage or input
error, 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import asymptotics, ball_dirac, boundary_effective, robin_halfline
from .numerics import NonConvergenceError
from .surface_geometry import SurfaceGrid, sphere_profile, spheroid_profile

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONCONV = 0, 1, 2, 3


def _float_list(text: str) -> list[float]:
    return [float(t) for t in str(text).replace(",", " ").split()]


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, keys use - or _."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val.strip("\"'")
    return out


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")


def _write_rows(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def _write_plot(path: str, xs, ys) -> None:
    Path(path).write_text("".join(f"{float(x)!r} {float(y)!r}\n" for x, y in zip(xs, ys)))


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ball_spectrum(args) -> int:
    kmax = args.kappa_max
    if kmax is None:
        kmax = ball_dirac.required_kappa_max(args.mass, args.radius, args.emax)
    res = ball_dirac.assemble_spectrum(args.mass, args.radius, args.emax, kmax,
                                       solver=args.solver, grid_size=args.grid)
    payload = {"config": _config_echo(args), "spectrum": res.to_dict()}
    _emit(_dump(payload), args.json)
    if args.csv:
        _write_rows(args.csv, ["energy", "multiplicity", "kappas"],
                    [(e, mult, " ".join(map(str, ks))) for e, mult, ks in res.levels])
    if args.plot:
        seq = res.positive_sequence()
        _write_plot(args.plot, range(1, seq.size + 1), seq)
    return EXIT_OK


def cmd_robin_model(args) -> int:
    rep = robin_halfline.check_expansion(args.kappa, args.K, tuple(args.hbar),
                                         min_order=args.min_order, with_bo=not args.no_bo)
    payload = {"config": _config_echo(args), "report": rep.to_dict()}
    _emit(_dump(payload), args.json)
    if args.csv:
        rows = [[r[h] for h in robin_halfline.CSV_HEADER] for r in rep.extra["rows"]]
        _write_rows(args.csv, robin_halfline.CSV_HEADER, rows)
    if args.plot:
        _write_plot(args.plot, rep.sweep, rep.residuals)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _surface(args):
    if args.spheroid is not None:
        a, c = args.spheroid
        return spheroid_profile(a, c)
    return sphere_profile(args.sphere)


def cmd_effective_spectrum(args) -> int:
    prof = _surface(args)
    n_theta = max(args.grid, boundary_effective.NYQUIST_FACTOR * (args.modes + 1))
    grid = SurfaceGrid(prof, n_theta, args.modes)
    spec = boundary_effective.effective_spectrum(grid, args.modes, k=args.k)
    payload = {"config": _config_echo(args), "spectrum": spec.to_dict()}
    _emit(_dump(payload), args.json)
    if args.csv:
        _write_rows(args.csv, ["index", "eigenvalue"],
                    [(i + 1, float(v)) for i, v in enumerate(spec.eigenvalues)])
    if args.plot:
        _write_plot(args.plot, range(1, len(spec.eigenvalues) + 1), spec.eigenvalues)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.theorem == "positive-mass":
        ms = tuple(args.masses) if args.masses else asymptotics.POSITIVE_SWEEP
        rep = asymptotics.check_theorem_positive(ms, args.radius)
    else:
        ms = tuple(args.masses) if args.masses else asymptotics.NEGATIVE_SWEEP
        rep = asymptotics.check_theorem_negative(ms, args.radius, C=args.C)
    _emit(rep.to_json(), args.json)
    if args.csv:
        _write_rows(args.csv, ["sweep", "residual"], zip(rep.sweep, rep.residuals))
    if args.plot:
        _write_plot(args.plot, rep.sweep, rep.residuals)
    return EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_SKIP = {"func", "config", "json", "csv", "plot"}


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _SKIP}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; explicit flags take precedence")
    p.add_argument("--json", metavar="PATH", help="write JSON here instead of stdout")
    p.add_argument("--csv", metavar="PATH", help="write a CSV table")
    p.add_argument("--plot", metavar="PATH", help="write two-column plot data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mitbag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ball-spectrum", help="MIT bag spectrum of the ball")
    p.add_argument("--mass", type=float, default=0.0)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--emax", type=float, default=6.0)
    p.add_argument("--kappa-max", type=int, default=None)
    p.add_argument("--solver", choices=["bessel", "fdm"], default="bessel")
    p.add_argument("--grid", type=int, default=2000, help="FDM grid size")
    _common(p)
    p.set_defaults(func=cmd_ball_spectrum)

    p = sub.add_parser("robin-model", help="weighted Robin model over an hbar sweep")
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--K", type=float, default=0.0)
    p.add_argument("--hbar", type=_float_list, default=list(robin_halfline.HBAR_SWEEP))
    p.add_argument("--min-order", type=float, default=5.5)
    p.add_argument("--no-bo", action="store_true", help="skip the Born-Oppenheimer column")
    _common(p)
    p.set_defaults(func=cmd_robin_model)

    p = sub.add_parser("effective-spectrum", help="effective boundary operator spectrum")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sphere", type=float, default=1.0, metavar="R")
    g.add_argument("--spheroid", type=float, nargs=2, metavar=("A", "C"), default=None)
    p.add_argument("--modes", type=int, default=8, help="azimuthal cutoff m_phi_max")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--grid", type=int, default=64, help="polar nodes (doubled once)")
    _common(p)
    p.set_defaults(func=cmd_effective_spectrum)

    p = sub.add_parser("verify", help="large-mass theorem pipelines")
    p.add_argument("--theorem", choices=["positive-mass", "negative-mass"], required=True)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--masses", type=_float_list, default=None)
    p.add_argument("--C", type=float, default=asymptotics.SANDWICH_C)
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def _config_path(argv: list[str]) -> Optional[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]):
    path = _config_path(argv)
    choices = parser._subparsers._group_actions[0].choices
    if path is None or not argv or argv[0] not in choices:
        return parser.parse_args(argv)
    cfg = read_config(path)
    sub = choices[argv[0]]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in cfg.items():
        if key not in known or key in ("config", "func", "help"):
            raise ValueError(f"unknown config key {key!r} for {argv[0]}")
        act = known[key]
        if act.nargs == 0:
            defaults[key] = val.lower() in ("1", "true", "yes", "on")
        elif act.nargs is not None:
            defaults[key] = [act.type(v) for v in val.replace(",", " ").split()]
        else:
            defaults[key] = val  # argparse applies `type` to string defaults
        if act.choices is not None and val not in act.choices:
            raise ValueError(f"config {key}={val!r} not in {list(act.choices)}")
    sub.set_defaults(**defaults)
    for act in sub._actions:
        if act.dest in defaults and act.required:
            act.required = False
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"mitbag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        print(f"mitbag: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except ArithmeticError as exc:
        print(f"mitbag: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except ValueError as exc:
        print(f"mitbag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
