"""Command-line driver for the model problems and the quadrature tables.

Output is CSV: a ``# femtool <version> config: ...`` comment line, a
header row, then one row per mesh level (or table entry).
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import space_pattern
from .femspace import build_p1_space, build_p2_space
from .geometry import ClosestPairError
from .mesh import MeshFormatError, MeshValidationError, load_mesh
from .problems import PROBLEMS
from .quadrature import error_factor, rule_cost, tensor_rule_cost
from .solve import ConvergenceError, convergence_study

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2

DEFAULT_H = {
    "poisson": "1/4,1/8,1/16,1/32,1/64",
    "convdiff": "1/32",
    "nonlinear": "1/16,1/32,1/64,1/128,1/256",
    "stokes": "1/2,1/4,1/8,1/16",
}

EPILOG = """\
CSV columns for the model problems:
  h_target        requested maximum side length (as given)
  h               realized maximum edge length of the mesh
  ndof            number of unknowns
  iterations      Newton iterations (1 for linear problems)
  <error>         error norms: poisson L2; nonlinear Linf, L2;
                  stokes pressure_L2 (mean-free), velocity_L2
  rate_<error>    log(e_prev/e)/log(h_prev/h), empty on the first row
  residual        final Newton residual (nonlinear only)
  divergence      max |B u| over pressure dofs (stokes only)
  wall_time       seconds, only with --timing (breaks byte-identical reruns)

convdiff also writes the nodal field (x, y, u) to convdiff_field.csv, or
after the table when printing to stdout.

quad-tables columns: n, d, gm_nodes, tensor_nodes, error_factor.
sparsity prints trial,test index pairs of the pattern.

Exit status: 0 success, 1 numerical failure, 2 configuration error.
"""


class ConfigError(ValueError):
    pass


def parse_fraction(text: str) -> Fraction:
    try:
        q = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None
    if q <= 0:
        raise ConfigError(f"mesh size must be positive, got {text}")
    return q


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def _write_csv(out, meta: str, header, rows):
    out.write(f"# femtool {__version__} config: {meta}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in header])


def _emit(args, name: str, meta: str, header, rows, sink):
    if args.out is None:
        _write_csv(sink, meta, header, rows)
        return
    path = Path(args.out) / f"{name}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_csv(fh, meta, header, rows)


def _meta(args, extra=()) -> str:
    items = [f"example={args.example}"] + list(extra)
    if getattr(args, "quad_degree", None) is not None:
        items.append(f"quad_degree={args.quad_degree}")
    if getattr(args, "seed", None) is not None:
        items.append(f"seed={args.seed}")
    return " ".join(items)


def run_problem(args, sink) -> None:
    text = args.h if args.h is not None else (args.h_seq or DEFAULT_H[args.example])
    targets = [parse_fraction(t) for t in text.split(",") if t.strip()]
    if not targets:
        raise ConfigError("empty mesh-size list")
    if any(b >= a for a, b in zip(targets, targets[1:])):
        raise ConfigError("--h-seq must be strictly decreasing")
    run = PROBLEMS[args.example]
    labels = {float(t): str(t) for t in targets}
    try:
        table = convergence_study(lambda h: run(h, quad_degree=args.quad_degree), [float(t) for t in targets])
    except ValueError as exc:
        if "strictly decreasing" not in str(exc):
            raise
        raise ConfigError(f"mesh sizes {text} give meshes that are not strictly finer") from None

    rows = []
    for t, r in zip(targets, table.rows):
        r = dict(r)
        r["h_target"] = labels[float(t)]
        rows.append(r)
    header = ["h_target", "h", "ndof", "iterations"]
    for name in table.error_names:
        header += [name, f"rate_{name}"]
    header += [c for c in ("residual", "divergence") if c in rows[0]]
    if args.timing:
        header.append("wall_time")
    _emit(args, args.example, _meta(args, [f"h={','.join(labels.values())}"]), header, rows, sink)

    if args.example == "convdiff":
        sol = table.rows[-1]["solution"]
        xy, u = sol["space"].node_coords, sol["coefficients"]
        field = [{"x": float(a), "y": float(b), "u": float(c)} for (a, b), c in zip(xy, u)]
        if args.out is None:
            sink.write("\n")
        meta = _meta(args, [f"h={labels[float(targets[-1])]}", "field=nodal"])
        _emit(args, "convdiff_field", meta, ["x", "y", "u"], field, sink)


def run_quad_tables(args, sink) -> None:
    rows = []
    for n in range(1, 11):
        for d in (3, 5, 7):
            rows.append(
                {
                    "n": n,
                    "d": d,
                    "gm_nodes": rule_cost(n, d),
                    "tensor_nodes": tensor_rule_cost(n, d),
                    "error_factor": round(error_factor(n, d).error_factor, 6),
                }
            )
    _emit(args, "quad_tables", _meta(args), ["n", "d", "gm_nodes", "tensor_nodes", "error_factor"], rows, sink)


def run_sparsity(args, sink) -> None:
    try:
        mesh = load_mesh(args.mesh)
    except OSError as exc:
        raise ConfigError(f"cannot read mesh: {exc}") from None
    except (MeshFormatError, MeshValidationError) as exc:
        raise ConfigError(f"bad mesh file: {exc}") from None
    space = build_p1_space(mesh) if args.space == "p1" else build_p2_space(mesh)
    pattern = space_pattern(space, space)
    rows = [{"trial": int(i), "test": int(j)} for i, j in pattern.as_array()]
    _emit(args, "sparsity", _meta(args, [f"mesh={args.mesh}", f"space={args.space}"]), ["trial", "test"], rows, sink)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="femtool",
        description="Run the model problems or print quadrature tables as CSV.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"femtool {__version__}")
    sub = parser.add_subparsers(dest="example", required=True, metavar="example")

    def common(p):
        p.add_argument("--out", help="directory for CSV files (default: stdout)")
        p.add_argument("--seed", type=int, help="random seed, recorded in the metadata line")

    for name, text in (
        ("poisson", "-lap u = f on (-1,1)^2 with P1 elements"),
        ("convdiff", "convection-diffusion with a point source"),
        ("nonlinear", "-u'' + u^3 = f on (0,1) by Newton's method"),
        ("stokes", "colliding flow with Taylor-Hood P2/P1"),
    ):
        p = sub.add_parser(name, help=text, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        grp = p.add_mutually_exclusive_group()
        grp.add_argument("--h", help="single mesh size, fractions allowed (1/32)")
        grp.add_argument("--h-seq", help=f"comma-separated mesh sizes (default {DEFAULT_H[name]})")
        p.add_argument("--quad-degree", type=int, help="odd quadrature degree override")
        p.add_argument("--timing", action="store_true", help="add a wall_time column")
        common(p)
        p.set_defaults(func=run_problem)

    p = sub.add_parser("quad-tables", help="node counts and error factors for n=1..10, d=3,5,7")
    common(p)
    p.set_defaults(func=run_quad_tables)

    p = sub.add_parser("sparsity", help="print the geometric sparsity pattern of a mesh file")
    p.add_argument("--mesh", required=True, help="mesh file")
    p.add_argument("--space", choices=("p1", "p2"), default="p1")
    common(p)
    p.set_defaults(func=run_sparsity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    qd = getattr(args, "quad_degree", None)
    try:
        if qd is not None and (qd < 1 or qd % 2 == 0):
            raise ConfigError(f"--quad-degree must be odd and positive, got {qd}")
        if args.out is not None and not Path(args.out).is_dir():
            raise ConfigError(f"output directory does not exist: {args.out}")
        buf = io.StringIO()
        args.func(args, buf)
    except ConfigError as exc:
        print(f"femtool: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, ConvergenceError, ClosestPairError, FloatingPointError, OverflowError) as exc:
        print(f"femtool: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
