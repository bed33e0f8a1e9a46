"""Command-line entry point: ``tdnns converge|interp|stability|dump-basis``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..mesh import REF_VERTICES
from ..reference import SIGMA, V, W, build_basis
from .study import (
    CONVERGENCE_ERRORS,
    CONVERGENCE_RATED,
    INTERP_ERRORS,
    STABILITY_COLUMNS,
    STABILITY_VALUES,
    ConfigError,
    StudyConfig,
    parse_config,
    run_study,
)

COMMAND_KIND = {"converge": "solve", "interp": "interp", "stability": "stability"}

CSV_HELP = f"""\
CSV output (header row, then one row per level; rate_* and ratio_* are
nan on the first level):
  converge   n, h, ndofs, {', '.join(CONVERGENCE_ERRORS)}, residual,
             {', '.join('rate_' + c for c in CONVERGENCE_RATED)}
             l2/face/dual are the three parts of the discrete stress-norm
             error, sigma_h their combination, hcurl the displacement
             error, combined = sigma_h + hcurl, residual the relative
             residual of the linear solve.
  interp     n, h, {', '.join(INTERP_ERRORS)},
             rate_* for each error column
  stability  {', '.join(STABILITY_COLUMNS)},
             {', '.join('ratio_' + v for v in STABILITY_VALUES)}
  dump-basis space, order, point, x, y, z, basis, component, value

Config file: flat 'key = value' lines, '#' comments. Keys: case, order
(alias k), levels, E, nu, csv, vtk, exploratory. Command-line flags
override the file.
"""


def _levels(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdnns",
        description="Mixed elasticity studies on the unit cube with tangential-displacement / normal-normal-stress elements.",
        epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=("converge", "interp", "stability", "dump-basis"))
    parser.add_argument("--config", type=Path, help="key = value study configuration file")
    parser.add_argument("--case", help="manufactured case: LINEAR, TRIG or MIXED")
    parser.add_argument("--order", "-k", type=int, help="polynomial order k (1 or 2)")
    parser.add_argument("--levels", type=_levels, help="comma separated subdivisions per cube edge, e.g. 2,4,8")
    parser.add_argument("--E", type=float, help="Young's modulus")
    parser.add_argument("--nu", type=float, help="Poisson ratio (below 0.49 unless --exploratory)")
    parser.add_argument("--csv", help="write the table to this path as well as stdout")
    parser.add_argument("--vtk", action="store_true", default=None, help="write VTK files of each solve")
    parser.add_argument("--vtk-dir", type=Path, default=Path("vtk"), help="directory for VTK output (default ./vtk)")
    parser.add_argument("--dump-matrix", type=Path, help="converge only: write the finest system matrix as 'row col value' lines")
    parser.add_argument("--jobs", type=int, default=1, help="run levels concurrently in this many processes")
    parser.add_argument("--exploratory", action="store_true", default=None, help="allow nu up to 1/2 (not validated)")
    parser.add_argument("--space", choices=(SIGMA, V, W), default=SIGMA, help="dump-basis: which element (W is built with order k+1)")
    return parser


def _config(args, kind: str) -> StudyConfig:
    overrides = dict(
        case=args.case,
        order=args.order,
        levels=args.levels,
        E=args.E,
        nu=args.nu,
        csv=args.csv,
        vtk=args.vtk,
        exploratory=args.exploratory,
        kind=kind,
    )
    text = args.config.read_text() if args.config else ""
    return parse_config(text, **overrides)


def _sample_points() -> np.ndarray:
    """Vertices, edge midpoints and centroid of the reference cell."""
    mids = [(REF_VERTICES[a] + REF_VERTICES[b]) / 2 for a in range(4) for b in range(a + 1, 4)]
    return np.vstack([REF_VERTICES, mids, REF_VERTICES.mean(axis=0)])


def dump_basis(space: str, order: int, out) -> None:
    basis = build_basis(space, order)
    pts = _sample_points()
    vals = basis.tabulate(pts).reshape(len(pts), basis.size, -1)
    out.write("space,order,point,x,y,z,basis,component,value\n")
    for q, x in enumerate(pts):
        for i in range(basis.size):
            for c, v in enumerate(vals[q, i]):
                out.write(f"{space},{order},{q},{x[0]:.6g},{x[1]:.6g},{x[2]:.6g},{i},{c},{v:.17g}\n")


def _dump_matrix(config: StudyConfig, path: Path) -> None:
    from ..assembly import assemble_system, write_coo
    from .study import _spaces

    case, _, S, Vs = _spaces(config, max(config.levels))
    write_coo(assemble_system(S, Vs, config.material, case).matrix(), path)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(parser, args)
    except BrokenPipeError:
        # reader closed early (e.g. piped into head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


def _run(parser, args) -> int:
    try:
        if args.command == "dump-basis":
            order = args.order
            if order is None:
                order = _config(args, "solve").order
            if args.space == W:
                order += 1
            dump_basis(args.space, order, sys.stdout)
            return 0
        config = _config(args, COMMAND_KIND[args.command])
        if args.dump_matrix is not None:
            if args.command != "converge":
                parser.error("--dump-matrix applies to converge only")
            _dump_matrix(replace(config, csv=None), args.dump_matrix)
        table = run_study(config, vtk_dir=args.vtk_dir, jobs=args.jobs)
    except BrokenPipeError:
        raise
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"tdnns: error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(table.to_csv())
    return 0


if __name__ == "__main__":
    sys.exit(main())
