"""Command-line entry points: wp-eval, build-torus, build-shape, verify.

Exit codes: 0 success, 2 configuration error, 3 infeasible stage,
4 verification mismatch.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import ShapeSpec
from .builder import BuildConfig, Schedule, run_schedule, verify_run
from .errors import EntCurvesError, InfeasibleError, InvariantError
from .geometry import Lattice, TargetCurrent
from .quadrature import WORKERS_ENV, default_workers
from .weierstrass import WeierstrassP

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_MISMATCH = 4


class ConfigError(Exception):
    pass


def parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"not a complex number: {text!r}") from exc


def parse_lattice(text: str) -> Lattice:
    """``"w1,w2"`` with complex periods, e.g. ``"1,1j"``; ``"square"`` for Z + iZ."""
    if text.strip().lower() == "square":
        return Lattice.square()
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"lattice needs two periods 'w1,w2', got {text!r}")
    return Lattice.from_periods(parse_complex(parts[0]), parse_complex(parts[1]))


def _load_json(value: str):
    path = Path(value)
    try:
        if path.exists():
            return json.loads(path.read_text())
        return json.loads(value)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {value!r}: {exc}") from exc


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _config_from_args(args) -> BuildConfig:
    base = {}
    if args.config:
        base = _load_json(args.config)
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {"tol": args.tol, "alpha_cap": args.alpha_cap, "seed": args.seed, "workers": args.workers,
                 "eps_safety": args.eps_safety}
    base.update({k: v for k, v in overrides.items() if v is not None})
    if base.get("workers") is None:
        base["workers"] = default_workers()
    return BuildConfig.from_json(base)


def run_directory(root: Path, kind: str, schedule: Schedule, depth: int, config: BuildConfig) -> Path:
    """Content-addressed run directory: the hash covers everything that determines the result."""
    doc = {"kind": kind, "schedule": schedule.to_json(), "depth": depth, "config": config.to_json()}
    doc["config"].pop("workers", None)
    digest = hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
    return root / f"{kind}-{digest}"


# -- wp-eval -----------------------------------------------------------------


def cmd_wp_eval(args) -> int:
    lattice = parse_lattice(args.lattice)
    W = WeierstrassP(lattice)
    if args.integrate_density:
        value, err = W.integrate_density(args.density_grid)
        print(f"integral {value:.12f} error {err:.3e}")
        return EXIT_OK
    z = W.fundamental_grid(args.grid, centered=False).ravel()
    val, der = W.evaluate(z)
    dens = W.density(z)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z_re", "z_im", "wp_re", "wp_im", "density", "wpp_re", "wpp_im"])
    for k in range(z.size):
        w.writerow([repr(float(x)) for x in (z[k].real, z[k].imag, val[k].real, val[k].imag, dens[k],
                                             der[k].real, der[k].imag)])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- builds ------------------------------------------------------------------


def _torus_targets(args) -> list[TargetCurrent]:
    if args.targets:
        doc = _load_json(args.targets)
        docs = doc if isinstance(doc, list) else doc.get("targets", [doc])
        out = []
        for d in docs:
            if "H_re" in d:
                out.append(TargetCurrent.from_json(d))
            else:
                out.append(TargetCurrent(np.asarray(d["H"], dtype=complex)))
        return out
    if args.H:
        H = np.asarray(_load_json(args.H), dtype=complex)
        return [TargetCurrent(H)]
    raise ConfigError("give --targets FILE or --H MATRIX")


def _shape_targets(args) -> list[ShapeSpec]:
    if args.shape:
        doc = _load_json(args.shape)
        docs = doc if isinstance(doc, list) else doc.get("targets", [doc])
        return [ShapeSpec.from_json(d) for d in docs]
    lattice = parse_lattice(args.lattice)
    x = [parse_complex(s) for s in args.x]
    y = [parse_complex(s) for s in args.y]
    return [ShapeSpec(lattice, tuple(x), tuple(args.A), tuple(y), tuple(args.B))]


def _schedule(targets: Sequence, args) -> Schedule:
    if args.visit:
        visit = [int(v) for v in args.visit.split(",")]
        return Schedule(tuple(targets), tuple(visit))
    return Schedule.round_robin(targets, args.depth)


def _build(kind: str, args) -> int:
    if args.depth < 1:
        raise ConfigError("depth must be at least 1")
    config = _config_from_args(args)
    targets = _torus_targets(args) if kind == "torus" else _shape_targets(args)
    schedule = _schedule(targets, args)
    run_dir = Path(args.run_dir) if args.run_dir else run_directory(Path(args.out_dir), kind, schedule,
                                                                       args.depth, config)
    print(f"run directory {run_dir}")
    try:
        results = run_schedule(schedule, args.depth, config, run_dir, resume=not args.no_resume)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    for _, rep in results:
        failing = [c["name"] for c in rep["checks"] if not c["passed"]]
        print(f"stage {rep['t']}: alpha {rep['alpha']} R {rep['R']:g} eps {rep['eps']:.3e} "
              f"{'pass' if not failing else 'FAIL ' + ','.join(failing)}")
    return EXIT_OK if all(rep["passed"] for _, rep in results) else EXIT_INFEASIBLE


def cmd_build_torus(args) -> int:
    return _build("torus", args)


def cmd_build_shape(args) -> int:
    return _build("shape", args)


def cmd_verify(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"no run directory at {run_dir}")
    factor = args.tol_factor * (0.5 if args.double_resolution else 1.0)
    problems = verify_run(run_dir, factor, args.workers or default_workers())
    if problems:
        for p in problems:
            print(f"mismatch: {p}")
        return EXIT_MISMATCH
    print(f"verified {len(list(run_dir.glob('stage_*.report.json')))} stages in {run_dir}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _add_build_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=int, required=True, help="number of stages")
    p.add_argument("--visit", default=None, help="comma-separated target indices, one per stage")
    p.add_argument("--config", default=None, help="BuildConfig JSON (file or inline)")
    p.add_argument("--tol", type=float, default=None, help="relative quadrature tolerance in (0, 0.1]")
    p.add_argument("--alpha-cap", type=int, default=None)
    p.add_argument("--eps-safety", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=_positive_int, default=None,
                   help=f"quadrature threads (default ${WORKERS_ENV} or 1)")
    p.add_argument("--out-dir", default="runs", help="parent of content-addressed run directories")
    p.add_argument("--run-dir", default=None, help="explicit run directory")
    p.add_argument("--no-resume", action="store_true", help="rebuild stages already on disk")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entcurves", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("wp-eval", help="evaluate wp, wp' and the round density on a grid")
    p.add_argument("--lattice", default="square", help="periods 'w1,w2' or 'square'")
    p.add_argument("--grid", type=_positive_int, default=16, help="points per side of the cell-centre grid")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.add_argument("--integrate-density", action="store_true",
                   help="print the integral of the pulled-back round form over a fundamental domain")
    p.add_argument("--density-grid", type=_positive_int, default=256)
    p.set_defaults(func=cmd_wp_eval)

    p = sub.add_parser("build-torus", help="build stages towards target currents on a torus")
    p.add_argument("--targets", default=None, help="JSON list of target matrices (file or inline)")
    p.add_argument("--H", default=None, help="single target matrix as JSON, e.g. '[[1,0],[0,0]]'")
    _add_build_options(p)
    p.set_defaults(func=cmd_build_torus)

    p = sub.add_parser("build-shape", help="build stages towards a fiber shape in CP^1 x E")
    p.add_argument("--shape", default=None, help="JSON shape document or list (file or inline)")
    p.add_argument("--lattice", default="square")
    p.add_argument("--x", nargs="*", default=[], help="points of CP^1 (affine coordinates)")
    p.add_argument("--A", nargs="*", type=float, default=[], help="weights of the x points")
    p.add_argument("--y", nargs="*", default=[], help="points of E")
    p.add_argument("--B", nargs="*", type=float, default=[], help="weights of the y points")
    _add_build_options(p)
    p.set_defaults(func=cmd_build_shape)

    p = sub.add_parser("verify", help="re-measure a run directory against its reports")
    p.add_argument("run_dir")
    p.add_argument("--tol-factor", type=float, default=1.0, help="scale the stored tolerances")
    p.add_argument("--double-resolution", action="store_true", help="halve the stored tolerances")
    p.add_argument("--workers", type=_positive_int, default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvariantError, ValueError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except EntCurvesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
