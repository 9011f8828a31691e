"""Command-line entry point: ``hopmat <subcommand> [options]``.

Exit codes: 0 when every run succeeds, 2 when some runs fail, 1 on
configuration errors.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import random
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, load_config
from .materials import MaterialError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2

log = logging.getLogger("hopmat")


class RandomnessUsed(RuntimeError):
    pass


@contextlib.contextmanager
def no_rng():
    """Fail if anything draws from or seeds the global random generators."""
    py_state = random.getstate()
    np_state = np.random.get_state()
    original = np.random.default_rng

    def forbidden(*args, **kwargs):
        raise RandomnessUsed("a random generator was requested under --seedless")

    np.random.default_rng = forbidden
    try:
        yield
    finally:
        np.random.default_rng = original
    same_np = all(
        np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
        for a, b in zip(np_state, np.random.get_state())
    )
    if random.getstate() != py_state or not same_np:
        raise RandomnessUsed("global random state changed under --seedless")


def _dt_arg(text: str) -> float | str:
    if text.strip().lower() == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or seconds, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("dt must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML file overlaid on the built-in defaults")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--workers", type=int, help="parallel worker processes")
    common.add_argument("--dt", type=_dt_arg, help="integration step in seconds, or 'auto'")
    common.add_argument("--duration", type=float, help="simulated seconds per run")
    common.add_argument("--seedless", action="store_true", help="assert that no random numbers are drawn")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hopmat", description="Material-property hopping experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="one material on one behavior")
    p.add_argument("--material", required=True)
    p.add_argument("--behavior", default="static")

    p = sub.add_parser("mono", parents=[common], help="mono-material designs compared against the baseline")
    p.add_argument("--materials", nargs="+")
    p.add_argument("--behaviors", nargs="+")

    for name, text in (("sweep-density", "density sweep at fixed modulus"), ("sweep-modulus", "modulus sweep at fixed density")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--behaviors", nargs="+")

    p = sub.add_parser("gradient", parents=[common], help="functionally graded legs")
    p.add_argument("--gradients", nargs="+", help="gradient names from the config (default: all)")
    p.add_argument("--behaviors", nargs="+")

    p = sub.add_parser("heatmap", parents=[common], help="max stable dt over the density/modulus grid")
    p.add_argument("--quick", action="store_true", help="4x4 subset of the full grid axes")
    p.add_argument("--resolution", type=int, help="points per axis (default from config)")
    p.add_argument("--reuse", type=Path, help="another heatmap directory whose finished cells may be reused")

    sub.add_parser("report", parents=[common], help="rebuild summary and comparison tables under --out")
    return parser


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.command == "report":
        harness.write_reports(args.out)
        print(f"reports rebuilt in {args.out}")
        return EXIT_OK
    if args.command == "heatmap":
        plan = harness.make_heatmap_plan(cfg, args.out, args.quick, args.resolution, args.workers)
        grid = harness.run_heatmap(plan, cfg, args.reuse)
        try:
            c, a, b, r2 = grid.loglinear_fit()
            print(f"log dt = {c:.3f} + {a:.3f} log rho + {b:.3f} log E  (R^2 = {r2:.3f})")
        except ValueError:
            print("too few stable cells for a log-linear fit")
        print(f"grid written to {args.out / 'stability_grid.csv'}")
        return EXIT_OK
    if args.command == "simulate":
        materials, behaviors = [args.material], [args.behavior]
    elif args.command == "gradient":
        materials, behaviors = args.gradients, args.behaviors
    else:
        materials, behaviors = getattr(args, "materials", None), args.behaviors
    plan = harness.make_plan(
        args.command, cfg, args.out, materials, behaviors, args.dt, args.duration, args.workers
    )
    records = harness.execute(plan, cfg)
    failed = [r for r in records if not r.ok]
    for r in records:
        status = "ok" if r.ok else f"FAILED ({r.message})"
        print(f"{r.design:>14s} {r.behavior:<9s} dt={r.dt:.3g}s {status}")
    print(f"{len(records) - len(failed)}/{len(records)} runs completed; outputs in {args.out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    guard = no_rng() if args.seedless else contextlib.nullcontext()
    try:
        with guard:
            return _run(args)
    except (ConfigError, MaterialError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
