"""Command line front end.

BLAS pools are pinned before numpy ever loads (the package __init__ is
lazy for this reason): replicate-level parallelism comes from --threads,
and per-call BLAS threading would make output depend on machine load.
"""

from __future__ import annotations

import os
import sys

for _var in (
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "OMP_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")

import argparse

from .config import COV_CHOICES, SIGNAL_CHOICES, ConfigError, load_config
from .experiments import (
    run_figure_interpolator,
    run_figure_mixing,
    run_optimal_w,
    run_selftest,
    run_simulate,
    run_theory,
)
from .stieltjes import NonConvergenceError

_FLAG_FIELDS = (
    "cov", "signal", "gamma", "sigma2", "bstar", "lam", "w",
    "t", "n", "reps", "seed", "out", "threads",
)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="flat JSON file of flag values")
    p.add_argument("--cov", choices=COV_CHOICES, help="covariance family")
    p.add_argument("--signal", choices=SIGNAL_CHOICES, help="signal family")
    p.add_argument("--gamma", type=float, help="feature/sample aspect ratio, > 1")
    p.add_argument("--sigma2", type=float, help="label noise variance")
    p.add_argument("--bstar", type=float, help="signal energy")
    p.add_argument("--lambda", dest="lam", metavar="F|GRID",
                   help="ridge penalty; omit for the interpolator")
    p.add_argument("--w", metavar="F|GRID", help="real-data mixing weight")
    p.add_argument("--t", type=int, help="number of refit iterations")
    p.add_argument("--n", type=int, help="sample size; p = round(gamma * n)")
    p.add_argument("--reps", type=int, help="Monte Carlo replicates")
    p.add_argument("--seed", type=int, help="root seed for all substreams")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--threads", type=int,
                   help="replicate workers (env COLLAPSE_LAB_THREADS as fallback)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collapse-lab",
        description="Risk of iterative refitting on mixed real and synthetic labels.",
        epilog="GRID syntax: lo:hi:count (linear) or log:lo:hi:count (geometric).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("theory", "limit-risk curves only"),
        ("simulate", "Monte Carlo runs next to their limit predictions"),
        ("optimal-w", "optimal mixing weight across a penalty grid"),
    ):
        _add_run_flags(sub.add_parser(name, help=text))
    fig = sub.add_parser("figure", help="write all panels of one figure")
    fig.add_argument("panel_set", choices=("interpolator", "mixing"))
    _add_run_flags(fig)
    sub.add_parser("selftest", help="fast internal consistency checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "selftest":
        failures = 0
        for name, passed, detail in run_selftest():
            print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
            failures += not passed
        return 1 if failures else 0

    mode = args.command
    if mode == "figure":
        mode = f"figure-{args.panel_set}"
    overrides = {k: getattr(args, k) for k in _FLAG_FIELDS}
    overrides["mode"] = mode

    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if mode == "theory":
            _write_single(cfg, run_theory(cfg), "theory")
        elif mode == "simulate":
            _write_single(cfg, run_simulate(cfg), "simulate")
        elif mode == "optimal-w":
            _write_single(cfg, run_optimal_w(cfg), "optimal_w")
        elif mode == "figure-interpolator":
            entries = run_figure_interpolator(cfg)
            _report_figure(cfg, entries)
        else:
            entries = run_figure_mixing(cfg)
            _report_figure(cfg, entries)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(
            f"fixed-point iteration failed to converge: {exc} "
            f"(last residual {exc.residual:.3e})",
            file=sys.stderr,
        )
        return 3
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def _write_single(cfg, curve, stem: str) -> None:
    from .experiments import write_run

    write_run(cfg, curve, stem)
    print(f"wrote {os.path.join(cfg.out, stem + '.csv')} ({len(curve.rows)} rows)")
    print(f"wrote {os.path.join(cfg.out, 'manifest.txt')}")


def _report_figure(cfg, entries: dict) -> None:
    files = sorted(
        {v for k, v in entries.items() if k.endswith(".file")}
    )
    for name in files:
        print(f"wrote {os.path.join(cfg.out, name)}")
    print(f"wrote {os.path.join(cfg.out, 'manifest.txt')}")


if __name__ == "__main__":
    sys.exit(main())
