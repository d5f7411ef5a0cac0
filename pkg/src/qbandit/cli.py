"""Command line: ``qbandit run | verify | bounds``.

Exit codes: 0 success, 1 configuration error (or failed verification),
2 invalid problem instance.  The worker count comes from ``--workers`` or
the ``QBANDIT_WORKERS`` environment variable (default 1); outputs do not
depend on it.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bounds import (BOUND_COLUMNS, WindowEmpty, bound_curves, d_mu, early_stage_window_right,
                     write_bounds_csv)
from .checks import GROUPS, SUITES, run_suite
from .core import InstanceError, load_instance
from .experiment import ConfigError, InstanceInvalid, load_spec, run_experiment
from .sim import checkpoint_grid

EXIT_OK, EXIT_CONFIG, EXIT_INSTANCE = 0, 1, 2


def _err(msg: str) -> None:
    print(f"qbandit: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        spec = load_spec(args.spec)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except InstanceInvalid as exc:
        _err(f"invalid instance: {exc}")
        return EXIT_INSTANCE
    if args.output:
        spec = type(spec)(**{**spec.__dict__, "output": Path(args.output)})
    results = run_experiment(spec, args.workers, log=lambda m: print(m, file=sys.stderr))
    for r in results:
        print(r.files["csv"])
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        results = run_suite(args.suite, args.workers)
    except KeyError as exc:
        _err(exc.args[0])
        return EXIT_CONFIG
    for r in results:
        print(r.line(), flush=True)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} passed")
    return EXIT_OK if passed == len(results) else EXIT_CONFIG


def cmd_bounds(args) -> int:
    try:
        inst = load_instance(args.instance)
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"config error: {args.instance}: {exc}")
        return EXIT_CONFIG
    except InstanceError as exc:
        _err(f"invalid instance: {args.instance}: {exc}")
        return EXIT_INSTANCE
    if not 0.0 < args.alpha < 1.0:
        _err("config error: --alpha must lie in (0, 1)")
        return EXIT_CONFIG
    if args.gamma is not None and not args.gamma > 1.0 / (1.0 - args.alpha):
        _err(f"config error: --gamma must exceed 1/(1-alpha) = {1.0 / (1.0 - args.alpha):g}")
        return EXIT_CONFIG
    times = checkpoint_grid(args.horizon, args.per_decade)
    curves = bound_curves(inst, times, args.alpha, args.gamma, args.queue)

    summary = [f"D(mu) = {d_mu(inst):.6f}" if math.isfinite(inst.derived.delta) else "D(mu) undefined (K = 1)"]
    form = "single" if inst.U == 1 else "per_queue"
    try:
        summary.append(f"early-stage window right end = {early_stage_window_right(inst, form, args.queue):.6g}")
    except (WindowEmpty, ZeroDivisionError):
        pass
    summary.append("all bounds are evaluated with their unspecified constants set to 1")

    if args.output:
        write_bounds_csv(curves, args.output)
        print("\n".join(summary))
    else:
        buf = io.StringIO()
        buf.write(",".join(BOUND_COLUMNS) + "\n")
        for c in curves:
            for t, v, ok in zip(c.t, c.values, c.valid):
                buf.write(f"{int(t)},{c.name},{v:.10g},{int(bool(ok))}\n")
        sys.stdout.write(buf.getvalue())
        for line in summary:
            print(f"# {line}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbandit", description="Queueing-bandit regret simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec (JSON)")
    r.add_argument("spec", help="experiment spec file")
    r.add_argument("--workers", type=int, default=None, help="worker threads (default: $QBANDIT_WORKERS or 1)")
    r.add_argument("--output", default=None, help="override the spec's output directory")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run acceptance suites")
    v.add_argument("suite", choices=sorted(SUITES) + sorted(GROUPS))
    v.add_argument("--workers", type=int, default=None)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bounds", help="evaluate bound overlays for an instance")
    b.add_argument("instance", help='instance JSON {"U", "K", "lambda", "mu"}')
    b.add_argument("--alpha", type=float, default=0.5)
    b.add_argument("--gamma", type=float, default=None, help="default 1/(1-alpha) + 0.5")
    b.add_argument("--horizon", type=int, default=1_000_000)
    b.add_argument("--per-decade", type=int, default=10)
    b.add_argument("--queue", type=int, default=0)
    b.add_argument("--output", default=None, help="write CSV here instead of stdout")
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(over="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
