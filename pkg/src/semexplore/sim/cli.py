"""Command line entry point: ``run``, ``bench`` and ``verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from .. import __version__
from .config import ConfigError, config_from_dict, load_config
from .experiment import MANIFEST, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("semexplore")


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.strategy is not None:
        cfg.planner = replace(cfg.planner, strategy=args.strategy)
    if args.out is not None:
        cfg.output_dir = args.out
    cfg = config_from_dict(cfg.to_dict())
    result = run_experiment(cfg)
    last = result.rows[-1]
    print(f"{cfg.planner.strategy}: {len(result.rows)} poses, distance {last['distance']:.3f} m, "
          f"entropy {result.rows[0]['entropy']:.3f} -> {last['entropy']:.3f} nats")
    print(f"artifacts written to {cfg.output_dir}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .bench import bench_resolution_scaling, growth_ratios, write_bench_csv
    from .report import plot_bench

    try:
        resolutions = [float(r) for r in args.resolutions.split(",") if r.strip()]
    except ValueError:
        raise ConfigError("--resolutions", "expected comma-separated numbers") from None
    if len(resolutions) < 2 or any(r <= 0 for r in resolutions):
        raise ConfigError("--resolutions", "need at least two positive resolutions")
    try:
        rows = bench_resolution_scaling(args.env, resolutions, repeats=args.repeats)
    except ValueError as exc:
        raise ConfigError("--env", str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_bench_csv(rows, out / "resolution_scaling.csv")
    plot_bench([r.as_dict() for r in rows], out / "resolution_scaling.png")
    for r in rows:
        print(f"res {r.resolution:g}: N={r.N:.1f} Q={r.Q:.1f} dense={r.dense_ns / 1e3:.1f}us "
              f"rle={r.rle_ns / 1e3:.1f}us")
    dense = ", ".join(f"{g:.2f}" for g in growth_ratios(rows, "dense_ns"))
    rle = ", ".join(f"{g:.2f}" for g in growth_ratios(rows, "rle_ns"))
    print(f"growth per step: dense [{dense}] rle [{rle}]")
    return EXIT_OK


def _cmd_verify(args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
        cfg = config_from_dict(manifest["config"])
        expected = manifest["artifacts"]
        recorded_hash = manifest["config_hash"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(str(path), f"unreadable manifest: {exc}") from None
    problems = []
    if manifest.get("version") != __version__:
        problems.append(f"library version {manifest.get('version')} != {__version__}")
    if cfg.hash() != recorded_hash:
        problems.append("config hash does not match the recorded config")
    with tempfile.TemporaryDirectory() as tmp:
        result = run_experiment(cfg, tmp, figure="entropy.png" in expected)
    for name, digest in sorted(expected.items()):
        got = result.artifacts.get(name)
        if got != digest:
            problems.append(f"{name}: {'missing' if got is None else 'content differs'}")
    if problems:
        for p in problems:
            print(f"MISMATCH {p}")
        return EXIT_RUNTIME
    print(f"OK {len(expected)} artifacts reproduced from {path.name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semexplore", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one seeded exploration experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--strategy", choices=["semantic", "binary", "frontier"])
    run.add_argument("--out")
    run.set_defaults(func=_cmd_run)

    bench = sub.add_parser("bench", help="time dense vs run-length MI across resolutions")
    bench.add_argument("--env", default="box_world")
    bench.add_argument("--resolutions", required=True)
    bench.add_argument("--repeats", type=int, default=25)
    bench.add_argument("--out", default="benchmarks")
    bench.set_defaults(func=_cmd_bench)

    verify = sub.add_parser("verify", help=f"re-run a {MANIFEST} and compare artifact hashes")
    verify.add_argument("--manifest", required=True)
    verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
