"""``qdiscovery`` command line: run, report, oracle-probe."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ALL_METHODS, ConfigError, load_config

OUT_ENV = "QDISCOVERY_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _output_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.out:
        return Path(cfg.out)
    root = os.environ.get(OUT_ENV, "runs")
    return Path(root) / Path(args.config).stem


def _apply_overrides(args, cfg):
    if args.seeds:
        try:
            seeds = tuple(int(s) for s in _csv_list(args.seeds))
        except ValueError as exc:
            raise ConfigError(f"--seeds: {exc}") from exc
        if not seeds or any(s < 0 for s in seeds):
            raise ConfigError("--seeds needs non-negative integers")
        cfg = replace(cfg, seeds=seeds)
    if args.methods:
        methods = tuple(_csv_list(args.methods))
        bad = [m for m in methods if m not in ALL_METHODS]
        if bad or not methods:
            raise ConfigError(f"--methods: unknown {', '.join(bad) or '(none given)'}")
        cfg = replace(cfg, methods=methods)
    return cfg


def cmd_run(args) -> int:
    from .experiment import run_experiment

    try:
        cfg = _apply_overrides(args, load_config(args.config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _output_dir(args, cfg)
    try:
        manifest = run_experiment(cfg, out, jobs=args.jobs)
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for run in manifest["runs"]:
        print(f"{run['method']:>14}  seed {run['seed']:<4} fresh={run['fresh_calls']:<5} "
              f"{run['wall_time_s']:.1f}s")
    for fail in manifest["failures"]:
        print(f"FAILED {fail['method']} seed {fail['seed']}: {fail['error']}", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_RUNTIME if manifest["failures"] else EXIT_OK


def cmd_report(args) -> int:
    from .report import ReportError, build_report

    out = Path(args.out or args.dir or os.environ.get(OUT_ENV, "runs"))
    try:
        rdir, errors = build_report(out, fidelity=not args.no_fidelity)
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for e in errors:
        print(f"skipped archive {e}", file=sys.stderr)
    print(f"wrote {rdir}")
    return EXIT_RUNTIME if errors else EXIT_OK


def cmd_oracle_probe(args) -> int:
    from .experiment import build_oracle_spec
    from .oracle import EXHAUSTIVE_MAX_DIM, PlantedGenerationError, evaluate_batch, landscape

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    d = cfg.oracle.d
    if args.exhaustive and d > EXHAUSTIVE_MAX_DIM:
        print(f"refusing exhaustive search at d={d}: it needs 2^{d} = {1 << d} evaluations "
              f"(limit d <= {EXHAUSTIVE_MAX_DIM})", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.oracle.kind != "planted":
        print("oracle-probe supports the planted generator only", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = build_oracle_spec(cfg)
    except PlantedGenerationError as exc:
        print(f"generator failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print("count min max mean std")
    if args.count > 0:
        rng = np.random.default_rng(cfg.oracle.seed)
        X = rng.integers(0, 2, size=(args.count, d), dtype=np.uint8)
        noise = np.random.default_rng([cfg.oracle.seed, 1]) if spec.noise_sigma > 0 else None
        y = evaluate_batch(spec, X, noise)
        print(f"{args.count} {y.min():.6g} {y.max():.6g} {y.mean():.6g} {y.std():.6g}")
    if args.exhaustive:
        values = landscape(spec)
        best = int(np.argmax(values))
        bits = "".join(str((best >> i) & 1) for i in range(d))
        planted = "".join(map(str, spec.optimum)) if spec.optimum is not None else "-"
        print(f"exhaustive optimum {bits} score {values[best]:.6g} planted {planted}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdiscovery", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute every (method, seed) pair of a config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help=f"output directory (default: config's [run] out, else ${OUT_ENV}/<stem>)")
    run.add_argument("--seeds", help="comma-separated seeds overriding the config")
    run.add_argument("--methods", help="comma-separated method ids overriding the config")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="write CSV tables for a run directory")
    rep.add_argument("dir", nargs="?")
    rep.add_argument("--out", help="run directory (same as the positional argument)")
    rep.add_argument("--no-fidelity", action="store_true", help="skip surrogate hold-out fidelity")
    rep.set_defaults(func=cmd_report)

    probe = sub.add_parser("oracle-probe", help="score distribution of random configs")
    probe.add_argument("--config", required=True)
    probe.add_argument("--count", type=int, default=1000)
    probe.add_argument("--exhaustive", action="store_true", help="also enumerate all 2^d configs")
    probe.set_defaults(func=cmd_oracle_probe)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
