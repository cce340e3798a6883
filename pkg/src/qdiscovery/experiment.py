"""Run (method, seed) pairs of an experiment and persist their archives."""
from __future__ import annotations

import json
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .baselines import BASELINES
from .config import ExperimentConfig
from .discovery import QUANTUM_METHODS, run_discovery, write_archive, write_jsonl
from .domain import RunSeed
from .oracle import BudgetLedger, OracleSpec, SubprocessOracle, SyntheticOracle, generate_planted

MANIFEST = "manifest.json"
ARCHIVE_DIR = "archives"
DIAGNOSTIC_DIR = "diagnostics"
ORACLE_FILE = "oracle.json"


def build_oracle_spec(cfg: ExperimentConfig) -> OracleSpec | None:
    o = cfg.oracle
    if o.kind == "planted":
        return generate_planted(o.d, o.n_basins, o.seed, noise_sigma=o.noise)
    return None


def initial_design(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    """Shared per-seed initial design, drawn from the seed's ``oracle`` substream."""
    rng = RunSeed(seed).stream("oracle")
    return rng.integers(0, 2, size=(cfg.budget.n_init, cfg.oracle.d), dtype=np.uint8)


def _make_oracle(cfg: ExperimentConfig, spec: OracleSpec | None, seed: int):
    if spec is not None:
        noise_rng = RunSeed(seed).stream("oracle", 1) if spec.noise_sigma > 0 else None
        return SyntheticOracle(spec, noise_rng)
    return SubprocessOracle(cfg.oracle.command, cfg.oracle.d, cfg.oracle.timeout)


@dataclass
class RunResult:
    method: str
    seed: int
    samples: list
    diagnostics: list
    fresh_calls: int
    wall_time: float


def run_one(cfg: ExperimentConfig, spec: OracleSpec | None, method: str, seed: int) -> RunResult:
    start = time.perf_counter()
    d = cfg.oracle.d
    oracle = _make_oracle(cfg, spec, seed)
    ledger = BudgetLedger(cfg.budget.B)
    init = initial_design(cfg, seed)
    try:
        if method in QUANTUM_METHODS:
            archive = run_discovery(cfg.discovery_config(method), oracle, d, RunSeed(seed),
                                    initial=init, method_id=method, ledger=ledger)
            samples, diagnostics = archive.samples, archive.diagnostics
        else:
            opts = cfg.overrides.get(method, {})
            samples = BASELINES[method](ledger, oracle, d, RunSeed(seed).stream("baseline"),
                                        initial=init, **opts)
            diagnostics = []
    finally:
        if isinstance(oracle, SubprocessOracle):
            oracle.close()
    if ledger.spent > cfg.budget.B or len(samples) != ledger.spent:
        raise RuntimeError(f"{method}/seed {seed}: budget accounting mismatch")
    return RunResult(method, seed, samples, diagnostics, ledger.spent, time.perf_counter() - start)


def archive_name(method: str, seed: int) -> str:
    return f"{method}__seed{seed}.jsonl"


def _task(args):
    cfg, spec_json, method, seed = args
    spec = OracleSpec.from_json(spec_json) if spec_json is not None else None
    try:
        return run_one(cfg, spec, method, seed), None
    except Exception as exc:  # reported in the manifest, other runs continue
        return None, (method, seed, f"{type(exc).__name__}: {exc}", traceback.format_exc())


def run_experiment(cfg: ExperimentConfig, out: str | Path, jobs: int = 1) -> dict:
    """Execute every (method, seed) pair; returns the manifest that was written."""
    out = Path(out)
    (out / ARCHIVE_DIR).mkdir(parents=True, exist_ok=True)
    (out / DIAGNOSTIC_DIR).mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    spec = build_oracle_spec(cfg)
    spec_json = spec.to_json() if spec is not None else None
    if spec_json is not None:
        (out / ORACLE_FILE).write_text(spec_json + "\n", encoding="utf-8")
    tasks = [(cfg, spec_json, m, s) for m in cfg.methods for s in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]

    runs, failures = [], []
    for result, failure in results:
        if failure is not None:
            method, seed, message, tb = failure
            failures.append({"method": method, "seed": seed, "error": message})
            continue
        name = archive_name(result.method, result.seed)
        write_archive(out / ARCHIVE_DIR / name, result.samples)
        write_jsonl(out / DIAGNOSTIC_DIR / name, result.diagnostics)
        runs.append({"method": result.method, "seed": result.seed, "archive": f"{ARCHIVE_DIR}/{name}",
                     "fresh_calls": result.fresh_calls, "wall_time_s": round(result.wall_time, 3)})
    manifest = {
        "config_hash": cfg.hash(),
        "config": cfg.semantic_dict(),
        "versions": {"qdiscovery": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "oracle_file": ORACLE_FILE if spec_json is not None else None,
        "runs": runs,
        "failures": failures,
        "wall_time_s": round(time.perf_counter() - start, 3),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
