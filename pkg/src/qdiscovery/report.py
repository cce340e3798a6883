"""Turn a run directory into CSV tables.

Per seed, the high-score threshold and the tail threshold are computed over
the pooled archives of every method run with that seed; summary rows then
average over seeds.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .config import ReportConfig
from .discovery import read_archive
from .metrics import (
    exclusive_pct,
    high_set,
    high_threshold,
    mode_set,
    pairwise_exclusivity,
    summarize,
    surrogate_fidelity,
    tail_report,
)
from .oracle import OracleSpec

log = logging.getLogger(__name__)

REPORT_DIR = "report"
_NAME = re.compile(r"^(?P<method>.+)__seed(?P<seed>\d+)\.jsonl$")
SUMMARY_COLUMNS = ["Max", "Mean", "T10mu", "T10sigma", "UL", "ExPct"]


class ReportError(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def load_archives(out: Path) -> tuple[dict[tuple[str, int], list], list[str]]:
    archives, errors = {}, []
    for path in sorted((out / "archives").glob("*.jsonl")):
        m = _NAME.match(path.name)
        if not m:
            errors.append(f"{path.name}: unrecognised archive name")
            continue
        try:
            samples = read_archive(path)
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(f"{path.name}: {exc}")
            continue
        if not samples:
            errors.append(f"{path.name}: empty archive")
            continue
        archives[(m["method"], int(m["seed"]))] = samples
    return archives, errors


def _report_config(out: Path) -> ReportConfig:
    manifest = out / "manifest.json"
    if manifest.exists():
        doc = json.loads(manifest.read_text(encoding="utf-8"))
        return ReportConfig(**doc.get("config", {}).get("report", {}))
    return ReportConfig()


def build_report(out: str | Path, fidelity: bool = True) -> tuple[Path, list[str]]:
    """Write every table under ``out/report``; returns the directory and per-file problems."""
    out = Path(out)
    archives, errors = load_archives(out)
    for e in errors:
        log.error("skipping %s", e)
    if not archives:
        raise ReportError(f"found 0 readable archives under {out / 'archives'}"
                          + (f" ({len(errors)} unreadable)" if errors else ""))
    rcfg = _report_config(out)
    spec = None
    if (out / "oracle.json").exists():
        spec = OracleSpec.from_json((out / "oracle.json").read_text(encoding="utf-8"))
    d = len(next(iter(archives.values()))[0].config)
    methods = sorted({m for m, _ in archives})
    seeds = sorted({s for _, s in archives})
    rdir = out / REPORT_DIR
    rdir.mkdir(exist_ok=True)

    per_seed_rows, excl_rows, tail_rows, dev_rows = [], [], [], []
    agg: dict[str, list] = defaultdict(list)
    modes: dict[str, set] = defaultdict(set)
    for seed in seeds:
        group = {m: archives[(m, seed)] for m in methods if (m, seed) in archives}
        thr = high_threshold(group.values(), rcfg.high_percentile)
        highs = {m: high_set(a, thr) for m, a in group.items()}
        ex = exclusive_pct(highs)
        for m, a in group.items():
            s = summarize(a, thr)
            row = [s.max, s.mean, s.t10_mu, s.t10_sigma, s.unique_high, ex[m]]
            per_seed_rows.append([m, seed, thr] + row)
            agg[m].append(row)
            if spec is not None:
                modes[m] |= mode_set(highs[m], spec)
        if sum(len(a) for a in group.values()) >= 100:
            rng = np.random.default_rng([rcfg.tail_seed, seed])
            tails = tail_report(group, d, rng, rcfg.centroid_samples)
            for m in sorted(group):
                tail_rows.append([m, seed, tails.counts[m], len(group[m]), tails.threshold])
                for i, v in enumerate(tails.deviations[m]):
                    dev_rows.append([m, seed, i, v, v >= tails.threshold])

    summary_rows = [[m] + np.mean(np.array(agg[m], dtype=float), axis=0).tolist() for m in methods]
    _write_csv(rdir / "summary.csv", ["method"] + SUMMARY_COLUMNS, summary_rows)
    _write_csv(rdir / "summary_by_seed.csv", ["method", "seed", "threshold"] + SUMMARY_COLUMNS, per_seed_rows)

    if spec is not None:
        for a in methods:
            for b in methods:
                if a != b:
                    excl_rows.append([a, b, *pairwise_exclusivity(modes[a], modes[b])])
        _write_csv(rdir / "exclusivity.csv", ["row_method", "col_method", "shared", "row_excl", "col_excl"],
                   excl_rows)
        matrix = [[a] + [pairwise_exclusivity(modes[a], modes[b])[1] for b in methods] for a in methods]
        _write_csv(rdir / "exclusivity_matrix.csv", ["row_excl_vs"] + methods, matrix)
    _write_csv(rdir / "tails.csv", ["method", "seed", "tail_count", "n_samples", "threshold"], tail_rows)
    _write_csv(rdir / "deviations.csv", ["method", "seed", "index", "deviation", "in_tail"], dev_rows)

    if fidelity:
        fid_rows = []
        for (m, seed), a in sorted(archives.items()):
            if len(a) < 50:
                continue
            f = surrogate_fidelity(a, rcfg.fidelity_surrogate, rcfg.fidelity_seed)
            fid_rows.append([m, seed, rcfg.fidelity_surrogate, f.r2, f.mae, f.mape, f.n_train, f.n_test,
                             f.mape_excluded, f.degenerate])
        _write_csv(rdir / "fidelity.csv", ["method", "seed", "surrogate", "r2", "mae", "mape_pct", "n_train",
                                           "n_test", "mape_excluded", "degenerate"], fid_rows)
    return rdir, errors
