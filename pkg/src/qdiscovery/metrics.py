"""Archive statistics: summaries, exclusive yield, mode exclusivity, tail deviation, fidelity."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import EvaluatedSample, bits_key
from .oracle import OracleSpec

HIGH_PERCENTILE = 75.0
TAIL_PERCENTILE = 99.0
CENTROID_SAMPLES = 1000
STD_FLOOR = 1e-6
MAPE_FLOOR = 1e-6


class EmptyArchiveError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSummary:
    max: float
    mean: float
    t10_mu: float
    t10_sigma: float
    unique_high: int
    exclusive_pct: float = float("nan")


def _scores(archive) -> np.ndarray:
    return np.array([s.score for s in archive], dtype=float)


def top_fraction(scores: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """The ``ceil(fraction * n)`` largest scores."""
    n = max(1, math.ceil(fraction * len(scores)))
    return np.sort(scores)[::-1][:n]


def high_threshold(archives: Iterable[Sequence[EvaluatedSample]], percentile: float = HIGH_PERCENTILE) -> float:
    pooled = np.concatenate([_scores(a) for a in archives])
    if pooled.size == 0:
        raise EmptyArchiveError("no scores to threshold")
    return float(np.percentile(pooled, percentile))


def high_set(archive: Sequence[EvaluatedSample], threshold: float) -> set[tuple[int, ...]]:
    return {bits_key(s.config) for s in archive if s.score >= threshold}


def summarize(archive: Sequence[EvaluatedSample], threshold: float) -> MethodSummary:
    """Max, mean, top-10% mean / population std, and the distinct configs at or above ``threshold``."""
    scores = _scores(archive)
    if scores.size == 0:
        raise EmptyArchiveError("cannot summarise an empty archive")
    top = top_fraction(scores)
    return MethodSummary(
        max=float(scores.max()),
        mean=float(scores.mean()),
        t10_mu=float(top.mean()),
        t10_sigma=float(top.std()),
        unique_high=len(high_set(archive, threshold)),
    )


def exclusive_yield(s_q: set, s_classical: set) -> float:
    """``|S_Q minus S_C| / |S_Q union S_C|``; 0 when both sets are empty."""
    union = s_q | s_classical
    if not union:
        return 0.0
    return len(s_q - s_classical) / len(union)


def exclusive_pct(high_sets: Mapping[str, set]) -> dict[str, float]:
    """Exclusive yield of each method against the union of all other methods, in percent."""
    out = {}
    for name, s in high_sets.items():
        others: set = set()
        for other, t in high_sets.items():
            if other != name:
                others |= t
        out[name] = 100.0 * exclusive_yield(s, others)
    return out


def pairwise_exclusivity(modes_a: set, modes_b: set) -> tuple[int, int, int]:
    """(shared, only in a, only in b)."""
    return len(modes_a & modes_b), len(modes_a - modes_b), len(modes_b - modes_a)


def hamming_band(config: Sequence[int]) -> str:
    d = len(config)
    w = int(np.sum(config))
    if w < d / 3:
        return "low"
    if w <= 2 * d / 3:
        return "mid"
    return "high"


def mode_descriptor(config: Sequence[int], spec: OracleSpec) -> tuple:
    """Which planted cliques carry their bonus pattern, plus the Hamming-weight band."""
    x = np.asarray(config)
    flags = tuple(
        bool(np.all(x[list(c["vars"])] == np.asarray(c["pattern"]))) for c in spec.cliques
    )
    return flags + (hamming_band(config),)


def mode_set(configs: Iterable[Sequence[int]], spec: OracleSpec) -> set[tuple]:
    return {mode_descriptor(c, spec) for c in configs}


@dataclass(frozen=True)
class TailReport:
    deviations: dict[str, np.ndarray]
    threshold: float
    counts: dict[str, int]
    centroid: np.ndarray
    scale: np.ndarray


def deviation(configs: np.ndarray, centroid: np.ndarray, scale: np.ndarray) -> np.ndarray:
    z = (np.asarray(configs, dtype=float) - centroid) / scale
    return np.sqrt(np.sum(z * z, axis=1))


def tail_report(archives: Mapping[str, Sequence[EvaluatedSample]], d: int, rng: np.random.Generator,
                centroid_sample_size: int = CENTROID_SAMPLES, percentile: float = TAIL_PERCENTILE) -> TailReport:
    """Standardised distance of every archived config from a random-sample centroid.

    The threshold is the ``percentile`` of the pooled deviations (linear
    interpolation); counts are samples at or above it, per method.
    """
    ref = rng.integers(0, 2, size=(centroid_sample_size, d)).astype(float)
    centroid = ref.mean(axis=0)
    scale = np.maximum(ref.std(axis=0), STD_FLOOR)
    devs = {}
    for name in sorted(archives):
        X = np.array([s.config for s in archives[name]], dtype=float).reshape(-1, d)
        devs[name] = deviation(X, centroid, scale)
    pooled = np.concatenate(list(devs.values())) if devs else np.empty(0)
    if pooled.size < 100:
        raise ValueError("tail analysis needs at least 100 pooled samples")
    threshold = float(np.percentile(pooled, percentile))
    counts = {name: int(np.sum(v >= threshold)) for name, v in devs.items()}
    return TailReport(devs, threshold, counts, centroid, scale)


@dataclass(frozen=True)
class Fidelity:
    r2: float
    mae: float
    mape: float
    n_train: int
    n_test: int
    mape_excluded: int
    degenerate: bool


def regression_scores(y_true, y_pred) -> tuple[float, float, float, int, bool]:
    """(R2, MAE, MAPE %, targets excluded from MAPE, constant-target flag)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    resid = y_true - y_pred
    mae = float(np.mean(np.abs(resid)))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    degenerate = ss_tot == 0.0
    if degenerate:
        warnings.warn("constant test targets: R2 reported as 0", RuntimeWarning, stacklevel=2)
        r2 = 0.0
    else:
        r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot
    ok = np.abs(y_true) >= MAPE_FLOOR
    mape = float(100.0 * np.mean(np.abs(resid[ok] / y_true[ok]))) if ok.any() else float("nan")
    return r2, mae, mape, int(np.sum(~ok)), degenerate


def surrogate_fidelity(archive: Sequence[EvaluatedSample], kind: str, split_seed: int,
                       train_fraction: float = 0.7, k: int = 16, train_cfg=None) -> Fidelity:
    """Train ``kind`` on a random 70% of the archive and score the held-out 30%."""
    from .surrogates import TrainConfig, make_surrogate, train

    if len(archive) < 50:
        raise ValueError("fidelity needs at least 50 samples")
    X = np.array([s.config for s in archive], dtype=float)
    y = _scores(archive)
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(len(y))
    n_train = int(round(train_fraction * len(y)))
    tr, te = perm[:n_train], perm[n_train:]
    model = make_surrogate(kind, X.shape[1], k, rng)
    train(model, X[tr], y[tr], train_cfg or TrainConfig(), rng)
    r2, mae, mape, excluded, degenerate = regression_scores(y[te], model.predict(X[te]))
    return Fidelity(r2, mae, mape, len(tr), len(te), excluded, degenerate)
