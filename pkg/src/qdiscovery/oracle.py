"""Black-box oracles, budget accounting and the planted pseudo-Boolean family.

An :class:`OracleSpec` is a multilinear polynomial of degree at most four over
``x in {0,1}^d`` plus optional Gaussian noise.  :func:`generate_planted` builds
multi-modal instances whose one-flip local maxima are known in advance.
"""
from __future__ import annotations

import json
import logging
import math
import subprocess
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain import DimensionError, EvaluatedSample, all_configs, as_config, bits_key, hamming

log = logging.getLogger(__name__)

SPEC_FORMAT = "qdiscovery.oracle"
SPEC_VERSION = 1
EXHAUSTIVE_MAX_DIM = 14


class BudgetExhausted(RuntimeError):
    """A fresh oracle query was requested with no budget left."""


class PlantedGenerationError(RuntimeError):
    def __init__(self, constraint: str, attempts: int):
        super().__init__(f"planted generator failed after {attempts} attempts: {constraint}")
        self.constraint = constraint
        self.attempts = attempts


@dataclass(eq=False)
class OracleSpec:
    d: int
    linear_coeffs: np.ndarray
    pair_terms: list[tuple[int, int, float]] = field(default_factory=list)
    higher_terms: list[tuple[tuple[int, ...], float]] = field(default_factory=list)
    noise_sigma: float = 0.0
    base: float = 0.0
    # Generator bookkeeping; empty for hand-written specs.
    seed: int | None = None
    planted_optima: list[tuple[int, ...]] = field(default_factory=list)
    optimum: tuple[int, ...] | None = None
    cliques: list[dict] = field(default_factory=list)
    verified: bool = False

    def __post_init__(self):
        self.linear_coeffs = np.asarray(self.linear_coeffs, dtype=float)
        if self.linear_coeffs.shape != (self.d,):
            raise DimensionError("linear_coeffs must have length d")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        for i, j, _ in self.pair_terms:
            if not (0 <= i < self.d and 0 <= j < self.d) or i == j:
                raise ValueError(f"bad pair term ({i}, {j})")
        for subset, _ in self.higher_terms:
            if not 3 <= len(subset) <= 4:
                raise ValueError(f"higher-order term must have 3-4 variables, got {subset}")
            if len(set(subset)) != len(subset) or not all(0 <= i < self.d for i in subset):
                raise ValueError(f"bad higher-order subset {subset}")

    @cached_property
    def _compiled(self) -> list[tuple[np.ndarray, np.ndarray]]:
        groups: dict[int, tuple[list, list]] = defaultdict(lambda: ([], []))
        for i, j, w in self.pair_terms:
            groups[2][0].append((i, j))
            groups[2][1].append(w)
        for subset, w in self.higher_terms:
            groups[len(subset)][0].append(tuple(subset))
            groups[len(subset)][1].append(w)
        return [
            (np.asarray(idx, dtype=np.intp), np.asarray(ws, dtype=float))
            for _, (idx, ws) in sorted(groups.items())
        ]

    def to_json(self) -> str:
        doc = {
            "format": SPEC_FORMAT,
            "version": SPEC_VERSION,
            "d": self.d,
            "base": self.base,
            "noise_sigma": self.noise_sigma,
            "linear": self.linear_coeffs.tolist(),
            "pairs": [[i, j, w] for i, j, w in self.pair_terms],
            "higher": [[list(s), w] for s, w in self.higher_terms],
            "generator": {
                "seed": self.seed,
                "planted_optima": [list(o) for o in self.planted_optima],
                "optimum": list(self.optimum) if self.optimum is not None else None,
                "cliques": self.cliques,
                "verified": self.verified,
            },
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OracleSpec":
        doc = json.loads(text)
        if doc.get("format") != SPEC_FORMAT:
            raise ValueError("not an oracle spec document")
        if doc.get("version") != SPEC_VERSION:
            raise ValueError(f"unsupported oracle spec version {doc.get('version')}")
        gen = doc.get("generator", {})
        return cls(
            d=doc["d"],
            linear_coeffs=np.asarray(doc["linear"], dtype=float),
            pair_terms=[(int(i), int(j), float(w)) for i, j, w in doc["pairs"]],
            higher_terms=[(tuple(int(i) for i in s), float(w)) for s, w in doc["higher"]],
            noise_sigma=float(doc["noise_sigma"]),
            base=float(doc["base"]),
            seed=gen.get("seed"),
            planted_optima=[tuple(o) for o in gen.get("planted_optima", [])],
            optimum=tuple(gen["optimum"]) if gen.get("optimum") is not None else None,
            cliques=gen.get("cliques", []),
            verified=bool(gen.get("verified", False)),
        )


def evaluate_batch(spec: OracleSpec, configs: np.ndarray, rng=None, chunk: int = 2048) -> np.ndarray:
    """Scores for the rows of ``configs``; noise is drawn from ``rng`` when enabled."""
    X = np.asarray(configs, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.d:
        raise DimensionError(f"expected configs of width {spec.d}, got shape {X.shape}")
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], chunk):
        Xc = X[start:start + chunk]
        val = spec.base + Xc @ spec.linear_coeffs
        for idx, ws in spec._compiled:
            val = val + Xc[:, idx].prod(axis=2) @ ws
        out[start:start + chunk] = val
    if spec.noise_sigma > 0:
        if rng is None:
            raise ValueError("a noisy oracle needs an rng")
        out = out + rng.normal(0.0, spec.noise_sigma, size=out.shape)
    return out


def evaluate(spec: OracleSpec, config: Sequence[int], rng=None) -> float:
    """Score one configuration."""
    bits = as_config(config, spec.d)
    return float(evaluate_batch(spec, bits[None, :], rng)[0])


class SyntheticOracle:
    """Callable wrapper binding a spec to its noise stream."""

    def __init__(self, spec: OracleSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        self.d = spec.d
        self.rng = rng

    def __call__(self, config) -> float:
        return evaluate(self.spec, config, self.rng)


class SubprocessOracle:
    """Oracle served by an external process over JSON lines.

    Each query writes ``{"bits": [...]}`` to the child's stdin and reads one
    ``{"score": <real>}`` line back.
    """

    def __init__(self, command: Sequence[str], d: int, timeout: float | None = 60.0):
        self.command = list(command)
        self.d = d
        self.timeout = timeout
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def __call__(self, config) -> float:
        bits = as_config(config, self.d)
        if self._proc.poll() is not None:
            raise RuntimeError(f"oracle process exited with code {self._proc.returncode}")
        self._proc.stdin.write(json.dumps({"bits": [int(b) for b in bits]}) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("oracle process closed its output")
        score = float(json.loads(line)["score"])
        if not math.isfinite(score):
            raise ValueError(f"oracle returned non-finite score {score!r}")
        return score

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BudgetLedger:
    """Counts fresh oracle calls against a budget; repeats are served from cache."""

    def __init__(self, budget: int):
        if budget < 1:
            raise ValueError("budget must be positive")
        self.budget = budget
        self.spent = 0
        self.cache: dict[tuple[int, ...], float] = {}
        self.history: list[tuple[tuple[int, ...], float]] = []

    @property
    def remaining(self) -> int:
        return self.budget - self.spent

    def __contains__(self, config) -> bool:
        return bits_key(config) in self.cache

    def __len__(self) -> int:
        return len(self.cache)

    def query(self, config, oracle: Callable) -> float:
        key = bits_key(config)
        if key in self.cache:
            return self.cache[key]
        if self.spent >= self.budget:
            raise BudgetExhausted(f"budget of {self.budget} oracle calls exhausted")
        score = float(oracle(np.asarray(key, dtype=np.uint8)))
        if not math.isfinite(score):
            raise ValueError(f"oracle returned non-finite score for {key}")
        self.spent += 1
        self.cache[key] = score
        self.history.append((key, score))
        return score


def evaluate_budgeted(ledger: BudgetLedger, oracle: Callable, config) -> tuple[float, int]:
    score = ledger.query(config, oracle)
    return score, ledger.remaining


class Recorder:
    """Ledger-backed objective that appends an archive entry for every fresh evaluation.

    Set ``iteration`` to tag subsequent samples (generation, loop step, ...).
    """

    def __init__(self, ledger: BudgetLedger, oracle: Callable, d: int, method_id: str):
        self.ledger = ledger
        self.oracle = oracle
        self.d = d
        self.method_id = method_id
        self.iteration = 0
        self.samples: list[EvaluatedSample] = []
        self.fresh_since_mark = 0

    def __call__(self, config) -> float:
        key = bits_key(config)
        if len(key) != self.d:
            raise DimensionError(f"expected {self.d} bits, got {len(key)}")
        fresh = key not in self.ledger.cache
        score = self.ledger.query(key, self.oracle)
        if fresh:
            self.samples.append(EvaluatedSample(key, score, self.method_id, self.iteration))
            self.fresh_since_mark += 1
        return score

    def seen(self, config) -> bool:
        return bits_key(config) in self.ledger.cache

    @property
    def exhausted(self) -> bool:
        """No fresh evaluation is possible: budget spent or every config seen."""
        return self.ledger.remaining <= 0 or len(self.ledger.cache) >= 1 << self.d


# ---------------------------------------------------------------------------
# planted landscapes

def _poly_mul(p: dict, q: dict, max_degree: int) -> dict:
    out: dict = defaultdict(float)
    for s1, c1 in p.items():
        for s2, c2 in q.items():
            s = s1 | s2
            if len(s) <= max_degree:
                out[s] += c1 * c2
    return out


def _literal(i: int, bit: int) -> dict:
    # x_i when bit == 1, else (1 - x_i)
    if bit:
        return {frozenset([i]): 1.0}
    return {frozenset(): 1.0, frozenset([i]): -1.0}


def _agreement(center: Sequence[int]) -> dict:
    poly: dict = defaultdict(float)
    for i, c in enumerate(center):
        for s, v in _literal(i, c).items():
            poly[s] += v
    return dict(poly)


def _indicator(subset: Sequence[int], pattern: Sequence[int]) -> dict:
    poly = {frozenset(): 1.0}
    for i, b in zip(subset, pattern):
        poly = _poly_mul(poly, _literal(i, b), len(subset))
    return poly


def _draw_centers(d: int, n: int, min_dist: int, rng, draws: int = 200) -> list[np.ndarray] | None:
    # keep the best-separated of several random draws
    best, best_sep = None, -1
    for _ in range(draws):
        centers = rng.integers(0, 2, size=(n, d))
        sep = min((hamming(a, b) for a, b in combinations(centers, 2)), default=d)
        if sep > best_sep:
            best, best_sep = centers, sep
    if best_sep < min_dist:
        return None
    return list(best)


def local_maxima(values: np.ndarray, d: int) -> np.ndarray:
    """Basin indices with no strictly better single-flip neighbour."""
    idx = np.arange(values.size)
    is_max = np.ones(values.size, dtype=bool)
    for i in range(d):
        is_max &= values >= values[idx ^ (1 << i)]
    return np.flatnonzero(is_max)


def basin_labels(values: np.ndarray, d: int) -> np.ndarray:
    """Steepest-ascent basin label (index of the local maximum reached) per index."""
    idx = np.arange(values.size)
    best = idx.copy()
    best_val = values.copy()
    for i in range(d):
        nb = idx ^ (1 << i)
        better = values[nb] > best_val
        best[better] = nb[better]
        best_val[better] = values[nb][better]
    labels = best
    while True:
        nxt = labels[labels]
        if np.array_equal(nxt, labels):
            return labels
        labels = nxt


def _check_landscape(spec: OracleSpec, centers: list[np.ndarray], min_dist: int) -> str | None:
    values = evaluate_batch(noiseless(spec), all_configs(spec.d))
    top = values.max()
    maxima = local_maxima(values, spec.d)
    near = set(maxima[top - values[maxima] <= 0.1 * abs(top)].tolist())
    planted = {int(np.dot(c, 1 << np.arange(spec.d))) for c in centers}
    if not planted <= set(maxima.tolist()):
        return "a planted optimum is not a one-flip local maximum"
    if near != planted:
        return f"{len(near)} near-optimal local maxima, expected {len(planted)}"
    for a, b in combinations(centers, 2):
        if hamming(a, b) < min_dist:
            return f"planted optima closer than {min_dist}"
    return None


def generate_planted(
    d: int,
    n_basins: int,
    seed: int,
    noise_sigma: float = 0.0,
    scale: float = 3.0,
    base: float = 1.0,
    cliques_per_basin: int = 2,
    max_retries: int = 50,
) -> OracleSpec:
    """Multi-modal degree-4 landscape with ``n_basins`` planted one-flip maxima.

    Each basin ``k`` contributes ``scale * a_k * (A_k(x)/d)**4`` where ``A_k``
    counts the bits agreeing with its centre, plus small pattern bonuses on
    random 3- and 4-variable cliques and weak random linear and pair terms.
    For ``d <= 14`` every draw is checked exhaustively and redrawn on failure.
    """
    if not 1 <= n_basins <= 8:
        raise ValueError("n_basins must be between 1 and 8")
    if d < 8:
        raise ValueError("d must be at least 8")
    if d > 27:
        raise DimensionError("d must be at most 27")
    rng = np.random.default_rng(seed)
    min_dist = math.ceil(d / 4)
    failure = "no attempt made"
    for attempt in range(1, max_retries + 1):
        centers = _draw_centers(d, n_basins, min_dist, rng)
        if centers is None:
            failure = f"could not place {n_basins} optima at pairwise distance >= {min_dist}"
            continue
        heights = rng.uniform(0.93, 1.0, size=n_basins)
        poly: dict = defaultdict(float)
        cliques = []
        for k, (c, a) in enumerate(zip(centers, heights)):
            agree = _agreement(c)
            term = {frozenset(): 1.0}
            for _ in range(4):
                term = _poly_mul(term, agree, 4)
            w = scale * a / d**4
            for s, v in term.items():
                poly[s] += w * v
            for _ in range(cliques_per_basin):
                size = int(rng.integers(3, 5))
                subset = sorted(rng.choice(d, size=size, replace=False).tolist())
                pattern = [int(c[i]) for i in subset]
                cliques.append({"vars": subset, "pattern": pattern, "basin": k})
                for s, v in _indicator(subset, pattern).items():
                    poly[s] += 0.05 * scale * v
        for i in range(d):
            poly[frozenset([i])] += rng.normal(0.0, 0.01 * scale)
        for _ in range(d):
            i, j = rng.choice(d, size=2, replace=False)
            poly[frozenset([int(i), int(j)])] += rng.normal(0.0, 0.01 * scale)

        linear = np.zeros(d)
        pairs, higher = [], []
        const = base
        for s, v in sorted(poly.items(), key=lambda kv: (len(kv[0]), sorted(kv[0]))):
            if abs(v) < 1e-15:
                continue
            members = tuple(sorted(s))
            if len(members) == 0:
                const += v
            elif len(members) == 1:
                linear[members[0]] += v
            elif len(members) == 2:
                pairs.append((members[0], members[1], float(v)))
            else:
                higher.append((members, float(v)))
        spec = OracleSpec(
            d=d,
            linear_coeffs=linear,
            pair_terms=pairs,
            higher_terms=higher,
            noise_sigma=noise_sigma,
            base=float(const),
            seed=seed,
            cliques=cliques,
        )
        if d <= EXHAUSTIVE_MAX_DIM:
            failure = _check_landscape(spec, centers, min_dist)
            if failure is not None:
                log.debug("planted attempt %d rejected: %s", attempt, failure)
                continue
            spec.verified = True
        scores = evaluate_batch(noiseless(spec), np.asarray(centers))
        order = np.argsort(-scores, kind="stable")
        spec.planted_optima = [bits_key(centers[i]) for i in order]
        spec.optimum = spec.planted_optima[0]
        # relabel cliques so basin ids follow planted_optima order
        rank = {int(old): new for new, old in enumerate(order)}
        for cl in spec.cliques:
            cl["basin"] = rank[cl["basin"]]
        return spec
    raise PlantedGenerationError(failure, max_retries)


def noiseless(spec: OracleSpec) -> OracleSpec:
    return OracleSpec(d=spec.d, linear_coeffs=spec.linear_coeffs, pair_terms=spec.pair_terms,
                      higher_terms=spec.higher_terms, base=spec.base)


def landscape(spec: OracleSpec) -> np.ndarray:
    """Noise-free scores of every configuration, indexed by basis index."""
    if spec.d > EXHAUSTIVE_MAX_DIM:
        raise ValueError(f"exhaustive enumeration refused for d={spec.d} > {EXHAUSTIVE_MAX_DIM}")
    return evaluate_batch(noiseless(spec), all_configs(spec.d))


def random_configs(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return rng.integers(0, 2, size=(n, d), dtype=np.uint8)


def iter_unique(configs: Iterable) -> list[tuple[int, ...]]:
    seen, out = set(), []
    for c in configs:
        key = bits_key(c)
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out
