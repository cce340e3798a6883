"""Surrogate-guided discovery loop: train, project to Ising, optimise QAOA, sample, evaluate."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .domain import EvaluatedSample, RunSeed, configs_of
from .hamiltonian import build_qubo, qubo_to_ising, top_edges
from .oracle import BudgetExhausted, BudgetLedger, Recorder
from .qaoa import MixerSpec, evolve, optimize_params, sample
from .surrogates import TrainConfig, extract_embeddings, make_surrogate, train

log = logging.getLogger(__name__)

QUANTUM_METHODS = {
    "fm_qaoa": ("fm", "standard"),
    "fm_qaoa_corr": ("fm", "correlated"),
    "qet_qaoa": ("qet", "standard"),
    "qet_qaoa_corr": ("qet", "correlated"),
}


@dataclass(frozen=True)
class DiscoveryConfig:
    budget: int = 1000
    n_init: int = 100
    batch: int = 50
    shots: int = 2000
    surrogate: str = "qet"
    mixer: str = "correlated"
    p: int = 2
    optimizer_evals: int = 500
    optimizer: str = "nelder-mead"
    retrain_from_scratch: bool = True
    k: int = 16
    train_steps: int = 500
    lr: float = 1e-3
    weight_decay: float = 1e-4
    lam: float = 0.5
    n_edges: int | None = None  # None: d edges (capped at the number of pairs)
    include_linear: bool = True
    rank_by: str = "prediction"

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.n_init < 1 or self.n_init > self.budget:
            raise ValueError("need 1 <= n_init <= budget")
        if self.surrogate not in ("fm", "qet"):
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        if self.mixer not in ("standard", "correlated"):
            raise ValueError(f"unknown mixer {self.mixer!r}")
        if self.rank_by not in ("prediction", "frequency"):
            raise ValueError(f"unknown ranking {self.rank_by!r}")
        if not 1 <= self.p <= 4:
            raise ValueError("depth p must lie in 1..4")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")

    @classmethod
    def for_method(cls, method_id: str, **overrides) -> "DiscoveryConfig":
        surrogate, mixer = QUANTUM_METHODS[method_id]
        return cls(surrogate=surrogate, mixer=mixer, **overrides)


@dataclass
class DiscoveryArchive:
    samples: list[EvaluatedSample]
    diagnostics: list[dict] = field(default_factory=list)

    def configs(self) -> np.ndarray:
        return np.array([s.config for s in self.samples], dtype=np.uint8)

    def scores(self) -> np.ndarray:
        return np.array([s.score for s in self.samples])


def select_candidates(indices, model, seen, batch: int, d: int,
                      rng: np.random.Generator, rank_by: str = "prediction") -> tuple[np.ndarray, int]:
    """Pick up to ``batch`` unseen configurations from measured basis indices.

    ``seen`` is any container of bit tuples supporting ``in`` and ``len``
    (a :class:`BudgetLedger` qualifies).  Distinct unseen samples are ranked by predicted score (descending), then
    by how often they were measured, then lexicographically by bits.  With
    ``rank_by="frequency"`` the first two keys swap.  Shortfalls are filled
    with uniform-random unseen configurations.  Returns the chosen
    configurations and how many of them came from the samples.
    """
    uniq, counts = np.unique(np.asarray(indices, dtype=np.int64), return_counts=True)
    configs = configs_of(uniq, d)
    keep = np.array([tuple(int(b) for b in c) not in seen for c in configs], dtype=bool)
    configs, counts = configs[keep], counts[keep]
    chosen: list[np.ndarray] = []
    if len(configs):
        pred = np.asarray(model.predict(configs), dtype=float)
        primary, secondary = (-pred, -counts) if rank_by == "prediction" else (-counts, -pred)
        keys = [configs[:, j] for j in range(d - 1, -1, -1)] + [secondary, primary]
        order = np.lexsort(keys)
        chosen = [configs[i] for i in order[:batch]]
    from_samples = len(chosen)
    taken = {tuple(int(b) for b in c) for c in chosen}
    attempts = 0
    while len(chosen) < batch and len(taken) + len(seen) < 1 << d and attempts < 100 * batch:
        attempts += 1
        x = rng.integers(0, 2, size=d, dtype=np.uint8)
        key = tuple(int(b) for b in x)
        if key in taken or key in seen:
            continue
        taken.add(key)
        chosen.append(x)
    out = np.array(chosen, dtype=np.uint8).reshape(-1, d)
    return out, from_samples


def _as_seed(seed) -> RunSeed:
    return seed if isinstance(seed, RunSeed) else RunSeed(int(seed))


def run_discovery(cfg: DiscoveryConfig, oracle: Callable, d: int, seed, initial=None,
                  method_id: str | None = None, ledger: BudgetLedger | None = None) -> DiscoveryArchive:
    """Run the loop until the budget is spent.

    ``initial`` is the shared initial design (``n_init`` configurations);
    without it one is drawn from the seed's ``oracle`` substream.  Randomness
    is drawn from named substreams of ``seed``: ``surrogate-init`` (one per
    iteration) for model initialisation and ``sampler`` for shots and top-ups.
    """
    seed = _as_seed(seed)
    if method_id is None:
        method_id = next((k for k, v in QUANTUM_METHODS.items() if v == (cfg.surrogate, cfg.mixer)))
    ledger = ledger if ledger is not None else BudgetLedger(cfg.budget)
    rec = Recorder(ledger, oracle, d, method_id)
    sampler = seed.stream("sampler")
    if initial is None:
        initial = seed.stream("oracle").integers(0, 2, size=(cfg.n_init, d), dtype=np.uint8)
    train_cfg = TrainConfig(steps=cfg.train_steps, lr=cfg.lr, weight_decay=cfg.weight_decay)
    n_edges = min(cfg.n_edges if cfg.n_edges is not None else d, d * (d - 1) // 2)
    diagnostics: list[dict] = []
    model = None
    try:
        for x in np.asarray(initial, dtype=np.uint8)[: cfg.n_init]:
            rec(x)
        iteration = 0
        while ledger.remaining > 0 and not rec.exhausted:
            iteration += 1
            rec.iteration = iteration
            X = np.array([s.config for s in rec.samples], dtype=float)
            y = np.array([s.score for s in rec.samples])
            init_rng = seed.stream("surrogate-init", iteration)
            if model is None or cfg.retrain_from_scratch:
                model = make_surrogate(cfg.surrogate, d, cfg.k, init_rng)
            model, trace = train(model, X, y, train_cfg, init_rng)
            q = build_qubo(*extract_embeddings(model), include_linear=cfg.include_linear)
            ising = qubo_to_ising(q)
            if cfg.mixer == "correlated" and n_edges > 0:
                mixer = MixerSpec("correlated", top_edges(q, n_edges), cfg.lam)
            else:
                mixer = MixerSpec("standard")
            opt = optimize_params(ising, mixer, cfg.p, cfg.optimizer_evals, method=cfg.optimizer)
            state = evolve(ising, mixer, opt.params)
            shots = sample(state, cfg.shots, sampler)
            want = min(cfg.batch, ledger.remaining)
            cands, from_samples = select_candidates(shots, model, ledger, want, d,
                                                    sampler, cfg.rank_by)
            diag = {
                "iteration": iteration,
                "train_loss": trace[-1] if trace else None,
                "initial_expectation": opt.initial_expectation,
                "final_expectation": opt.expectation,
                "gamma": opt.params.gamma.tolist(),
                "beta": opt.params.beta.tolist(),
                "edges": [list(e) for e in mixer.edges],
                "distinct_shots": int(np.unique(shots).size),
                "fresh_from_samples": from_samples,
                "topped_up": int(len(cands) - from_samples),
                "evaluated": 0,
            }
            diagnostics.append(diag)
            if len(cands) == 0:
                break
            for x in cands:
                rec(x)
                diag["evaluated"] += 1
    except BudgetExhausted:
        log.info("budget exhausted during iteration %d", rec.iteration)
    return DiscoveryArchive(rec.samples, diagnostics)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc.msg}") from exc
    return out


def write_archive(path, samples: Iterable[EvaluatedSample]) -> None:
    write_jsonl(path, (s.to_record() for s in samples))


def read_archive(path) -> list[EvaluatedSample]:
    return [EvaluatedSample.from_record(r) for r in read_jsonl(path)]
