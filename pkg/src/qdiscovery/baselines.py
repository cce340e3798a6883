"""Classical comparison searches over the budgeted oracle.

Every searcher takes a :class:`BudgetLedger`, the oracle callable, the
dimension and a generator, optionally an initial design that is evaluated
first, and returns the archive of freshly evaluated samples in order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import EvaluatedSample
from .oracle import BudgetExhausted, BudgetLedger, Recorder

SA_T0_SAMPLES = 50


@dataclass(frozen=True)
class SaConfig:
    t0: float | None = None  # None: std of the warm-up scores
    cooling: float = 0.98
    steps_per_temp: int = 5
    reheat_after: int | None = None  # idle proposals before reheating; None: 50 * d

    def __post_init__(self):
        if self.t0 is not None and self.t0 <= 0:
            raise ValueError("initial temperature must be positive")
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling factor must lie in (0, 1)")
        if self.steps_per_temp < 1:
            raise ValueError("steps per temperature must be >= 1")


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    p_mutation: float = 0.1
    p_crossover: float = 0.6
    tournament: int = 3
    elitism: int = 2
    stale_generations: int = 50

    def __post_init__(self):
        for name in ("p_mutation", "p_crossover"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.population < 2 or self.tournament < 1:
            raise ValueError("population must be >= 2 and tournament >= 1")
        if not 0 <= self.elitism <= self.population:
            raise ValueError("elitism must lie in [0, population]")

    @classmethod
    def explore(cls, **kw) -> "GaConfig":
        return cls(**{"p_mutation": 0.1, "p_crossover": 0.6, **kw})

    @classmethod
    def exploit(cls, **kw) -> "GaConfig":
        return cls(**{"p_mutation": 0.02, "p_crossover": 0.9, **kw})


def metropolis_accept(delta: float, temperature: float, rng: np.random.Generator) -> bool:
    """Accept an improvement always, a deterioration with probability ``exp(delta / T)``."""
    u = rng.random()
    if delta >= 0:
        return True
    if temperature <= 0:
        return False
    return u < math.exp(delta / temperature)


def _evaluate_design(rec: Recorder, initial) -> list[tuple[np.ndarray, float]]:
    out = []
    if initial is None:
        return out
    for x in np.asarray(initial, dtype=np.uint8):
        out.append((x.copy(), rec(x)))
    return out


def _random_unseen(rec: Recorder, rng: np.random.Generator, tries: int = 1000) -> np.ndarray:
    x = rng.integers(0, 2, size=rec.d, dtype=np.uint8)
    for _ in range(tries):
        if not rec.seen(x):
            break
        x = rng.integers(0, 2, size=rec.d, dtype=np.uint8)
    return x


def run_random(ledger: BudgetLedger, oracle: Callable, d: int, rng: np.random.Generator,
               initial=None) -> list[EvaluatedSample]:
    """Uniform configurations until the budget is spent; repeats are cache hits."""
    rec = Recorder(ledger, oracle, d, "random")
    try:
        _evaluate_design(rec, initial)
        while not rec.exhausted:
            rec(rng.integers(0, 2, size=d, dtype=np.uint8))
    except BudgetExhausted:
        pass
    return rec.samples


def run_sa(ledger: BudgetLedger, oracle: Callable, d: int, rng: np.random.Generator,
           cfg: SaConfig = SaConfig(), initial=None) -> list[EvaluatedSample]:
    """Single-flip simulated annealing on a geometric schedule.

    The warm-up set is the initial design, or 50 uniform draws without one.
    ``T0`` defaults to the sample std of its first 50 scores and the walk
    starts from its best member.  After
    ``reheat_after`` consecutive proposals that were all cache hits, the
    temperature returns to ``T0`` so the walk can leave an exhausted region;
    if a whole cycle since the previous reheat produced nothing fresh, the
    walk also restarts from a random unseen configuration.
    """
    rec = Recorder(ledger, oracle, d, "sa")
    reheat_after = cfg.reheat_after if cfg.reheat_after is not None else 50 * d
    try:
        warm = _evaluate_design(rec, initial)
        target = SA_T0_SAMPLES if initial is None else 2
        while len(warm) < target:
            x = rng.integers(0, 2, size=d, dtype=np.uint8)
            warm.append((x, rec(x)))
        scores = np.array([s for _, s in warm])
        t0 = cfg.t0 if cfg.t0 is not None else float(np.std(scores[:SA_T0_SAMPLES], ddof=1))
        if not t0 > 0:
            t0 = 1.0
        cur, cur_score = warm[int(np.argmax(scores))]
        cur = cur.copy()
        temp = t0
        idle = 0
        spent_at_reheat = ledger.spent
        while not rec.exhausted:
            for _ in range(cfg.steps_per_temp):
                cand = cur.copy()
                cand[rng.integers(d)] ^= 1
                before = ledger.spent
                score = rec(cand)
                idle = 0 if ledger.spent > before else idle + 1
                if metropolis_accept(score - cur_score, temp, rng):
                    cur, cur_score = cand, score
            temp *= cfg.cooling
            if idle >= reheat_after:
                if ledger.spent == spent_at_reheat:
                    # a whole cycle without fresh points: reheating alone cannot escape
                    cur = _random_unseen(rec, rng)
                    cur_score = rec(cur)
                temp, idle = t0, 0
                spent_at_reheat = ledger.spent
    except BudgetExhausted:
        pass
    return rec.samples


def _tournament(fitness: np.ndarray, size: int, rng: np.random.Generator) -> int:
    picks = rng.choice(fitness.size, size=min(size, fitness.size), replace=False)
    return int(picks[np.argmax(fitness[picks])])


def run_ga(ledger: BudgetLedger, oracle: Callable, d: int, rng: np.random.Generator,
           cfg: GaConfig = GaConfig(), initial=None, method_id: str = "ga") -> list[EvaluatedSample]:
    """Generational GA: tournament selection, uniform crossover, per-bit mutation, elitism.

    The first population is the first ``population`` members of the initial
    design (topped up with uniform draws).  If ``stale_generations``
    generations pass without a fresh evaluation, the non-elite members are
    replaced by random immigrants.
    """
    rec = Recorder(ledger, oracle, d, method_id)
    try:
        design = _evaluate_design(rec, initial)
        pop = [x for x, _ in design[: cfg.population]]
        while len(pop) < cfg.population:
            pop.append(rng.integers(0, 2, size=d, dtype=np.uint8))
        pop = np.array(pop, dtype=np.uint8)
        fit = np.array([rec(x) for x in pop])
        stale = 0
        generation = 0
        while not rec.exhausted:
            generation += 1
            rec.iteration = generation
            before = ledger.spent
            order = np.argsort(-fit, kind="stable")
            children = [pop[i].copy() for i in order[: cfg.elitism]]
            child_fit = [fit[i] for i in order[: cfg.elitism]]
            while len(children) < cfg.population:
                a = pop[_tournament(fit, cfg.tournament, rng)]
                b = pop[_tournament(fit, cfg.tournament, rng)]
                if rng.random() < cfg.p_crossover:
                    mask = rng.random(d) < 0.5
                    child = np.where(mask, a, b).astype(np.uint8)
                else:
                    child = a.copy()
                child ^= (rng.random(d) < cfg.p_mutation).astype(np.uint8)
                children.append(child)
                child_fit.append(rec(child))
            pop, fit = np.array(children), np.array(child_fit)
            stale = 0 if ledger.spent > before else stale + 1
            if stale >= cfg.stale_generations:
                if cfg.elitism >= cfg.population:
                    break
                for i in np.argsort(-fit, kind="stable")[cfg.elitism:]:
                    pop[i] = _random_unseen(rec, rng)
                    fit[i] = rec(pop[i])
                stale = 0
    except BudgetExhausted:
        pass
    return rec.samples


def run_hill(ledger: BudgetLedger, oracle: Callable, d: int, rng: np.random.Generator,
             initial=None) -> list[EvaluatedSample]:
    """Steepest-ascent hill climbing over one-flip neighbours with random restarts."""
    rec = Recorder(ledger, oracle, d, "hill")
    try:
        design = _evaluate_design(rec, initial)
        if design:
            cur, cur_score = max(design, key=lambda t: t[1])
        else:
            cur = rng.integers(0, 2, size=d, dtype=np.uint8)
            cur_score = rec(cur)
        restart = 0
        while not rec.exhausted:
            best, best_score = None, cur_score
            for i in range(d):
                nb = cur.copy()
                nb[i] ^= 1
                s = rec(nb)
                if s > best_score:
                    best, best_score = nb, s
            if best is None:
                restart += 1
                rec.iteration = restart
                cur = _random_unseen(rec, rng)
                cur_score = rec(cur)
            else:
                cur, cur_score = best, best_score
    except BudgetExhausted:
        pass
    return rec.samples


def _ga_explore(ledger, oracle, d, rng, initial=None, **kw):
    return run_ga(ledger, oracle, d, rng, GaConfig.explore(**kw), initial, "ga_explore")


def _ga_exploit(ledger, oracle, d, rng, initial=None, **kw):
    return run_ga(ledger, oracle, d, rng, GaConfig.exploit(**kw), initial, "ga_exploit")


def _sa(ledger, oracle, d, rng, initial=None, **kw):
    return run_sa(ledger, oracle, d, rng, SaConfig(**kw), initial)


def _no_options(fn):
    def run(ledger, oracle, d, rng, initial=None, **kw):
        if kw:
            raise TypeError(f"unexpected options {sorted(kw)}")
        return fn(ledger, oracle, d, rng, initial)
    return run


BASELINES: dict[str, Callable] = {
    "random": _no_options(run_random),
    "sa": _sa,
    "ga_explore": _ga_explore,
    "ga_exploit": _ga_exploit,
    "hill": _no_options(run_hill),
}
