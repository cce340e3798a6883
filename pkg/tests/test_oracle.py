import sys
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdiscovery.domain import DimensionError, all_configs, hamming, index_of
from qdiscovery.oracle import (
    BudgetExhausted,
    BudgetLedger,
    OracleSpec,
    PlantedGenerationError,
    SubprocessOracle,
    SyntheticOracle,
    basin_labels,
    evaluate,
    evaluate_batch,
    evaluate_budgeted,
    generate_planted,
    landscape,
    local_maxima,
)
from qdiscovery.reference import brute_force_optimum, naive_oracle

# exhaustive argmax of the d=10, one-basin, seed-42 instance (brute-force enumeration)
OPT_D10_SEED42 = (0, 1, 1, 0, 0, 1, 0, 1, 0, 0)


def small_spec():
    return OracleSpec(d=4, linear_coeffs=[0.5, -1.0, 0.0, 2.0], pair_terms=[(0, 1, 3.0)],
                      higher_terms=[((0, 1, 2), -1.5)], base=0.25)


def test_zero_config_gives_base():
    assert evaluate(small_spec(), [0, 0, 0, 0]) == 0.25


def test_single_pair_term():
    spec = OracleSpec(d=3, linear_coeffs=[1.0, 2.0, 0.0], pair_terms=[(0, 1, 4.0)], base=1.0)
    assert evaluate(spec, [1, 1, 0]) == 1.0 + 3.0 + 4.0


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        evaluate(small_spec(), [0, 1])


def test_spec_validation():
    with pytest.raises(ValueError):
        OracleSpec(d=3, linear_coeffs=[0, 0, 0], pair_terms=[(0, 0, 1.0)])
    with pytest.raises(ValueError):
        OracleSpec(d=3, linear_coeffs=[0, 0, 0], higher_terms=[((0, 1), 1.0)])
    with pytest.raises(ValueError):
        OracleSpec(d=3, linear_coeffs=[0, 0, 0], noise_sigma=-1)


def test_planted_d10_seed42_optimum(planted_10):
    values = landscape(planted_10)
    assert tuple(all_configs(10)[int(np.argmax(values))]) == OPT_D10_SEED42
    assert planted_10.optimum == OPT_D10_SEED42
    assert brute_force_optimum(planted_10)[0] == OPT_D10_SEED42


def test_planted_one_basin_unique_maximum():
    for seed in range(5):
        spec = generate_planted(10, 1, seed)
        assert local_maxima(landscape(spec), 10).size == 1


def test_planted_d12_four_basins(planted_12x4):
    spec = planted_12x4
    assert spec.verified and len(spec.planted_optima) == 4
    for a, b in combinations(spec.planted_optima, 2):
        assert hamming(a, b) >= 3
    values = landscape(spec)
    top = values.max()
    maxima = local_maxima(values, 12)
    near = {int(i) for i in maxima if top - values[i] <= 0.1 * abs(top)}
    assert near == {index_of(o) for o in spec.planted_optima}
    labels = basin_labels(values, 12)
    for o in spec.planted_optima:
        assert labels[index_of(o)] == index_of(o)


def test_planted_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_planted(10, 0, 1)
    with pytest.raises(ValueError):
        generate_planted(7, 1, 1)
    with pytest.raises(ValueError):
        generate_planted(10, 9, 1)


def test_planted_failure_is_typed():
    with pytest.raises(PlantedGenerationError) as info:
        generate_planted(9, 8, 0, max_retries=2)
    assert info.value.constraint


def test_matches_naive_evaluator(planted_10):
    X = all_configs(10)
    fast = evaluate_batch(planted_10, X)
    slow = np.array([naive_oracle(planted_10, x) for x in X])
    assert np.max(np.abs(fast - slow)) < 1e-12


def test_noise_free_idempotent(planted_12x4, rng):
    X = rng.integers(0, 2, size=(100, 12))
    for x in X:
        assert evaluate(planted_12x4, x) == evaluate(planted_12x4, x)


def test_noise_needs_rng_and_is_seeded(planted_10):
    noisy = generate_planted(10, 1, 42, noise_sigma=0.1)
    x = np.ones(10, dtype=np.uint8)
    a = evaluate(noisy, x, np.random.default_rng(0))
    b = evaluate(noisy, x, np.random.default_rng(0))
    assert a == b and a != evaluate(planted_10, x)


def test_spec_json_round_trip(planted_12x4):
    again = OracleSpec.from_json(planted_12x4.to_json())
    X = all_configs(12)
    assert np.array_equal(evaluate_batch(again, X), evaluate_batch(planted_12x4, X))
    assert again.planted_optima == planted_12x4.planted_optima
    assert again.seed == 7


def test_budget_boundary():
    ledger = BudgetLedger(1000)
    oracle = SyntheticOracle(small_spec())
    ledger.spent = 999  # fast-forward to the boundary
    score, remaining = evaluate_budgeted(ledger, oracle, [1, 0, 0, 0])
    assert remaining == 0
    with pytest.raises(BudgetExhausted):
        evaluate_budgeted(ledger, oracle, [0, 1, 0, 0])
    # cached config is still served
    assert evaluate_budgeted(ledger, oracle, [1, 0, 0, 0]) == (score, 0)


def test_cache_contract():
    ledger = BudgetLedger(5)
    oracle = SyntheticOracle(small_spec())
    a = ledger.query([1, 1, 0, 1], oracle)
    b = ledger.query(np.array([1, 1, 0, 1]), oracle)
    assert a == b and ledger.spent == 1 and len(ledger) == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 1), min_size=4, max_size=4), min_size=1, max_size=40),
       st.integers(1, 10))
def test_budget_never_exceeded(configs, budget):
    ledger = BudgetLedger(budget)
    oracle = SyntheticOracle(small_spec())
    spent = []
    for c in configs:
        try:
            ledger.query(c, oracle)
        except BudgetExhausted:
            pass
        spent.append(ledger.spent)
    assert spent == sorted(spent) and ledger.spent <= budget
    assert ledger.spent == min(budget, len({tuple(c) for c in configs}))


def test_subprocess_oracle(tmp_path):
    script = tmp_path / "sum_oracle.py"
    script.write_text(
        "import json, sys\n"
        "for line in sys.stdin:\n"
        "    bits = json.loads(line)['bits']\n"
        "    print(json.dumps({'score': float(sum(bits))}), flush=True)\n"
    )
    with SubprocessOracle([sys.executable, str(script)], d=5) as oracle:
        assert oracle([1, 0, 1, 1, 0]) == 3.0
        ledger = BudgetLedger(2)
        assert ledger.query([1, 1, 1, 1, 1], oracle) == 5.0
        with pytest.raises(DimensionError):
            oracle([1, 0])


def test_basin_labels_point_to_local_maxima(planted_12x4):
    values = landscape(planted_12x4)
    labels = basin_labels(values, 12)
    maxima = set(local_maxima(values, 12).tolist())
    assert set(np.unique(labels).tolist()) <= maxima
    # labels never lower the score
    assert np.all(values[labels] >= values)


def test_landscape_refuses_large_d():
    spec = OracleSpec(d=15, linear_coeffs=np.zeros(15))
    with pytest.raises(ValueError):
        landscape(spec)
