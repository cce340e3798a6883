import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qdiscovery.domain import (
    DimensionError,
    EvaluatedSample,
    RunSeed,
    as_config,
    config_from_spin,
    config_of,
    configs_of,
    index_of,
    indices_of,
    spin_of,
)


def test_index_examples():
    assert index_of([0, 0, 0]) == 0
    assert index_of([1, 0, 0]) == 1
    assert index_of([1, 1, 0, 1]) == 11


def test_index_round_trip_exhaustive():
    for d in range(1, 13):
        idx = np.arange(1 << d)
        assert np.array_equal(indices_of(configs_of(idx, d)), idx)
    for bits in itertools.product((0, 1), repeat=4):
        assert tuple(config_of(index_of(bits), 4)) == bits


def test_spin_examples():
    assert spin_of([0, 0]).tolist() == [1, 1]
    assert spin_of([1, 1]).tolist() == [-1, -1]
    assert spin_of([1, 0, 1]).tolist() == [-1, 1, -1]


def test_spin_self_consistent(rng):
    X = rng.integers(0, 2, size=(1000, 15))
    for x in X:
        z = spin_of(x)
        assert np.array_equal((1 - z) // 2, x)
        assert np.array_equal(config_from_spin(z), x)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=27))
def test_index_bijective(bits):
    assert config_of(index_of(bits), len(bits)).tolist() == bits


def test_as_config_validation():
    with pytest.raises(ValueError):
        as_config([0, 2])
    with pytest.raises(DimensionError):
        as_config([0, 1], d=3)
    with pytest.raises(DimensionError):
        as_config([0] * 28)
    assert not as_config([1, 0]).flags.writeable


def test_sample_record_round_trip():
    s = EvaluatedSample((1, 0, 1), 2.5, "sa", 3)
    assert EvaluatedSample.from_record(s.to_record()) == s
    with pytest.raises(ValueError):
        EvaluatedSample((1,), float("nan"), "sa")
    with pytest.raises(ValueError):
        EvaluatedSample((1,), 1.0, "sa", -1)


def test_run_seed_streams_reproducible():
    a = RunSeed(99).stream("sampler").random(5)
    b = RunSeed(99).stream("sampler").random(5)
    c = RunSeed(99).stream("baseline").random(5)
    d = RunSeed(99).stream("surrogate-init", 2).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(RunSeed(99).stream("surrogate-init", 1).random(5), d)
    with pytest.raises(KeyError):
        RunSeed(1).stream("nope")
    with pytest.raises(ValueError):
        RunSeed(2**64)
