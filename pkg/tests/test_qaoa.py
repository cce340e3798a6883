import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qdiscovery.domain import config_of, spin_of
from qdiscovery.hamiltonian import IsingModel, build_qubo, diagonal_energies, ising_energy, qubo_to_ising
from qdiscovery.qaoa import (
    MixerSpec,
    QaoaParams,
    SimulatorError,
    apply_cost,
    apply_mixer,
    dump_state,
    evolve,
    expectation,
    init_plus,
    load_state,
    optimize_params,
    sample,
)
from qdiscovery.reference import dense_cost_hamiltonian, dense_evolve, dense_mixer


def random_ising(rng, d):
    return qubo_to_ising(build_qubo(rng.normal(size=(d, 3)), rng.normal(), rng.normal(size=d)))


def random_state(rng, d):
    psi = rng.normal(size=1 << d) + 1j * rng.normal(size=1 << d)
    return psi / np.linalg.norm(psi)


def basis_state(d, index):
    psi = np.zeros(1 << d, dtype=complex)
    psi[index] = 1.0
    return psi


def test_init_plus_examples():
    assert np.allclose(init_plus(1), [2 ** -0.5] * 2, atol=0, rtol=1e-15)
    assert np.all(init_plus(2) == 0.5)
    for d in (1, 5, 12):
        assert abs(np.linalg.norm(init_plus(d)) - 1) < 1e-12


def test_init_plus_range():
    with pytest.raises(SimulatorError):
        init_plus(0)
    with pytest.raises(SimulatorError):
        init_plus(25)


def test_mixer_spec_validation():
    with pytest.raises(SimulatorError):
        MixerSpec("correlated", [])
    with pytest.raises(SimulatorError):
        MixerSpec("correlated", [(0, 1)], lam=-0.1)
    with pytest.raises(SimulatorError):
        MixerSpec("other")


def test_zero_gamma_is_identity(rng):
    m, psi = random_ising(rng, 4), random_state(rng, 4)
    assert np.array_equal(apply_cost(psi, m, 0.0), psi)


def test_single_field_phases():
    m = IsingModel(np.zeros((1, 1)), [1.0])
    out = apply_cost(init_plus(1), m, math.pi)
    # z=+1 picks up e^{-i pi}, z=-1 picks up e^{+i pi}
    assert np.allclose(out, [np.exp(-1j * math.pi) / math.sqrt(2), np.exp(1j * math.pi) / math.sqrt(2)],
                       atol=1e-15)


def test_cost_matches_dense_exponential(rng):
    m, psi = random_ising(rng, 3), random_state(rng, 3)
    m.constant = 0.0
    H = dense_cost_hamiltonian(m)
    w, U = np.linalg.eigh(H)
    ref = (U * np.exp(-1j * 0.37 * w)) @ U.conj().T @ psi
    assert np.max(np.abs(apply_cost(psi, m, 0.37) - ref)) < 1e-10


def test_zero_beta_is_identity(rng):
    psi = random_state(rng, 4)
    spec = MixerSpec("correlated", [(0, 1), (2, 3)], 0.5)
    assert np.allclose(apply_mixer(psi, spec, 0.0), psi, atol=0, rtol=0)


def test_plus_state_global_phase():
    out = apply_mixer(init_plus(1), MixerSpec(), math.pi / 2)
    assert np.allclose(out, np.exp(-1j * math.pi / 2) * init_plus(1), atol=1e-15)


@pytest.mark.parametrize("edges", [[(0, 2)], [(1, 2), (0, 1)], [(2, 0), (0, 1), (1, 2)]])
def test_correlated_mixer_matches_dense(rng, edges):
    psi = random_state(rng, 3)
    spec = MixerSpec("correlated", edges, 0.7)
    assert np.max(np.abs(apply_mixer(psi, spec, 0.41) - dense_mixer(spec, 0.41, 3) @ psi)) < 1e-10


def test_standard_mixer_matches_dense(rng):
    psi = random_state(rng, 4)
    assert np.max(np.abs(apply_mixer(psi, MixerSpec(), -0.9) - dense_mixer(MixerSpec(), -0.9, 4) @ psi)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.booleans())
def test_evolve_matches_dense(seed, d, correlated):
    rng = np.random.default_rng(seed)
    m = random_ising(rng, d)
    if correlated and d > 1:
        spec = MixerSpec("correlated", [(0, d - 1)] + [(0, 1)] * (d > 2), float(rng.uniform(0, 1)))
    else:
        spec = MixerSpec()
    params = QaoaParams(rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2))
    fast = evolve(m, spec, params)
    ref = dense_evolve(m, spec, params)
    # constant only contributes a global phase; compare up to it
    phase = np.vdot(ref, fast)
    phase /= abs(phase)
    assert np.max(np.abs(fast - phase * ref)) < 1e-8
    assert abs(np.linalg.norm(fast) - 1) < 1e-10


def test_single_qubit_closed_form():
    m = IsingModel(np.zeros((1, 1)), [1.0])
    for g, b in [(0.3, 0.7), (1.1, -0.4), (-2.0, 2.5)]:
        psi = evolve(m, MixerSpec(), QaoaParams([g], [b]))
        # explicit 2x2 products: <Z> = sin(2 beta) sin(2 gamma)
        C = np.diag([np.exp(-1j * g), np.exp(1j * g)])
        M = np.array([[np.cos(b), -1j * np.sin(b)], [-1j * np.sin(b), np.cos(b)]])
        ref = M @ C @ np.array([1, 1]) / math.sqrt(2)
        z_ref = abs(ref[0]) ** 2 - abs(ref[1]) ** 2
        assert expectation(psi, m) == pytest.approx(z_ref, abs=1e-12)
        assert z_ref == pytest.approx(math.sin(2 * b) * math.sin(2 * g), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_zero_lambda_equals_standard(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, 5)
    b = float(rng.uniform(-3, 3))
    corr = apply_mixer(psi, MixerSpec("correlated", [(0, 4), (1, 2)], 0.0), b)
    assert np.allclose(corr, apply_mixer(psi, MixerSpec(), b), atol=1e-14, rtol=0)


def test_norm_at_d16(rng):
    m = random_ising(rng, 16)
    spec = MixerSpec("correlated", [(i, (i + 3) % 16) for i in range(16)], 0.5)
    psi = evolve(m, spec, QaoaParams([0.2, 0.5], [-0.6, -0.3]))
    assert abs(np.linalg.norm(psi) - 1) < 1e-9


def test_zero_params_give_uniform_state(rng):
    m = random_ising(rng, 6)
    spec = MixerSpec("correlated", [(0, 1)], 0.5)
    assert np.array_equal(evolve(m, spec, QaoaParams.zeros(2)), init_plus(6))


def test_uniform_expectation_is_constant(rng):
    m = random_ising(rng, 6)
    assert expectation(init_plus(6), m) == pytest.approx(m.constant, abs=1e-12)


def test_basis_expectation(rng):
    m = random_ising(rng, 5)
    for idx in (0, 7, 31):
        z = spin_of(config_of(idx, 5))
        assert expectation(basis_state(5, idx), m) == pytest.approx(ising_energy(m, z), abs=1e-12)


def test_random_state_expectation_matches_dense(rng):
    m = random_ising(rng, 4)
    psi = random_state(rng, 4)
    H = dense_cost_hamiltonian(m)
    ref = np.real(np.vdot(psi, H @ psi)) + m.constant
    assert expectation(psi, m) == pytest.approx(ref, abs=1e-10)


def test_zero_budget_returns_init(rng):
    m = random_ising(rng, 4)
    init = QaoaParams([0.1, 0.2], [-0.3, -0.4])
    res = optimize_params(m, MixerSpec(), 2, budget_evals=0, init=init)
    assert res.params is init and res.trace == []


@pytest.mark.parametrize("method", ["nelder-mead", "cobyla"])
def test_optimizer_is_deterministic_and_budgeted(rng, method):
    m = random_ising(rng, 5)
    a = optimize_params(m, MixerSpec(), 2, budget_evals=60, method=method)
    b = optimize_params(m, MixerSpec(), 2, budget_evals=60, method=method)
    assert len(a.trace) <= 60
    assert a.trace_csv() == b.trace_csv()
    assert a.expectation <= a.initial_expectation
    assert a.expectation == min(t[3] for t in a.trace)


def test_unknown_optimizer(rng):
    with pytest.raises(SimulatorError):
        optimize_params(random_ising(rng, 3), MixerSpec(), 1, budget_evals=5, method="bfgs")


def test_planted_d4_improves_on_uniform():
    # energy -(3 x0 x2 + 2 x1 - x3): unique low-energy state x = 1110
    q = build_qubo(np.zeros((4, 1)), 0.0, [0.0, 2.0, 0.0, -1.0])
    q.Q[0, 2] = q.Q[2, 0] = 3.0
    m = qubo_to_ising(q)
    res = optimize_params(m, MixerSpec(), 2, budget_evals=200)
    assert res.expectation < expectation(init_plus(4), m) - 1e-6


def test_basis_state_sampling():
    shots = sample(basis_state(3, 5), 100, np.random.default_rng(0))
    assert shots.shape == (100,) and np.all(shots == 5)


def test_uniform_frequencies_within_four_sigma():
    counts = np.bincount(sample(init_plus(2), 100_000, np.random.default_rng(3)), minlength=4)
    sigma = math.sqrt(100_000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 25_000) < 4 * sigma)


def test_zero_param_pipeline_is_uniform(rng):
    m = random_ising(rng, 4)
    psi = evolve(m, MixerSpec("correlated", [(0, 1)]), QaoaParams.zeros(2))
    counts = np.bincount(sample(psi, 16_000, np.random.default_rng(5)), minlength=16)
    assert stats.chisquare(counts).pvalue > 0.01


def test_sample_requires_shots():
    with pytest.raises(SimulatorError):
        sample(init_plus(2), 0, np.random.default_rng(0))


def test_optimised_sampling_has_lower_energy():
    rng = np.random.default_rng(11)
    m = random_ising(rng, 10)
    res = optimize_params(m, MixerSpec(), 2, budget_evals=300)
    psi = evolve(m, MixerSpec(), res.params)
    E = diagonal_energies(m)[sample(psi, 10_000, rng)]
    uniform_mean = m.constant
    # one-sided 99% bound on the sampled mean
    assert E.mean() + 2.33 * E.std(ddof=1) / math.sqrt(E.size) < uniform_mean


def test_state_dump_round_trip(rng):
    psi = random_state(rng, 5)
    blob = dump_state(psi)
    assert blob[:4] == b"QSTV" and len(blob) == 12 + 16 * 32
    assert np.array_equal(load_state(blob), psi)
    with pytest.raises(SimulatorError):
        load_state(blob[:-8])
    with pytest.raises(SimulatorError):
        load_state(b"XXXX" + blob[4:])


def test_trace_csv_columns(rng):
    res = optimize_params(random_ising(rng, 3), MixerSpec(), 2, budget_evals=10)
    lines = res.trace_csv().splitlines()
    assert lines[0] == "eval_index,gamma0,gamma1,beta0,beta1,expectation"
    assert len(lines) == 11
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(range(10))
