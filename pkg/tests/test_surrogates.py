import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdiscovery.domain import DimensionError
from qdiscovery.reference import naive_encoder, naive_fm, naive_qet
from qdiscovery.surrogates import (
    FMSurrogate,
    QETSurrogate,
    SurrogateDivergence,
    TrainConfig,
    extract_embeddings,
    fm_pool,
    fm_predict,
    gradient_check,
    qet_forward,
    train,
)
from qdiscovery.surrogates.training import analytic_grads


def hand_fm():
    m = FMSurrogate(2, 1)
    m.params.update(w0=np.array(0.5), w=np.array([1.0, -1.0]), V=np.array([[2.0], [3.0]]))
    return m


def planted_fm_data(rng, d=8, k=4, n=400):
    # standard-normal planted factors
    V = rng.normal(size=(d, k))
    w = rng.normal(size=d)
    X = rng.integers(0, 2, size=(n, d)).astype(float)
    y = np.array([naive_fm(0.3, w, V, x) for x in X])
    return X, y


def r2(y, p):
    return 1 - np.sum((y - p) ** 2) / np.sum((y - y.mean()) ** 2)


def test_fm_hand_examples():
    m = hand_fm()
    assert fm_predict(m, [1, 1]) == pytest.approx(6.5, abs=1e-15)
    assert fm_predict(m, [1, 0]) == pytest.approx(1.5, abs=1e-15)
    assert fm_predict(m, [0, 0]) == 0.5
    assert naive_fm(0.5, [1, -1], [[2], [3]], [1, 1]) == 6.5


def test_fm_dimension_error():
    with pytest.raises(DimensionError):
        fm_predict(hand_fm(), [1, 0, 1])


def test_pooling_matches_naive(rng):
    worst = 0.0
    for _ in range(1000):
        d, k = rng.integers(1, 12), rng.integers(1, 6)
        w0, w, V = rng.normal(), rng.normal(size=d), rng.normal(size=(d, k))
        x = rng.integers(0, 2, size=d).astype(float)
        fast = fm_pool(w0, w, V, x[None, :])[0][0]
        worst = max(worst, abs(fast - naive_fm(w0, w, V, x)))
    assert worst < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_masking_removes_exactly_row_terms(seed):
    rng = np.random.default_rng(seed)
    d, k = 7, 3
    w0, w, V = rng.normal(), rng.normal(size=d), rng.normal(size=(d, k))
    x = np.ones(d)
    i = int(rng.integers(d))
    x_off = x.copy()
    x_off[i] = 0
    removed = w[i] + sum(V[i] @ V[j] for j in range(d) if j != i)
    delta = fm_pool(w0, w, V, x[None])[0][0] - fm_pool(w0, w, V, x_off[None])[0][0]
    assert delta == pytest.approx(removed, abs=1e-10)


def test_identity_qet_equals_fm(rng):
    qet = QETSurrogate.identity(6, 8, rng)
    fm = FMSurrogate(6, 8)
    fm.params.update({k: qet.params[k] for k in ("w0", "w", "V")})
    qet.params["w"] = rng.normal(size=6)
    fm.params["w"] = qet.params["w"]
    X = rng.integers(0, 2, size=(100, 6))
    assert np.array_equal(qet.predict(X), fm.predict(X))
    assert np.array_equal(extract_embeddings(qet)[0], qet.params["V"])


def test_qet_zero_config_gives_bias(rng):
    m = QETSurrogate(5, 8, rng)
    m.params["w0"] = np.array(1.25)
    assert qet_forward(m, [0] * 5) == 1.25


def perturbed_qet(seed, d=4, k=4):
    rng = np.random.default_rng(seed)
    m = QETSurrogate(d, k, rng)
    for name, v in m.params.items():
        m.params[name] = np.asarray(v + rng.normal(scale=0.2, size=v.shape))
    return m


def test_qet_forward_matches_reference():
    m = perturbed_qet(11)
    x = [1, 0, 1, 0]
    ref = naive_qet(m.params, m.n_layers, m.heads, x)
    assert qet_forward(m, x) == pytest.approx(ref, abs=1e-12)


def test_qet_without_ln_matches_reference():
    rng = np.random.default_rng(5)
    m = QETSurrogate(5, 8, rng, use_layer_norm=False)
    x = [1, 1, 0, 1, 1]
    assert qet_forward(m, x) == pytest.approx(naive_qet(m.params, 2, 4, x, use_layer_norm=False), abs=1e-12)


def test_trained_qet_embeddings_match_reference(rng):
    X, y = planted_fm_data(rng, d=6, n=80)
    m, _ = train(QETSurrogate(6, 8, rng), X, y, TrainConfig(steps=50), rng)
    V_eff, w0, w = extract_embeddings(m)
    layers = [{key: m.params[f"enc{i}.{key}"] for key in ("ln1_g", "ln1_b", "Wq", "bq", "Wk", "bk", "Wv",
               "bv", "Wo", "bo", "ln2_g", "ln2_b", "W1", "b1", "W2", "b2")} for i in range(2)]
    ref = naive_encoder(m.params["V"], layers, 4) * np.sqrt(m.y_scale)
    assert np.max(np.abs(V_eff - ref)) < 1e-12
    # folded embeddings reproduce the model's predictions
    assert np.allclose(fm_pool(w0, w, V_eff, X)[0], m.predict(X), atol=1e-10)


def test_fm_embeddings_are_stored_v(rng):
    m = FMSurrogate(5, 3, rng)
    assert np.array_equal(extract_embeddings(m)[0], m.params["V"])


def test_gradient_check_fm():
    errs = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        m = FMSurrogate(6, 3, rng)
        m.params["w"] = rng.normal(size=6)
        errs.append(gradient_check(m, rng.integers(0, 2, 6), rng.normal()))
    assert max(errs) < 1e-5


def test_gradient_check_qet():
    for seed in range(2):
        rng = np.random.default_rng(seed)
        m = perturbed_qet(seed, 4, 8)
        assert gradient_check(m, rng.integers(0, 2, 4), rng.normal()) < 1e-4


def test_gradient_check_rejects_epsilon():
    with pytest.raises(ValueError):
        gradient_check(hand_fm(), [1, 1], 0.0, epsilon=1e-3)


def test_zero_input_gradients():
    m = perturbed_qet(3, 4, 8)
    g = analytic_grads(m, [0, 0, 0, 0], 0.7)
    assert np.all(g["V"] == 0)
    assert float(g["w0"]) == pytest.approx(2 * (float(m.params["w0"]) - 0.7))


def test_planted_fm_recovery(rng):
    X, y = planted_fm_data(rng)
    fm, trace = train(FMSurrogate(8, 16, rng), X[:300], y[:300], TrainConfig(), rng)
    assert r2(y[300:], fm.predict(X[300:])) >= 0.95
    smooth = np.convolve(trace, np.ones(50) / 50, mode="valid")
    assert np.all(np.diff(smooth[::50]) <= 1e-9)


def test_repeated_sample_converges(rng):
    x = np.array([[1, 0, 1, 1]] * 2, dtype=float)
    m, _ = train(FMSurrogate(4, 4, rng), x, np.array([2.0, 2.0]), TrainConfig(steps=2000, lr=1e-2), rng)
    assert abs(m.predict(x[:1])[0] - 2.0) < 1e-3


def test_zero_steps_leaves_params(rng):
    m = QETSurrogate(4, 8, rng)
    before = {k: v.copy() for k, v in m.params.items()}
    train(m, np.eye(4), np.arange(4.0), TrainConfig(steps=0))
    assert all(np.array_equal(before[k], m.params[k]) for k in before)


def test_training_deterministic():
    def fit():
        rng = np.random.default_rng(8)
        X, y = planted_fm_data(rng, d=6, n=60)
        m, _ = train(QETSurrogate(6, 8, rng), X, y, TrainConfig(steps=30), rng)
        return m.to_json()
    assert fit() == fit()


def test_divergence_is_reported(rng):
    X = rng.integers(0, 2, size=(20, 4)).astype(float)
    y = rng.normal(size=20)
    y[0] = np.inf
    with pytest.raises(SurrogateDivergence) as info:
        train(FMSurrogate(4, 2, rng), X, y, TrainConfig(steps=5))
    assert info.value.step == 1


def test_checkpoint_round_trip(rng):
    X, y = planted_fm_data(rng, d=5, n=40)
    for model in (FMSurrogate(5, 4, rng), QETSurrogate(5, 8, rng, heads=2)):
        model.train_seed = 17
        train(model, X, y, TrainConfig(steps=20), rng)
        again = FMSurrogate.from_json(model.to_json())
        assert type(again) is type(model) and again.train_seed == 17
        assert np.array_equal(again.predict(X), model.predict(X))
    doc = json.loads(FMSurrogate(3, 2).to_json())
    doc["version"] = 99
    with pytest.raises(ValueError):
        FMSurrogate.from_json(json.dumps(doc))


def test_qet_head_divisibility():
    with pytest.raises(ValueError):
        QETSurrogate(4, 6, heads=4)
