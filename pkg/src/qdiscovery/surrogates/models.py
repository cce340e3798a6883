"""Factorization Machine and QET surrogates sharing one pooling head."""
from __future__ import annotations

import json
import math

import numpy as np

from ..domain import DimensionError
from . import encoder as enc

CHECKPOINT_FORMAT = "qdiscovery.surrogate"
CHECKPOINT_VERSION = 1


def fm_pool(w0, w, V, X):
    """Second-order FM prediction for each row of ``X`` in O(d*k).

    ``w0 + X @ w + 1/2 * sum_f [(X @ V)_f**2 - (X**2 @ V**2)_f]``
    """
    S = X @ V
    pair = 0.5 * ((S * S).sum(axis=1) - ((X * X) @ (V * V)).sum(axis=1))
    return w0 + X @ w + pair, S


def _pool_backward(g, X, S, V):
    """Gradients of ``sum(g * pool)`` w.r.t. (w0, w, V)."""
    dw0 = g.sum()
    dw = X.T @ g
    dV = X.T @ (g[:, None] * S) - ((X * X).T @ g)[:, None] * V
    return dw0, dw, dV


class FMSurrogate:
    """Factorization Machine over binary inputs.

    Predictions are made in a standardised target space and mapped back with
    ``y_mean + y_scale * raw``; a fresh model has ``y_mean = 0, y_scale = 1``.
    """

    kind = "fm"

    def __init__(self, d: int, k: int = 16, rng: np.random.Generator | None = None):
        if k < 1:
            raise ValueError("latent dimension k must be >= 1")
        self.d = d
        self.k = k
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / math.sqrt(k)
        self.params: dict[str, np.ndarray] = {
            "w0": np.zeros(()),
            "w": np.zeros(d),
            "V": rng.uniform(-bound, bound, size=(d, k)),
        }
        self.y_mean = 0.0
        self.y_scale = 1.0
        self.train_seed: int | None = None

    # -- forward / backward -------------------------------------------------

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.d:
            raise DimensionError(f"model expects d={self.d}, got {X.shape[1]}")
        return X

    def effective_V(self) -> np.ndarray:
        return self.params["V"]

    def raw_forward(self, X):
        V_eff = self.effective_V()
        out, S = fm_pool(self.params["w0"], self.params["w"], V_eff, X)
        return out, (X, S, V_eff)

    def raw_backward(self, g, cache) -> dict[str, np.ndarray]:
        X, S, V_eff = cache
        dw0, dw, dV = _pool_backward(g, X, S, V_eff)
        return {"w0": np.asarray(dw0), "w": dw, "V": dV}

    def raw_predict(self, X) -> np.ndarray:
        return self.raw_forward(self._check(X))[0]

    def predict(self, X) -> np.ndarray:
        return self.y_mean + self.y_scale * self.raw_predict(X)

    # -- persistence ---------------------------------------------------------

    def _arch(self) -> dict:
        return {}

    def to_json(self) -> str:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "d": self.d,
            "k": self.k,
            "arch": self._arch(),
            "train_seed": self.train_seed,
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "params": {name: arr.tolist() for name, arr in self.params.items()},
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "FMSurrogate":
        doc = json.loads(text)
        if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError("unrecognised surrogate checkpoint")
        if doc["kind"] == "fm":
            model = FMSurrogate(doc["d"], doc["k"])
        elif doc["kind"] == "qet":
            arch = doc["arch"]
            model = QETSurrogate(doc["d"], doc["k"], heads=arch["heads"], n_layers=arch["n_layers"],
                                 hidden=arch["hidden"], use_layer_norm=arch["use_layer_norm"])
        else:
            raise ValueError(f"unknown surrogate kind {doc['kind']!r}")
        for name, value in doc["params"].items():
            if name not in model.params:
                raise ValueError(f"unexpected parameter {name!r}")
            model.params[name] = np.asarray(value, dtype=float).reshape(model.params[name].shape)
        model.y_mean = float(doc["y_mean"])
        model.y_scale = float(doc["y_scale"])
        model.train_seed = doc.get("train_seed")
        return model


class QETSurrogate(FMSurrogate):
    """FM whose latent rows are first contextualised by a self-attention encoder.

    The encoder runs on the full latent matrix ``V`` (input independent); the
    configuration only masks rows inside the pooling head.
    """

    kind = "qet"

    def __init__(self, d: int, k: int = 16, rng: np.random.Generator | None = None,
                 heads: int = 4, n_layers: int = 2, hidden: int | None = None,
                 use_layer_norm: bool = True):
        if k % heads:
            raise ValueError(f"k={k} is not divisible by heads={heads}")
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(d, k, rng)
        self.heads = heads
        self.n_layers = n_layers
        self.hidden = hidden if hidden is not None else k
        self.use_layer_norm = use_layer_norm
        for i in range(n_layers):
            for key, arr in enc.init_layer(rng, k, self.hidden).items():
                self.params[f"enc{i}.{key}"] = arr

    @classmethod
    def identity(cls, d: int, k: int = 16, rng=None, **kw) -> "QETSurrogate":
        """Encoder reduced to the identity map, so the model equals a plain FM."""
        model = cls(d, k, rng, use_layer_norm=False, **kw)
        for i in range(model.n_layers):
            for key, arr in enc.identity_layer(k, model.hidden).items():
                if key in ("Wo", "bo", "W2", "b2"):
                    model.params[f"enc{i}.{key}"] = arr
        return model

    def _layers(self) -> list[dict[str, np.ndarray]]:
        return [
            {key: self.params[f"enc{i}.{key}"] for key in enc.LAYER_KEYS}
            for i in range(self.n_layers)
        ]

    def _arch(self) -> dict:
        return {"heads": self.heads, "n_layers": self.n_layers, "hidden": self.hidden,
                "use_layer_norm": self.use_layer_norm}

    def effective_V(self) -> np.ndarray:
        return enc.encoder_forward(self.params["V"], self._layers(), self.heads, self.use_layer_norm)[0]

    def raw_forward(self, X):
        layers = self._layers()
        V_eff, enc_caches = enc.encoder_forward(self.params["V"], layers, self.heads, self.use_layer_norm)
        out, S = fm_pool(self.params["w0"], self.params["w"], V_eff, X)
        return out, (X, S, V_eff, layers, enc_caches)

    def raw_backward(self, g, cache) -> dict[str, np.ndarray]:
        X, S, V_eff, layers, enc_caches = cache
        dw0, dw, dV_eff = _pool_backward(g, X, S, V_eff)
        dV, layer_grads = enc.encoder_backward(dV_eff, layers, enc_caches, self.heads, self.use_layer_norm)
        grads = {"w0": np.asarray(dw0), "w": dw, "V": dV}
        for i, lg in enumerate(layer_grads):
            for key, arr in lg.items():
                grads[f"enc{i}.{key}"] = arr
        return grads


def make_surrogate(kind: str, d: int, k: int = 16, rng=None) -> FMSurrogate:
    if kind == "fm":
        return FMSurrogate(d, k, rng)
    if kind == "qet":
        return QETSurrogate(d, k, rng)
    raise ValueError(f"unknown surrogate kind {kind!r}")


def fm_predict(model: FMSurrogate, config) -> float:
    """Plain FM prediction from the model's stored latent matrix, bypassing any encoder."""
    X = model._check(config)
    out, _ = fm_pool(model.params["w0"], model.params["w"], model.params["V"], X)
    return float(model.y_mean + model.y_scale * out[0])


def qet_forward(model: QETSurrogate, config) -> float:
    return float(model.predict(config)[0])


def extract_embeddings(model: FMSurrogate) -> tuple[np.ndarray, float, np.ndarray]:
    """``(V_eff, w0, w)`` in original target units.

    The target scaling is folded in, so ``fm_pool(w0, w, V_eff, X)`` equals
    ``model.predict(X)``.
    """
    root = math.sqrt(model.y_scale)
    V_eff = model.effective_V() * root
    w0 = model.y_mean + model.y_scale * float(model.params["w0"])
    w = model.y_scale * model.params["w"]
    return V_eff, w0, w
