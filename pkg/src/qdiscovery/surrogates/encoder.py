"""Pre-norm Transformer encoder over the rows of the latent matrix.

Forward and backward passes are written out by hand in numpy (double
precision).  The encoder sees all ``d`` latent rows as tokens at once; it
never sees a configuration.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
# residual output projections start small so the initial V_eff stays close to V
RESIDUAL_INIT_SCALE = 0.1

LAYER_KEYS = (
    "ln1_g", "ln1_b", "Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo",
    "ln2_g", "ln2_b", "W1", "b1", "W2", "b2",
)


def init_layer(rng: np.random.Generator, k: int, hidden: int) -> dict[str, np.ndarray]:
    def uniform(fan_in, shape, gain=1.0):
        bound = gain / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return {
        "ln1_g": np.ones(k), "ln1_b": np.zeros(k),
        "Wq": uniform(k, (k, k)), "bq": np.zeros(k),
        "Wk": uniform(k, (k, k)), "bk": np.zeros(k),
        "Wv": uniform(k, (k, k)), "bv": np.zeros(k),
        "Wo": uniform(k, (k, k), RESIDUAL_INIT_SCALE), "bo": np.zeros(k),
        "ln2_g": np.ones(k), "ln2_b": np.zeros(k),
        "W1": uniform(k, (k, hidden)), "b1": np.zeros(hidden),
        "W2": uniform(hidden, (hidden, k), RESIDUAL_INIT_SCALE), "b2": np.zeros(k),
    }


def identity_layer(k: int, hidden: int) -> dict[str, np.ndarray]:
    """Layer whose residual branches output exactly zero."""
    layer = init_layer(np.random.default_rng(0), k, hidden)
    for key in ("Wo", "bo", "W2", "b2"):
        layer[key] = np.zeros_like(layer[key])
    return layer


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


def _ln_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _ln_backward(dy, g, cache):
    xhat, rstd = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    n = xhat.shape[-1]
    dx = rstd / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                     - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    return dx, dg, db


def _split(t, heads):
    T, k = t.shape
    return t.reshape(T, heads, k // heads).transpose(1, 0, 2)


def _merge(t):
    H, T, dh = t.shape
    return t.transpose(1, 0, 2).reshape(T, H * dh)


def layer_forward(x, p, heads, use_ln=True):
    caches = {}
    if use_ln:
        h, caches["ln1"] = _ln_forward(x, p["ln1_g"], p["ln1_b"])
    else:
        h = x
    q = _split(h @ p["Wq"] + p["bq"], heads)
    kk = _split(h @ p["Wk"] + p["bk"], heads)
    v = _split(h @ p["Wv"] + p["bv"], heads)
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = q @ kk.transpose(0, 2, 1) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    A = np.exp(scores)
    A /= A.sum(axis=-1, keepdims=True)
    o = _merge(A @ v)
    x1 = x + o @ p["Wo"] + p["bo"]

    if use_ln:
        h2, caches["ln2"] = _ln_forward(x1, p["ln2_g"], p["ln2_b"])
    else:
        h2 = x1
    pre = h2 @ p["W1"] + p["b1"]
    act = _gelu(pre)
    out = x1 + act @ p["W2"] + p["b2"]
    caches.update(h=h, q=q, k=kk, v=v, A=A, o=o, scale=scale, h2=h2, pre=pre, act=act)
    return out, caches


def layer_backward(dout, p, c, heads, use_ln=True):
    grads = {}
    # feed-forward branch
    grads["b2"] = dout.sum(axis=0)
    grads["W2"] = c["act"].T @ dout
    dpre = (dout @ p["W2"].T) * _gelu_grad(c["pre"])
    grads["b1"] = dpre.sum(axis=0)
    grads["W1"] = c["h2"].T @ dpre
    dh2 = dpre @ p["W1"].T
    if use_ln:
        dx1_ln, grads["ln2_g"], grads["ln2_b"] = _ln_backward(dh2, p["ln2_g"], c["ln2"])
    else:
        dx1_ln = dh2
        grads["ln2_g"] = np.zeros_like(p["ln2_g"])
        grads["ln2_b"] = np.zeros_like(p["ln2_b"])
    dx1 = dout + dx1_ln

    # attention branch
    grads["bo"] = dx1.sum(axis=0)
    grads["Wo"] = c["o"].T @ dx1
    do = _split(dx1 @ p["Wo"].T, heads)
    A = c["A"]
    dA = do @ c["v"].transpose(0, 2, 1)
    dv = A.transpose(0, 2, 1) @ do
    dscores = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) * c["scale"]
    dq = dscores @ c["k"]
    dk = dscores.transpose(0, 2, 1) @ c["q"]
    dq, dk, dv = _merge(dq), _merge(dk), _merge(dv)
    h = c["h"]
    grads["Wq"], grads["bq"] = h.T @ dq, dq.sum(axis=0)
    grads["Wk"], grads["bk"] = h.T @ dk, dk.sum(axis=0)
    grads["Wv"], grads["bv"] = h.T @ dv, dv.sum(axis=0)
    dh = dq @ p["Wq"].T + dk @ p["Wk"].T + dv @ p["Wv"].T
    if use_ln:
        dx_ln, grads["ln1_g"], grads["ln1_b"] = _ln_backward(dh, p["ln1_g"], c["ln1"])
    else:
        dx_ln = dh
        grads["ln1_g"] = np.zeros_like(p["ln1_g"])
        grads["ln1_b"] = np.zeros_like(p["ln1_b"])
    return dx1 + dx_ln, grads


def encoder_forward(V, layers, heads, use_ln=True):
    x = V
    caches = []
    for p in layers:
        x, c = layer_forward(x, p, heads, use_ln)
        caches.append(c)
    return x, caches


def encoder_backward(dV_eff, layers, caches, heads, use_ln=True):
    dx = dV_eff
    layer_grads = [None] * len(layers)
    for i in reversed(range(len(layers))):
        dx, layer_grads[i] = layer_backward(dx, layers[i], caches[i], heads, use_ln)
    return dx, layer_grads
