"""Slow, explicit reference implementations used to check the fast paths.

Nothing here imports the simulator, the Hamiltonian helpers or the pooling
code; each routine recomputes its answer from first principles.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

DENSE_MAX_DIM = 4
ENUM_MAX_DIM = 14

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)


def _kron_all(ops):
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def _site(op, q, d):
    # basis index bit q is qubit q; np.kron puts its first factor on the highest bit
    return _kron_all([op if k == q else _I for k in reversed(range(d))])


def _expm_hermitian(H, t):
    """``exp(-i t H)`` by eigendecomposition."""
    w, U = np.linalg.eigh(H)
    return (U * np.exp(-1j * t * w)) @ U.conj().T


def dense_cost_hamiltonian(m) -> np.ndarray:
    d = m.d
    H = np.zeros((1 << d, 1 << d), dtype=complex)
    for i in range(d):
        H += m.h[i] * _site(_Z, i, d)
        for j in range(i + 1, d):
            if m.J[i, j] != 0:
                H += m.J[i, j] * _site(_Z, i, d) @ _site(_Z, j, d)
    return H


def dense_mixer(spec, beta: float, d: int) -> np.ndarray:
    U = np.eye(1 << d, dtype=complex)
    for q in range(d):
        U = _expm_hermitian(_site(_X, q, d), beta) @ U
    if spec.kind == "correlated":
        for i, j in spec.edges:
            XX = _site(_X, i, d) @ _site(_X, j, d)
            U = _expm_hermitian(XX, beta * spec.lam) @ U
    return U


def dense_evolve(m, spec, params) -> np.ndarray:
    """State after the QAOA circuit, built from explicit ``2^d x 2^d`` matrices (d <= 4)."""
    d = m.d
    if d > DENSE_MAX_DIM:
        raise ValueError(f"dense reference limited to d <= {DENSE_MAX_DIM}")
    H = dense_cost_hamiltonian(m)
    psi = np.full(1 << d, 1.0 / math.sqrt(1 << d), dtype=complex)
    for g, b in zip(params.gamma, params.beta):
        psi = _expm_hermitian(H, g) @ psi
        psi = dense_mixer(spec, b, d) @ psi
    return psi


def _bits(index: int, d: int) -> tuple[int, ...]:
    return tuple((index >> i) & 1 for i in range(d))


def _value(obj, x: tuple[int, ...]) -> tuple[float, bool]:
    """(value, maximise?) for a spec, QUBO or Ising model."""
    kind = type(obj).__name__
    if kind == "OracleSpec":
        v = obj.base + sum(c * xi for c, xi in zip(obj.linear_coeffs, x))
        for i, j, w in obj.pair_terms:
            v += w * x[i] * x[j]
        for subset, w in obj.higher_terms:
            v += w * all(x[i] for i in subset)
        return float(v), True
    if kind == "QuboModel":
        d = len(x)
        v = obj.offset + sum(obj.linear[i] * x[i] for i in range(d))
        for i in range(d):
            for j in range(i + 1, d):
                v += obj.Q[i][j] * x[i] * x[j]
        return float(obj.sign * v), False
    if kind == "IsingModel":
        z = [1 - 2 * xi for xi in x]
        d = len(x)
        v = obj.constant + sum(obj.h[i] * z[i] for i in range(d))
        for i in range(d):
            for j in range(i + 1, d):
                v += obj.J[i][j] * z[i] * z[j]
        return float(v), False
    raise TypeError(f"cannot enumerate {kind}")


def brute_force_optimum(obj) -> tuple[tuple[int, ...], float]:
    """Exhaustive argmax (oracle specs) or argmin (energies); ties go to the lexicographically smallest bits."""
    d = obj.d
    if d > ENUM_MAX_DIM:
        raise ValueError(f"exhaustive enumeration limited to d <= {ENUM_MAX_DIM}")
    best_x, best_v = None, None
    for x in itertools.product((0, 1), repeat=d):
        v, maximise = _value(obj, x)
        better = best_v is None or (v > best_v if maximise else v < best_v)
        if better:
            best_x, best_v = x, v
    return best_x, best_v


def naive_fm(w0: float, w, V, config) -> float:
    """Explicit double loop over pairs: ``w0 + sum w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j``."""
    d = len(config)
    k = len(V[0]) if d else 0
    total = float(w0)
    for i in range(d):
        total += w[i] * config[i]
    for i in range(d):
        for j in range(i + 1, d):
            dot = 0.0
            for f in range(k):
                dot += V[i][f] * V[j][f]
            total += dot * config[i] * config[j]
    return total


def naive_oracle(spec, config) -> float:
    """Direct monomial-by-monomial evaluation of a noise-free spec."""
    return _value(spec, tuple(int(b) for b in config))[0]


def _layer_norm_row(row, g, b, eps=1e-5):
    n = len(row)
    mu = sum(row) / n
    var = sum((r - mu) ** 2 for r in row) / n
    return [(r - mu) / math.sqrt(var + eps) * g[i] + b[i] for i, r in enumerate(row)]


def _affine_row(row, W, bias):
    return [sum(row[a] * W[a][c] for a in range(len(row))) + bias[c] for c in range(len(bias))]


def naive_encoder(V, layers, heads: int, use_layer_norm: bool = True) -> np.ndarray:
    """Token-by-token pre-norm encoder pass with scalar loops (exact-erf GELU)."""
    X = [list(map(float, row)) for row in np.asarray(V)]
    T, k = len(X), len(X[0])
    dh = k // heads
    for p in layers:
        H = [_layer_norm_row(x, p["ln1_g"], p["ln1_b"]) if use_layer_norm else list(x) for x in X]
        Qm = [_affine_row(h, p["Wq"], p["bq"]) for h in H]
        Km = [_affine_row(h, p["Wk"], p["bk"]) for h in H]
        Vm = [_affine_row(h, p["Wv"], p["bv"]) for h in H]
        attn = [[0.0] * k for _ in range(T)]
        for hd in range(heads):
            cols = range(hd * dh, (hd + 1) * dh)
            for t in range(T):
                logits = [sum(Qm[t][c] * Km[s][c] for c in cols) / math.sqrt(dh) for s in range(T)]
                top = max(logits)
                weights = [math.exp(l - top) for l in logits]
                norm = sum(weights)
                for c in cols:
                    attn[t][c] = sum(weights[s] / norm * Vm[s][c] for s in range(T))
        X1 = [[X[t][c] + v for c, v in enumerate(_affine_row(attn[t], p["Wo"], p["bo"]))] for t in range(T)]
        out = []
        for t in range(T):
            h2 = _layer_norm_row(X1[t], p["ln2_g"], p["ln2_b"]) if use_layer_norm else X1[t]
            pre = _affine_row(h2, p["W1"], p["b1"])
            act = [0.5 * u * (1.0 + math.erf(u / math.sqrt(2.0))) for u in pre]
            ff = _affine_row(act, p["W2"], p["b2"])
            out.append([X1[t][c] + ff[c] for c in range(k)])
        X = out
    return np.array(X)


def naive_qet(params: dict, n_layers: int, heads: int, config, use_layer_norm: bool = True,
              y_mean: float = 0.0, y_scale: float = 1.0) -> float:
    """Encoder on the full latent matrix, then the pairwise double loop on the refined rows."""
    layers = []
    for i in range(n_layers):
        prefix = f"enc{i}."
        layers.append({key[len(prefix):]: np.asarray(v) for key, v in params.items() if key.startswith(prefix)})
    V_eff = naive_encoder(params["V"], layers, heads, use_layer_norm)
    raw = naive_fm(float(params["w0"]), params["w"], V_eff, config)
    return y_mean + y_scale * raw
