"""QUBO construction from learned embeddings and the QUBO -> Ising map."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .domain import DimensionError


class HamiltonianError(ValueError):
    pass


@dataclass(eq=False)
class QuboModel:
    """Minimised energy ``E(x) = sign * (offset + linear @ x + sum_{i<j} Q_ij x_i x_j)``.

    ``Q`` is the full Gram matrix; only its strict upper triangle enters the
    energy.  ``sign = -1`` records that a surrogate to be *maximised* was
    negated so that low energy means high predicted score.
    """

    Q: np.ndarray
    linear: np.ndarray
    offset: float = 0.0
    sign: float = -1.0

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    def energy(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        upper = np.triu(self.Q, 1)
        pair = np.einsum("ni,ij,nj->n", X, upper, X)
        return self.sign * (self.offset + X @ self.linear + pair)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[0])

    def is_psd(self) -> bool:
        evals = np.linalg.eigvalsh(self.Q)
        return bool(evals[0] >= -1e-8 * max(1.0, float(np.abs(evals).max())))

    def to_json(self) -> str:
        return json.dumps({"format": "qdiscovery.qubo", "version": 1, "Q": self.Q.tolist(),
                           "linear": self.linear.tolist(), "offset": self.offset,
                           "sign": self.sign}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "QuboModel":
        doc = json.loads(text)
        return cls(np.asarray(doc["Q"], dtype=float), np.asarray(doc["linear"], dtype=float),
                   float(doc["offset"]), float(doc["sign"]))


@dataclass(eq=False)
class IsingModel:
    """``H(z) = sum_{i<j} J_ij z_i z_j + sum_i h_i z_i + constant``.

    ``J`` is stored as a dense strictly upper-triangular matrix.
    """

    J: np.ndarray
    h: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        if self.J.shape != (self.d, self.d):
            raise DimensionError("J must be d x d")
        if np.any(np.tril(self.J) != 0):
            raise HamiltonianError("J must be strictly upper triangular")
        if not (np.all(np.isfinite(self.J)) and np.all(np.isfinite(self.h))
                and np.isfinite(self.constant)):
            raise HamiltonianError("Ising coefficients must be finite")

    @property
    def d(self) -> int:
        return self.h.shape[0]

    def couplings(self) -> list[tuple[int, int, float]]:
        rows, cols = np.nonzero(self.J)
        return [(int(i), int(j), float(self.J[i, j])) for i, j in zip(rows, cols)]

    @classmethod
    def from_couplings(cls, d: int, couplings, h, constant: float = 0.0) -> "IsingModel":
        J = np.zeros((d, d))
        for i, j, v in couplings:
            if i == j:
                raise HamiltonianError("self-couplings are not allowed")
            a, b = min(i, j), max(i, j)
            J[a, b] += v
        return cls(J, np.asarray(h, dtype=float), constant)

    def to_json(self) -> str:
        return json.dumps({"format": "qdiscovery.ising", "version": 1, "d": self.d,
                           "J": [[i, j, v] for i, j, v in self.couplings()],
                           "h": self.h.tolist(), "constant": self.constant}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "IsingModel":
        doc = json.loads(text)
        return cls.from_couplings(doc["d"], doc["J"], doc["h"], doc["constant"])

    def to_text(self) -> str:
        """Plain coupler list: ``i j J_ij`` lines, then ``i h_i`` lines."""
        lines = [f"# ising d={self.d} constant={self.constant!r}"]
        lines += [f"{i} {j} {v!r}" for i, j, v in self.couplings()]
        lines += [f"{i} {v!r}" for i, v in enumerate(self.h.tolist()) if v != 0.0]
        return "\n".join(lines) + "\n"


def build_qubo(V_eff, w0: float, w, include_linear: bool = True) -> QuboModel:
    """Gram-matrix QUBO from refined embeddings; the energy is the negated surrogate.

    With ``include_linear=False`` only the interaction part is kept.
    """
    V_eff = np.asarray(V_eff, dtype=float)
    w = np.asarray(w, dtype=float)
    if V_eff.ndim != 2 or w.shape != (V_eff.shape[0],):
        raise DimensionError("V_eff must be d x k and w of length d")
    if not (np.all(np.isfinite(V_eff)) and np.all(np.isfinite(w)) and np.isfinite(w0)):
        raise HamiltonianError("embeddings must be finite")
    Q = V_eff @ V_eff.T
    Q = 0.5 * (Q + Q.T)
    if include_linear:
        return QuboModel(Q, w.copy(), float(w0), -1.0)
    return QuboModel(Q, np.zeros_like(w), 0.0, -1.0)


def qubo_to_ising(q: QuboModel) -> IsingModel:
    """Substitute ``x_i = (1 - z_i) / 2`` and collect terms."""
    s = q.sign
    upper = np.triu(q.Q, 1)
    J = s * upper / 4.0
    # each pair (i<j) contributes -q_ij/4 to both h_i and h_j
    pair_fields = (upper.sum(axis=1) + upper.sum(axis=0)) / 4.0
    h = s * (-q.linear / 2.0 - pair_fields)
    constant = s * (q.offset + q.linear.sum() / 2.0 + upper.sum() / 4.0)
    return IsingModel(J, h, float(constant))


def ising_energy(m: IsingModel, z) -> np.ndarray | float:
    """Energy of one spin vector (returns float) or of each row of a 2-D array."""
    Z = np.asarray(z)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.shape[1] != m.d:
        raise DimensionError(f"expected {m.d} spins, got {Z.shape[1]}")
    if not np.all((Z == 1) | (Z == -1)):
        raise HamiltonianError("spin entries must be +1 or -1")
    Z = Z.astype(float)
    e = np.einsum("ni,ij,nj->n", Z, m.J, Z) + Z @ m.h + m.constant
    return float(e[0]) if single else e


def diagonal_energies(m: IsingModel, include_constant: bool = True) -> np.ndarray:
    """Energy of every basis state, indexed with bit 0 least significant."""
    d = m.d
    idx = np.arange(1 << d)
    spins = [1.0 - 2.0 * ((idx >> i) & 1) for i in range(d)]
    E = np.full(idx.size, m.constant if include_constant else 0.0)
    for i in range(d):
        field = np.full(idx.size, m.h[i])
        for j in range(i + 1, d):
            if m.J[i, j] != 0.0:
                field += m.J[i, j] * spins[j]
        E += spins[i] * field
    return E


def top_edges(q: QuboModel, count: int) -> list[tuple[int, int]]:
    """``count`` pairs with the largest ``|Q_ij|``; ties go to lexicographic order."""
    d = q.d
    if count > d * (d - 1) // 2:
        raise ValueError("count exceeds the number of pairs")
    iu, ju = np.triu_indices(d, 1)
    mag = np.abs(q.Q[iu, ju])
    order = np.lexsort((ju, iu, -mag))
    return [(int(iu[o]), int(ju[o])) for o in order[:count]]
