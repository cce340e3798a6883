"""Dense statevector simulation of depth-p QAOA over an Ising cost Hamiltonian.

Amplitudes are ``complex128`` with bit 0 of the basis index as the least
significant qubit.  Single- and two-qubit rotations act in place on reshaped
views of the state, flipping the target axes instead of building matrices.
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .hamiltonian import IsingModel, diagonal_energies
from .optim import nelder_mead

MAX_QUBITS = 24
MAX_QUBITS_HIGH_MEMORY = 27
DUMP_MAGIC = b"QSTV"


class SimulatorError(ValueError):
    pass


@dataclass
class QaoaParams:
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if self.gamma.size != self.beta.size or self.gamma.size < 1:
            raise SimulatorError("gamma and beta must have the same length p >= 1")

    @property
    def p(self) -> int:
        return self.gamma.size

    @classmethod
    def zeros(cls, p: int = 2) -> "QaoaParams":
        return cls(np.zeros(p), np.zeros(p))

    @classmethod
    def linear_ramp(cls, p: int = 2, energy_scale: float = 1.0, delta: float = 0.75) -> "QaoaParams":
        """gamma rising and |beta| falling across layers; gamma is divided by ``energy_scale``.

        beta is negative: ``|+>`` is the top eigenstate of ``sum X``, so an
        annealing-like path towards low cost energy needs ``exp(+i|beta| X)``.
        """
        frac = (np.arange(p) + 0.5) / p
        return cls(delta * frac / energy_scale, -delta * (1.0 - frac))


@dataclass
class MixerSpec:
    kind: str = "standard"
    edges: list[tuple[int, int]] = field(default_factory=list)
    lam: float = 0.5

    def __post_init__(self):
        if self.kind not in ("standard", "correlated"):
            raise SimulatorError(f"unknown mixer kind {self.kind!r}")
        if self.kind == "correlated":
            if not self.edges:
                raise SimulatorError("a correlated mixer needs at least one edge")
            if self.lam < 0:
                raise SimulatorError("lambda must be non-negative")
            if any(i == j for i, j in self.edges):
                raise SimulatorError("edges must join distinct qubits")


def init_plus(d: int, high_memory: bool = False) -> np.ndarray:
    limit = MAX_QUBITS_HIGH_MEMORY if high_memory else MAX_QUBITS
    if not 1 <= d <= limit:
        raise SimulatorError(f"d={d} outside the supported range 1..{limit}")
    return np.full(1 << d, 2.0 ** (-d / 2), dtype=np.complex128)


def _qubits(state: np.ndarray) -> int:
    d = state.size.bit_length() - 1
    if 1 << d != state.size:
        raise SimulatorError("state length is not a power of two")
    return d


def apply_cost(state: np.ndarray, m: IsingModel | None, gamma: float,
               energies: np.ndarray | None = None) -> np.ndarray:
    """Multiply each amplitude by ``exp(-i gamma E(z))``; the constant term is dropped."""
    if energies is None:
        energies = diagonal_energies(m, include_constant=False)
    return state * np.exp(-1j * gamma * energies)


def _rx_all(state: np.ndarray, d: int, beta: float) -> np.ndarray:
    c, s = math.cos(beta), -1j * math.sin(beta)
    for q in range(d):
        v = state.reshape(1 << (d - q - 1), 2, 1 << q)
        state = (c * v + s * v[:, ::-1, :]).reshape(-1)
    return state


def _rxx(state: np.ndarray, d: int, i: int, j: int, theta: float) -> np.ndarray:
    if i > j:
        i, j = j, i
    c, s = math.cos(theta), -1j * math.sin(theta)
    v = state.reshape(1 << (d - j - 1), 2, 1 << (j - i - 1), 2, 1 << i)
    return (c * v + s * v[:, ::-1, :, ::-1, :]).reshape(-1)


def apply_mixer(state: np.ndarray, spec: MixerSpec, beta: float) -> np.ndarray:
    """``exp(-i beta X)`` on every qubit, then, for a correlated mixer,
    ``exp(-i beta lam X_i X_j)`` for each edge in the listed order."""
    d = _qubits(state)
    state = _rx_all(state, d, beta)
    if spec.kind == "correlated":
        for i, j in spec.edges:
            state = _rxx(state, d, i, j, beta * spec.lam)
    return state


def evolve(m: IsingModel, spec: MixerSpec, params: QaoaParams, high_memory: bool = False,
           energies: np.ndarray | None = None) -> np.ndarray:
    """Apply ``prod_l M(beta_l) C(gamma_l)`` to ``|+>^d``, layer 1 first."""
    if energies is None:
        energies = diagonal_energies(m, include_constant=False)
    state = init_plus(m.d, high_memory)
    for g, b in zip(params.gamma, params.beta):
        state = apply_cost(state, None, g, energies)
        state = apply_mixer(state, spec, b)
    return state


def expectation(state: np.ndarray, m: IsingModel, energies: np.ndarray | None = None) -> float:
    """``<psi|H_C|psi>`` including the constant term."""
    if energies is None:
        energies = diagonal_energies(m, include_constant=False)
    probs = np.abs(state) ** 2
    return float(probs @ energies + m.constant * probs.sum())


def energy_scale(m: IsingModel) -> float:
    """Standard deviation of the energy under the uniform distribution."""
    return float(math.sqrt(np.sum(m.J ** 2) + np.sum(m.h ** 2)))


class _BudgetStop(Exception):
    pass


@dataclass
class OptimizeResult:
    params: QaoaParams
    expectation: float
    initial_expectation: float | None
    trace: list[tuple[int, np.ndarray, np.ndarray, float]]

    def trace_csv(self) -> str:
        buf = io.StringIO()
        p = self.params.p
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["eval_index"] + [f"gamma{l}" for l in range(p)]
                        + [f"beta{l}" for l in range(p)] + ["expectation"])
        for idx, g, b, e in self.trace:
            writer.writerow([idx] + [repr(float(x)) for x in g] + [repr(float(x)) for x in b] + [repr(e)])
        return buf.getvalue()


def optimize_params(m: IsingModel, spec: MixerSpec, p: int = 2, budget_evals: int = 500,
                    rng: np.random.Generator | None = None, init: QaoaParams | None = None,
                    method: str = "nelder-mead", high_memory: bool = False) -> OptimizeResult:
    """Minimise ``<H_C>`` over (gamma, beta) with a derivative-free optimiser.

    ``method`` is ``"nelder-mead"`` (built-in simplex) or ``"cobyla"`` (scipy).

    Angles are searched in units where gamma is multiplied by the Hamiltonian's
    uniform-state energy spread, so both angle groups are O(1).  At most
    ``budget_evals`` expectation evaluations are made; the best point seen is
    returned, which is never worse than the initial one.  Both optimisers
    are deterministic, so ``rng`` is accepted for interface symmetry only.
    """
    scale = max(energy_scale(m), 1e-12)
    if init is None:
        init = QaoaParams.linear_ramp(p, scale)
    if budget_evals <= 0:
        return OptimizeResult(init, float("nan"), None, [])
    energies = diagonal_energies(m, include_constant=False)
    trace: list = []
    best = {"value": math.inf, "params": init}

    def objective(u):
        if len(trace) >= budget_evals:
            raise _BudgetStop
        params = QaoaParams(u[:p] / scale, u[p:])
        value = expectation(evolve(m, spec, params, high_memory, energies), m, energies)
        trace.append((len(trace), params.gamma.copy(), params.beta.copy(), value))
        if value < best["value"]:
            best["value"], best["params"] = value, params
        return value

    u0 = np.concatenate([init.gamma * scale, init.beta])
    try:
        if method == "nelder-mead":
            nelder_mead(objective, u0, budget_evals, step=0.25)
        elif method == "cobyla":
            minimize(objective, u0, method="COBYLA",
                     options={"maxiter": budget_evals, "rhobeg": 0.25, "tol": 1e-10})
        else:
            raise SimulatorError(f"unsupported optimiser {method!r}")
    except _BudgetStop:
        pass
    return OptimizeResult(best["params"], best["value"], trace[0][3], trace)


def probabilities(state: np.ndarray) -> np.ndarray:
    probs = np.abs(state) ** 2
    return probs / probs.sum()


def sample(state: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Basis-state indices of ``shots`` independent measurements."""
    if shots < 1:
        raise SimulatorError("shots must be >= 1")
    cdf = np.cumsum(probabilities(state))
    u = rng.random(shots) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), state.size - 1)


def dump_state(state: np.ndarray) -> bytes:
    """Header (magic, version, d) followed by little-endian interleaved re/im doubles."""
    d = _qubits(state)
    body = np.empty(2 * state.size, dtype="<f8")
    body[0::2] = state.real
    body[1::2] = state.imag
    return DUMP_MAGIC + struct.pack("<II", 1, d) + body.tobytes()


def load_state(blob: bytes) -> np.ndarray:
    if blob[:4] != DUMP_MAGIC:
        raise SimulatorError("not a state dump")
    version, d = struct.unpack("<II", blob[4:12])
    if version != 1:
        raise SimulatorError(f"unsupported dump version {version}")
    body = np.frombuffer(blob[12:], dtype="<f8")
    if body.size != 2 << d:
        raise SimulatorError("state dump is truncated")
    return body[0::2] + 1j * body[1::2]
