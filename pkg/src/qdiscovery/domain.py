"""Core value types, seeded RNG substreams and bitstring helpers.

Basis indexing puts bit 0 in the least significant position, and the spin
map sends ``x = 0`` to ``z = +1``.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 27

STREAM_LABELS = ("oracle", "surrogate-init", "qaoa-init", "baseline", "sampler")


class DimensionError(ValueError):
    """Raised when a configuration does not match the expected dimension."""


def as_config(bits: Iterable[int], d: int | None = None) -> np.ndarray:
    """Validate ``bits`` and return them as a read-only ``uint8`` vector."""
    arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
    if arr.ndim != 1:
        raise DimensionError(f"configuration must be 1-D, got shape {arr.shape}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("configuration entries must be 0 or 1")
    if d is not None and arr.size != d:
        raise DimensionError(f"expected {d} bits, got {arr.size}")
    if arr.size > MAX_DIM:
        raise DimensionError(f"d={arr.size} exceeds the supported maximum {MAX_DIM}")
    out = arr.astype(np.uint8)
    out.flags.writeable = False
    return out


def index_of(config: Sequence[int]) -> int:
    """Computational-basis index ``sum_i bits[i] * 2**i``."""
    bits = as_config(config)
    return int(sum(int(b) << i for i, b in enumerate(bits)))


def config_of(index: int, d: int) -> np.ndarray:
    """Inverse of :func:`index_of`."""
    if not 0 <= index < (1 << d):
        raise ValueError(f"index {index} out of range for d={d}")
    return as_config([(index >> i) & 1 for i in range(d)])


def indices_of(configs: np.ndarray) -> np.ndarray:
    """Vectorised :func:`index_of` over the rows of a 2-D bit array."""
    configs = np.asarray(configs, dtype=np.int64)
    weights = np.left_shift(np.int64(1), np.arange(configs.shape[1], dtype=np.int64))
    return configs @ weights


def configs_of(indices: np.ndarray, d: int) -> np.ndarray:
    """Rows of bits for each basis index, shape ``(len(indices), d)``."""
    indices = np.asarray(indices, dtype=np.int64)
    return ((indices[:, None] >> np.arange(d)) & 1).astype(np.uint8)


def all_configs(d: int) -> np.ndarray:
    """Every configuration of length ``d``, row ``i`` has basis index ``i``."""
    return configs_of(np.arange(1 << d), d)


def spin_of(config: Sequence[int]) -> np.ndarray:
    """Map bits to spins with ``z = 1 - 2x``."""
    return 1 - 2 * np.asarray(config, dtype=np.int64)


def config_from_spin(z: Sequence[int]) -> np.ndarray:
    z = np.asarray(z)
    if not np.all((z == 1) | (z == -1)):
        raise ValueError("spin entries must be +1 or -1")
    return as_config((1 - z) // 2)


def bits_key(config: Sequence[int]) -> tuple[int, ...]:
    """Hashable form of a configuration."""
    return tuple(int(b) for b in config)


def hamming(a: Sequence[int], b: Sequence[int]) -> int:
    return int(np.sum(np.asarray(a) != np.asarray(b)))


@dataclass(frozen=True)
class EvaluatedSample:
    config: tuple[int, ...]
    score: float
    method_id: str
    iteration: int = 0

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite score {self.score!r}")
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")

    def to_record(self) -> dict:
        return {
            "bits": list(self.config),
            "score": self.score,
            "method_id": self.method_id,
            "iteration": self.iteration,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "EvaluatedSample":
        return cls(
            config=bits_key(rec["bits"]),
            score=float(rec["score"]),
            method_id=str(rec["method_id"]),
            iteration=int(rec["iteration"]),
        )


@dataclass(frozen=True)
class RunSeed:
    """A master seed from which named, independent RNG substreams are derived.

    The same ``(master_seed, label)`` pair always yields the same stream, so a
    run can be replayed exactly.
    """

    master_seed: int
    stream_labels: tuple[str, ...] = field(default=STREAM_LABELS)

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def seed_sequence(self, label: str, *extra: int) -> np.random.SeedSequence:
        if label not in self.stream_labels:
            raise KeyError(f"unknown stream label {label!r}")
        return np.random.SeedSequence(
            [self.master_seed, zlib.crc32(label.encode()), *extra]
        )

    def stream(self, label: str, *extra: int) -> np.random.Generator:
        """Fresh generator for ``label``; ``extra`` integers select sub-substreams."""
        return np.random.default_rng(self.seed_sequence(label, *extra))
