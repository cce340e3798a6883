"""Quadratic surrogates: Factorization Machine and the attention-contextualised QET."""
from .models import (
    FMSurrogate,
    QETSurrogate,
    extract_embeddings,
    fm_pool,
    fm_predict,
    make_surrogate,
    qet_forward,
)
from .training import SurrogateDivergence, TrainConfig, gradient_check, train

__all__ = [
    "FMSurrogate",
    "QETSurrogate",
    "SurrogateDivergence",
    "TrainConfig",
    "extract_embeddings",
    "fm_pool",
    "fm_predict",
    "gradient_check",
    "make_surrogate",
    "qet_forward",
    "train",
]
