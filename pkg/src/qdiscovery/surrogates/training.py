"""MSE training with Adam, and finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import FMSurrogate

FULL_BATCH_MAX = 1024
MINIBATCH = 256


class SurrogateDivergence(FloatingPointError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss!r})")
        self.step = step
        self.loss = loss


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def _mse_grads(model: FMSurrogate, X, y):
    pred, cache = model.raw_forward(X)
    resid = pred - y
    loss = float(np.mean(resid * resid))
    grads = model.raw_backward(2.0 * resid / len(y), cache)
    return loss, grads


def train(model: FMSurrogate, X, y, cfg: TrainConfig = TrainConfig(),
          rng: np.random.Generator | None = None) -> tuple[FMSurrogate, list[float]]:
    """Fit ``model`` in place to ``(X, y)`` by minimising mean squared error.

    Targets are standardised over ``y`` before fitting.  Weight decay is the
    L2 penalty added to the gradient (coupled Adam).  Returns the model and
    the per-step loss in standardised units.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2 and cfg.steps > 0:
        raise ValueError("training needs at least two samples")
    if cfg.steps == 0:
        return model, []
    mean = float(y.mean())
    std = float(y.std())
    model.y_mean = mean
    model.y_scale = std if std > 1e-12 else 1.0
    t = (y - mean) / model.y_scale

    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    s = {k: np.zeros_like(v) for k, v in model.params.items()}
    if len(t) > FULL_BATCH_MAX and rng is None:
        rng = np.random.default_rng(0)
    trace = []
    for step in range(1, cfg.steps + 1):
        if len(t) > FULL_BATCH_MAX:
            idx = rng.choice(len(t), size=MINIBATCH, replace=False)
            loss, grads = _mse_grads(model, X[idx], t[idx])
        else:
            loss, grads = _mse_grads(model, X, t)
        if not np.isfinite(loss):
            raise SurrogateDivergence(step, loss)
        trace.append(loss)
        c1 = 1.0 - cfg.beta1 ** step
        c2 = 1.0 - cfg.beta2 ** step
        for name, p in model.params.items():
            g = grads[name] + cfg.weight_decay * p
            m[name] = cfg.beta1 * m[name] + (1 - cfg.beta1) * g
            s[name] = cfg.beta2 * s[name] + (1 - cfg.beta2) * g * g
            update = cfg.lr * (m[name] / c1) / (np.sqrt(s[name] / c2) + cfg.eps)
            model.params[name] = np.asarray(p - update)
    return model, trace


def analytic_grads(model: FMSurrogate, x, y) -> dict[str, np.ndarray]:
    """Gradient of ``(raw(x) - y)**2`` for a single sample."""
    X = model._check(x)
    pred, cache = model.raw_forward(X)
    return model.raw_backward(2.0 * (pred - y), cache)


def gradient_check(model: FMSurrogate, x, y: float, epsilon: float = 1e-5) -> float:
    """Worst per-tensor relative error between analytic and central-difference gradients.

    For each tensor ``||a - n|| / max(||a||, ||n||, 1e-6 * G)`` is computed,
    where ``G = max(1, ||full analytic gradient||)``.  The floor keeps tensors
    whose true gradient is zero (e.g. attention key biases) from turning
    finite-difference round-off into a large ratio.
    """
    if not 1e-6 <= epsilon <= 1e-4:
        raise ValueError("epsilon must lie in [1e-6, 1e-4]")
    X = model._check(x)
    for name in model.params:
        # 0-d entries may have decayed to numpy scalars, which cannot be perturbed in place
        model.params[name] = np.array(model.params[name], dtype=float)

    def loss():
        return float((model.raw_forward(X)[0][0] - y) ** 2)

    analytic = analytic_grads(model, X, y)
    floor = 1e-6 * max(1.0, float(np.sqrt(sum(np.sum(a * a) for a in analytic.values()))))
    worst = 0.0
    for name, p in model.params.items():
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss()
            flat[i] = orig - epsilon
            down = loss()
            flat[i] = orig
            nflat[i] = (up - down) / (2 * epsilon)
        a = analytic[name]
        denom = max(np.linalg.norm(a), np.linalg.norm(numeric), floor)
        worst = max(worst, float(np.linalg.norm(a - numeric) / denom))
    return worst
