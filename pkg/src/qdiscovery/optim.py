"""Budgeted Nelder-Mead simplex minimiser."""
from __future__ import annotations

from typing import Callable

import numpy as np

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5


def nelder_mead(f: Callable[[np.ndarray], float], x0, max_evals: int, step: float = 0.25,
                xtol: float = 1e-8, ftol: float = 1e-12) -> tuple[np.ndarray, float, int]:
    """Minimise ``f`` from ``x0`` with at most ``max_evals`` calls.

    The initial simplex offsets each coordinate of ``x0`` by ``step``.  Returns
    ``(best_x, best_f, evals_used)``; the best point is tracked over every call,
    so the result is never worse than ``f(x0)`` once ``x0`` has been evaluated.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    evals = 0
    best_x, best_f = x0.copy(), np.inf

    def call(x):
        nonlocal evals, best_x, best_f
        evals += 1
        v = float(f(x))
        if v < best_f:
            best_x, best_f = x.copy(), v
        return v

    if max_evals <= 0:
        return best_x, best_f, 0

    simplex = [x0.copy()]
    for i in range(n):
        vertex = x0.copy()
        vertex[i] += step
        simplex.append(vertex)
    values = []
    for x in simplex:
        if evals >= max_evals:
            return best_x, best_f, evals
        values.append(call(x))
    simplex = np.array(simplex)
    values = np.array(values)

    while evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if (np.max(np.abs(simplex[1:] - simplex[0])) <= xtol
                and np.max(np.abs(values[1:] - values[0])) <= ftol):
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + REFLECT * (centroid - worst)
        fr = call(xr)
        if fr < values[0]:
            if evals >= max_evals:
                simplex[-1], values[-1] = xr, fr
                break
            xe = centroid + EXPAND * (xr - centroid)
            fe = call(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if evals >= max_evals:
            break
        if fr < values[-1]:
            xc = centroid + CONTRACT * (xr - centroid)
        else:
            xc = centroid + CONTRACT * (worst - centroid)
        fc = call(xc)
        if fc < min(fr, values[-1]):
            simplex[-1], values[-1] = xc, fc
            continue
        for i in range(1, n + 1):
            if evals >= max_evals:
                break
            simplex[i] = simplex[0] + SHRINK * (simplex[i] - simplex[0])
            values[i] = call(simplex[i])
    return best_x, best_f, evals
