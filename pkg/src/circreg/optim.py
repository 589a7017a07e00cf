"""A small deterministic Nelder-Mead simplex minimizer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def nelder_mead(
    func: Callable[[np.ndarray], float],
    x0,
    step,
    tol: float = 1e-6,
    max_iterations: int = 400,
    reflection: float = 1.0,
    expansion: float = 2.0,
    contraction: float = 0.5,
    shrink: float = 0.5,
) -> SimplexResult:
    """Minimize ``func`` starting from ``x0``.

    The initial simplex is ``x0`` plus ``x0 + step[i] * e_i``. Iteration stops
    once the spread of function values over the simplex drops below ``tol``
    or after ``max_iterations`` iterations. The best point ever evaluated is
    returned, so the result is never worse than ``x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    k = x0.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (k,))
    f0 = float(func(x0))
    evals = 1
    if max_iterations <= 0:
        return SimplexResult(x0.copy(), f0, 0, evals, False)

    simplex = np.vstack([x0] + [x0 + step[i] * np.eye(k)[i] for i in range(k)])
    fvals = np.empty(k + 1)
    fvals[0] = f0
    for i in range(1, k + 1):
        fvals[i] = func(simplex[i])
        evals += 1

    it = 0
    converged = False
    while True:
        # stable sort keeps earlier (older) vertices first on ties
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if fvals[-1] - fvals[0] < tol:
            converged = True
            break
        if it >= max_iterations:
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + reflection * (centroid - worst)
        fr = float(func(xr))
        evals += 1
        if fr < fvals[0]:
            xe = centroid + expansion * (xr - centroid)
            fe = float(func(xe))
            evals += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + contraction * (xr - centroid)
            fc = float(func(xc))
            evals += 1
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid - contraction * (centroid - worst)
            fc = float(func(xc))
            evals += 1
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        for i in range(1, k + 1):
            simplex[i] = simplex[0] + shrink * (simplex[i] - simplex[0])
            fvals[i] = func(simplex[i])
            evals += 1

    best = int(np.argmin(fvals))
    return SimplexResult(simplex[best].copy(), float(fvals[best]), it, evals, converged)
