"""Central finite-difference gradient checking.

The numeric oracle perturbs one element at a time with step h and runs the
full forward in float64, so the only error sources are truncation (~h^2)
and float64 roundoff. Comparisons use a relative error with a small
absolute floor for elements whose true gradient is zero.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

DEFAULT_H = 1e-3
ABS_FLOOR = 1e-6


def numeric_grad(f: Callable[[Sequence[np.ndarray]], float],
                 arrays: Sequence[np.ndarray], h: float = DEFAULT_H) -> list[np.ndarray]:
    """Central-difference gradient of scalar f with respect to each array."""
    grads = []
    work = [a.astype(np.float64).copy() for a in arrays]
    for ai, a in enumerate(work):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(work)
            flat[i] = orig - h
            fm = f(work)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def numeric_grad_filtered(f: Callable[[Sequence[np.ndarray]], float],
                          arrays: Sequence[np.ndarray], h: float = DEFAULT_H,
                          consistency_rtol: float = 1e-3,
                          ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Central differences with a kink filter for composite functions.

    Deep networks are piecewise smooth: a perturbation of +-h can push some
    relu or |.| unit across its kink, in which case the difference quotient
    estimates no derivative at all. Each element is therefore evaluated at
    steps h and h/2; where the two estimates disagree the sample point is
    not "away from non-differentiabilities" and is masked out.

    Returns (grads, valid) with one boolean mask per array.
    """
    grads, valids = [], []
    work = [a.astype(np.float64).copy() for a in arrays]
    for ai, a in enumerate(work):
        g = np.zeros_like(a)
        ok = np.ones(a.shape, dtype=bool)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        okflat = ok.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp1 = f(work)
            flat[i] = orig - h
            fm1 = f(work)
            flat[i] = orig + h / 2
            fp2 = f(work)
            flat[i] = orig - h / 2
            fm2 = f(work)
            flat[i] = orig
            n1 = (fp1 - fm1) / (2.0 * h)
            n2 = (fp2 - fm2) / h
            gflat[i] = n2
            tol = max(ABS_FLOOR, consistency_rtol * max(abs(n1), abs(n2)))
            okflat[i] = abs(n1 - n2) <= tol
        grads.append(g)
        valids.append(ok)
    return grads, valids


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                  atol: float = ABS_FLOOR,
                  valid: np.ndarray | None = None) -> float:
    """Max over elements of |a - n| / max(|a|, |n|), ignoring sub-atol diffs.

    ``valid`` optionally masks elements (from ``numeric_grad_filtered``).
    """
    a = analytic.astype(np.float64)
    n = numeric.astype(np.float64)
    diff = np.abs(a - n)
    denom = np.maximum(np.abs(a), np.abs(n))
    rel = np.where(diff <= atol, 0.0, diff / np.maximum(denom, 1e-300))
    if valid is not None:
        rel = rel[valid]
    return float(rel.max()) if rel.size else 0.0
