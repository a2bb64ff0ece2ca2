"""Pure-Python/numpy versions of the hot kernels.

Signatures mirror ``_ckernels.pyx`` exactly; see ``unistab.kernels`` for the
import-time selection.
"""
from __future__ import annotations

import numpy as np

QUADRATIC = 0
LINEAR = 1

_MAX_BISECT = 400


def psi(values, probs, x, w):
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    upper = np.maximum(values - (x + w), 0.0)
    lower = np.maximum((x - w) - values, 0.0)
    return float(probs @ lower - probs @ upper)


def shift_root(values, probs, w, tol):
    """Midpoint of the zero set of ``psi`` inside ``[-w, w]``.

    Two bisections locate ``inf{psi >= 0}`` and ``sup{psi <= 0}``; they agree
    unless ``psi`` vanishes on a whole interval.
    """
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)

    lo, hi = -w, w
    for _ in range(_MAX_BISECT):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if psi(values, probs, mid, w) < 0.0:
            lo = mid
        else:
            hi = mid
    left = 0.5 * (lo + hi)

    lo, hi = -w, w
    for _ in range(_MAX_BISECT):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if psi(values, probs, mid, w) <= 0.0:
            lo = mid
        else:
            hi = mid
    right = 0.5 * (lo + hi)

    return min(max(0.5 * (left + right), -w), w)


def pgd_run(kind, X, w0, indptr, indices, etas, radius, curvature):
    """Run projected gradient steps for a shipped loss family.

    ``X`` holds one sample per row. Step ``t`` uses entries
    ``indptr[t]:indptr[t+1]`` of ``indices``/``etas``. ``kind`` selects the
    gradient: ``curvature * (w - z)`` for QUADRATIC, ``z / 2`` for LINEAR.
    """
    X = np.asarray(X, dtype=float)
    w = np.array(w0, dtype=float, copy=True)
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    etas = np.asarray(etas, dtype=float)
    for t in range(len(indptr) - 1):
        a, b = indptr[t], indptr[t + 1]
        if a == b:
            continue
        eta = etas[a:b]
        rows = X[indices[a:b]]
        if kind == QUADRATIC:
            g = curvature * (eta.sum() * w - eta @ rows)
        elif kind == LINEAR:
            g = 0.5 * (eta @ rows)
        else:
            raise ValueError(f"unknown kernel loss kind {kind}")
        w = w - g
        norm = np.sqrt(w @ w)
        if norm > radius:
            w *= radius / norm
    return w
