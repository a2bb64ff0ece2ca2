# cython: language_level=3
"""Compiled versions of the hot kernels (same contract as ``_pykernels``)."""
import numpy as np

from libc.math cimport sqrt

cdef int _MAX_BISECT = 400

QUADRATIC = 0
LINEAR = 1


cdef double _psi(const double[::1] values, const double[::1] probs,
                 double x, double w) noexcept nogil:
    cdef Py_ssize_t j
    cdef double lower = 0.0, upper = 0.0, v
    for j in range(values.shape[0]):
        v = values[j]
        if v > x + w:
            upper += probs[j] * (v - (x + w))
        elif v < x - w:
            lower += probs[j] * ((x - w) - v)
    return lower - upper


def psi(values, probs, double x, double w):
    cdef const double[::1] vv = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] pp = np.ascontiguousarray(probs, dtype=np.float64)
    return _psi(vv, pp, x, w)


def shift_root(values, probs, double w, double tol):
    cdef const double[::1] vv = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] pp = np.ascontiguousarray(probs, dtype=np.float64)
    cdef double lo, hi, mid, left, right, b
    cdef int it
    with nogil:
        lo = -w
        hi = w
        for it in range(_MAX_BISECT):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if _psi(vv, pp, mid, w) < 0.0:
                lo = mid
            else:
                hi = mid
        left = 0.5 * (lo + hi)
        lo = -w
        hi = w
        for it in range(_MAX_BISECT):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if _psi(vv, pp, mid, w) <= 0.0:
                lo = mid
            else:
                hi = mid
        right = 0.5 * (lo + hi)
        b = 0.5 * (left + right)
        if b < -w:
            b = -w
        elif b > w:
            b = w
    return b


def pgd_run(int kind, X, w0, indptr, indices, etas, double radius, double curvature):
    if kind != QUADRATIC and kind != LINEAR:
        raise ValueError(f"unknown kernel loss kind {kind}")
    cdef const double[:, ::1] xx = np.ascontiguousarray(X, dtype=np.float64)
    cdef const long[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long[::1] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] eta = np.ascontiguousarray(etas, dtype=np.float64)
    out = np.array(w0, dtype=np.float64, copy=True)
    cdef double[::1] w = out
    cdef double[::1] g = np.zeros(xx.shape[1], dtype=np.float64)
    cdef Py_ssize_t d = xx.shape[1]
    cdef Py_ssize_t T = ptr.shape[0] - 1
    cdef Py_ssize_t t, j, k, row
    cdef double e, esum, norm, scale
    with nogil:
        for t in range(T):
            if ptr[t] == ptr[t + 1]:
                continue
            for k in range(d):
                g[k] = 0.0
            esum = 0.0
            for j in range(ptr[t], ptr[t + 1]):
                e = eta[j]
                row = idx[j]
                esum += e
                for k in range(d):
                    g[k] += e * xx[row, k]
            norm = 0.0
            for k in range(d):
                if kind == 0:
                    w[k] = w[k] - curvature * (esum * w[k] - g[k])
                else:
                    w[k] = w[k] - 0.5 * g[k]
                norm += w[k] * w[k]
            norm = sqrt(norm)
            if norm > radius:
                scale = radius / norm
                for k in range(d):
                    w[k] *= scale
    return out
