"""Adaptive clamping, centering/range reduction and block decompositions.

Everything here works on finite-support instances, where expectations over the
query point are exact and expectations over datasets are exact by enumeration
for tiny ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (
    DataDependentFunction,
    Dataset,
    ExpectationEstimate,
    FiniteDistribution,
    dataset_expectation,
    loo_terms,
)

UNBIASED_TOL = 1e-10


class UnbiasednessError(ValueError):
    """``E_{z~P}[K(s, z)]`` is not zero for some dataset."""


@dataclass(frozen=True)
class ClampSpec:
    w: float
    tol: float = 1e-12

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("clamp half-width w must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def _profile(K: DataDependentFunction, s: Dataset, P: FiniteDistribution) -> np.ndarray:
    return np.array([K(s, z) for z in P.support], dtype=float)


def psi(K: DataDependentFunction, s: Dataset, P: FiniteDistribution, x: float, w: float) -> float:
    """``-E_z[(K - (x+w))_+] + E_z[((x-w) - K)_+]``: mean shift caused by clamping to ``[x-w, x+w]``."""
    return kernels.psi(_profile(K, s, P), P.probs, float(x), float(w))


def find_shift(K: DataDependentFunction, s: Dataset, P: FiniteDistribution, spec: ClampSpec) -> float:
    """Window centre ``b_s`` in ``[-w, w]`` that keeps the clamped function unbiased.

    Bisection on the nondecreasing ``psi``; if ``psi`` vanishes on an interval
    the midpoint of that interval is returned, which keeps ``b_s`` within
    ``gamma`` across neighbouring datasets.
    """
    values = _profile(K, s, P)
    mean = float(P.probs @ values)
    if abs(mean) > UNBIASED_TOL:
        raise UnbiasednessError(f"E_z[K(s, z)] = {mean:.3e} for s = {s.elements!r}")
    return kernels.shift_root(values, P.probs, float(spec.w), float(spec.tol))


@dataclass(eq=False)
class ClampResult:
    clamped: DataDependentFunction
    spec: ClampSpec
    shifts: dict = field(default_factory=dict)
    clamp_error_mean: ExpectationEstimate | None = None

    def shift(self, s: Dataset) -> float:
        return self.clamped.evaluator.shift(s)


class _ClampEvaluator:
    def __init__(self, K, P, spec, shifts):
        self.K, self.P, self.spec, self.shifts = K, P, spec, shifts

    def shift(self, s):
        b = self.shifts.get(s)
        if b is None:
            b = self.shifts.setdefault(s, find_shift(self.K, s, self.P, self.spec))
        return b

    def __call__(self, s, z):
        b = self.shift(s)
        w = self.spec.w
        return min(max(self.K(s, z), b - w), b + w)


def adaptive_clamp(
    K: DataDependentFunction,
    P: FiniteDistribution,
    spec: ClampSpec,
    n: int | None = None,
) -> ClampResult:
    """Clamp ``K(s, .)`` to ``[b_s - w, b_s + w]`` with a dataset-dependent shift.

    The clamped function stays unbiased and keeps the stability certificate of
    ``K``. Shifts are found lazily and memoised per dataset. When ``n`` is given
    the mean clamp error ``E_{s,z}|K~ - K|`` is computed as well.
    """
    if not K.unbiased:
        raise UnbiasednessError("adaptive clamping needs an unbiased function")
    shifts: dict = {}
    ev = _ClampEvaluator(K, P, spec, shifts)
    w = spec.w
    clamped = DataDependentFunction(
        ev,
        lo=max(K.lo, -2.0 * w),
        hi=min(K.hi, 2.0 * w),
        stability=K.stability,
        unbiased=True,
        name=f"clamp({K.name})" if K.name else "clamp",
    )
    result = ClampResult(clamped, spec, shifts)
    if n is not None:
        result.clamp_error_mean = dataset_expectation(
            lambda s: P.expect(lambda z: abs(clamped(s, z) - K(s, z))), P, n
        )
    return result


def tail_budget(K: DataDependentFunction, P: FiniteDistribution, n: int, w: float) -> tuple[float, float]:
    """``(E_{s,z}[(K - w)_+], E_{s,z}[(-w - K)_+])``, the one-sided clamp budgets."""
    up = dataset_expectation(lambda s: P.expect(lambda z: max(K(s, z) - w, 0.0)), P, n)
    down = dataset_expectation(lambda s: P.expect(lambda z: max(-w - K(s, z), 0.0)), P, n)
    return up.value, down.value


@dataclass(frozen=True, eq=False)
class Centering:
    phi: dict
    K: DataDependentFunction
    std_errors: dict

    def __iter__(self):
        return iter((self.phi, self.K))


def center(
    L: DataDependentFunction,
    P: FiniteDistribution,
    n: int,
    *,
    mc_draws: int = 20_000,
    seed: int = 0,
) -> Centering:
    """Subtract ``phi(z) = E_{s~P^n}[L(s, z)]`` from ``L``.

    ``phi`` is tabulated on the support, exactly when the dataset space is
    enumerable and by Monte Carlo otherwise (standard errors in ``std_errors``).
    """
    phi, errs = {}, {}
    for j, z in enumerate(P.support):
        est = dataset_expectation(lambda s: L(s, z), P, n, mc_draws=mc_draws, seed=seed + j)
        phi[z] = est.value
        errs[z] = est.std_error
    # E_z[phi] is zero in exact arithmetic; remove Monte Carlo/rounding drift so K stays unbiased
    if L.unbiased:
        drift = float(P.probs @ np.array([phi[z] for z in P.support]))
        for z in phi:
            phi[z] -= drift
    lo_phi, hi_phi = min(phi.values()), max(phi.values())

    def evaluator(s, z):
        return L(s, z) - phi[z]

    K = DataDependentFunction(
        evaluator,
        lo=L.lo - hi_phi,
        hi=L.hi - lo_phi,
        stability=L.stability,
        unbiased=L.unbiased,
        name=f"center({L.name})" if L.name else "center",
    )
    return Centering(phi, K, errs)


@dataclass(frozen=True, eq=False)
class RangeReduction:
    phi: dict
    centered: DataDependentFunction
    clamped: DataDependentFunction
    residual: DataDependentFunction
    new_range: float
    w: float
    clamp: ClampResult | None

    def reconstruct(self, s: Dataset, z) -> float:
        return self.clamped(s, z) + self.phi[z] + self.residual(s, z)


def range_reduce(
    L: DataDependentFunction,
    P: FiniteDistribution,
    n: int,
    delta: float,
    *,
    tol: float = 1e-12,
    mc_draws: int = 20_000,
    seed: int = 0,
) -> RangeReduction:
    """Write ``L = K~ + phi + residual`` with ``K~`` of range ``2 gamma sqrt(n ln(n/delta))``.

    Requires ``n >= 4``, ``delta <= 1/e`` and
    ``gamma < R / (2 sqrt(n ln(n/delta)))`` where ``[-R, R]`` covers the range
    of ``L``.
    """
    if not L.unbiased:
        raise UnbiasednessError("range reduction needs an unbiased function")
    if n < 4:
        raise ValueError(f"range reduction needs n >= 4, got n = {n}")
    if delta > 1.0 / math.e:
        raise ValueError(f"range reduction needs delta <= 1/e, got delta = {delta}")
    R = L.half_range
    scale = math.sqrt(n * math.log(n / delta))
    limit = R / (2.0 * scale)
    if not L.stability < limit:
        raise ValueError(
            f"hypothesis gamma < R / (2 sqrt(n ln(n/delta))) fails: {L.stability:.6g} >= {limit:.6g}"
        )
    w = L.stability * scale
    phi, K = center(L, P, n, mc_draws=mc_draws, seed=seed)
    if w == 0.0:
        # zero stability: K(., z) is constant in s, hence identically zero
        clamp, Kt = None, K
    else:
        clamp = adaptive_clamp(K, P, ClampSpec(w, tol))
        Kt = clamp.clamped

    def residual_eval(s, z):
        return K(s, z) - Kt(s, z)

    residual = DataDependentFunction(
        residual_eval,
        lo=K.lo - Kt.hi,
        hi=K.hi - Kt.lo,
        stability=2.0 * L.stability,
        unbiased=True,
        name="residual",
    )
    return RangeReduction(phi, K, Kt, residual, 2.0 * w, w, clamp)


def block_means(values, k: int) -> tuple[float, list[float]]:
    """Split per-index terms into ``k`` consecutive blocks; return (overall mean, block means)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if k < 1 or n % k:
        raise ValueError(f"k = {k} does not divide n = {n}; use the overlapping variant")
    size = n // k
    per_block = [math.fsum(values[j * size:(j + 1) * size]) / size for j in range(k)]
    return math.fsum(per_block) / k, per_block


def overlapping_block_means(values, n_prime: int) -> tuple[float, list[float]]:
    """``n`` cyclic blocks of size ``n_prime``; each index lies in exactly ``n_prime`` of them."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if not 1 <= n_prime <= n:
        raise ValueError(f"need 1 <= n' <= n, got n' = {n_prime}, n = {n}")
    per_block = [
        math.fsum(values[(j + r) % n] for r in range(n_prime)) / n_prime for j in range(n)
    ]
    return math.fsum(per_block) / n, per_block


def block_loo(L: DataDependentFunction, s: Dataset, z, k: int) -> tuple[float, list[float]]:
    """Leave-one-out error of ``L`` and its restriction to each of ``k`` blocks."""
    return block_means(loo_terms(L, s, z), k)


def overlapping_block_loo(L: DataDependentFunction, s: Dataset, z, n_prime: int) -> tuple[float, list[float]]:
    return overlapping_block_means(loo_terms(L, s, z), n_prime)
