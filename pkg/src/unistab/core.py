"""Datasets, finite distributions and data-dependent functions.

A data-dependent function ``M(s, z)`` takes a dataset ``s`` of ``n`` points and
a query point ``z``. It carries a declared uniform-stability certificate
``gamma``: replacing any one element of ``s`` moves ``M(s, z)`` by at most
``gamma`` for every ``z``. Certificates are declared by whoever builds the
function and checked here by audits, never inferred.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Sequence

import numpy as np

#: Exact enumeration over datasets is used when ``m ** n`` is at most this.
ENUMERATION_LIMIT = 10**6

RANGE_SLACK = 1e-9
CERTIFICATE_SLACK = 1e-9


class CertificateViolation(Exception):
    """An audit observed a deviation larger than the declared stability."""

    def __init__(self, observed: float, declared: float, witness: Any = None):
        self.observed = observed
        self.declared = declared
        self.witness = witness
        super().__init__(
            f"observed stability {observed:.6g} exceeds declared certificate {declared:.6g}"
        )


def trial_rng(seed: int, index: int, *keys: int) -> np.random.Generator:
    """Independent stream for trial ``index`` under master ``seed``.

    The stream depends only on ``(seed, *keys, index)``, so trials can run in
    any order or in parallel without changing their draws.
    """
    entropy = [int(seed), *(int(k) for k in keys), int(index)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class Dataset:
    """An ordered n-tuple of domain points."""

    elements: tuple

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if len(self.elements) < 1:
            raise ValueError("a dataset needs at least one element")

    @property
    def n(self) -> int:
        return len(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __iter__(self):
        return iter(self.elements)

    def replace(self, i: int, z) -> "Dataset":
        """Return ``s^{i<-z}``: a copy with index ``i`` set to ``z``."""
        if not 0 <= i < len(self.elements):
            raise IndexError(f"index {i} out of range for dataset of size {self.n}")
        items = list(self.elements)
        items[i] = z
        return Dataset(tuple(items))

    def as_array(self) -> np.ndarray:
        """Elements stacked as a float array of shape ``(n, d)``."""
        arr = np.asarray(self.elements, dtype=float)
        return arr.reshape(len(self.elements), -1)


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Probability vector over a finite list of domain points."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or len(probs) != len(support):
            raise ValueError("probs must be a vector matching the support")
        if len(support) == 0:
            raise ValueError("empty support")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, support: Sequence) -> "FiniteDistribution":
        support = tuple(support)
        return cls(support, np.full(len(support), 1.0 / len(support)))

    @classmethod
    def point_mass(cls, z) -> "FiniteDistribution":
        return cls((z,), np.ones(1))

    def __len__(self) -> int:
        return len(self.support)

    def expect(self, f: Callable[[Any], float]) -> float:
        """Exact ``E_{z~P}[f(z)]``."""
        return float(sum(p * f(z) for z, p in zip(self.support, self.probs) if p > 0))

    def mean_point(self) -> np.ndarray:
        """Mean of the support viewed as vectors."""
        pts = np.asarray(self.support, dtype=float).reshape(len(self.support), -1)
        return self.probs @ pts

    def sample_indices(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.choice(len(self.support), size=size, p=self.probs)

    def sample(self, rng: np.random.Generator, n: int) -> Dataset:
        idx = self.sample_indices(rng, n)
        return Dataset(tuple(self.support[i] for i in idx))

    def num_datasets(self, n: int) -> int:
        return len(self.support) ** n

    def enumerate_datasets(self, n: int) -> Iterator[tuple[Dataset, float]]:
        """Yield every dataset in ``support^n`` with its probability under ``P^n``."""
        m = len(self.support)
        for combo in itertools.product(range(m), repeat=n):
            prob = math.prod(self.probs[j] for j in combo)
            yield Dataset(tuple(self.support[j] for j in combo)), float(prob)


@dataclass(frozen=True, eq=False)
class DataDependentFunction:
    """Evaluator ``M(s, z)`` with a declared range and stability certificate.

    Evaluations outside ``[lo, hi]`` raise ``ValueError``; the range is part of
    the contract the bounds rely on.
    """

    evaluator: Callable[[Dataset, Any], float]
    lo: float
    hi: float
    stability: float
    unbiased: bool = False
    name: str = ""

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty range [{self.lo}, {self.hi}]")
        if self.stability < 0:
            raise ValueError("stability certificate must be nonnegative")

    def __call__(self, s: Dataset, z) -> float:
        v = float(self.evaluator(s, z))
        if not (self.lo - RANGE_SLACK <= v <= self.hi + RANGE_SLACK):
            raise ValueError(
                f"{self.name or 'function'} evaluated to {v!r}, outside [{self.lo}, {self.hi}]"
            )
        return v

    @property
    def range(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def half_range(self) -> float:
        """Smallest ``R`` with ``[lo, hi]`` inside ``[-R, R]``."""
        return max(abs(self.lo), abs(self.hi))


@dataclass(frozen=True)
class ExpectationEstimate:
    value: float
    std_error: float = 0.0
    method: str = "analytic"
    samples: int | None = None

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.method == "analytic" and self.std_error != 0.0:
            raise ValueError("analytic estimates carry no standard error")

    def __float__(self) -> float:
        return float(self.value)


def constant_function(c: float, name: str = "constant") -> DataDependentFunction:
    return DataDependentFunction(lambda s, z: c, lo=c, hi=c, stability=0.0, name=name)


def empirical_mean(M: DataDependentFunction, s: Dataset) -> float:
    """``(1/n) sum_i M(s, s_i)``."""
    return math.fsum(M(s, zi) for zi in s) / s.n


def true_mean(M: DataDependentFunction, s: Dataset, P: FiniteDistribution) -> ExpectationEstimate:
    """Exact ``E_{z~P}[M(s, z)]`` over the finite support."""
    terms = [p * M(s, z) for z, p in zip(P.support, P.probs) if p > 0]
    return ExpectationEstimate(math.fsum(terms))


def estimation_error(M: DataDependentFunction, s: Dataset, P: FiniteDistribution) -> float:
    """``|E_P[M(s)] - E_s[M(s)]|``, the gap between true and empirical mean."""
    return abs(true_mean(M, s, P).value - empirical_mean(M, s))


def unbias(M: DataDependentFunction, P: FiniteDistribution) -> DataDependentFunction:
    """Subtract the per-dataset true mean so ``E_{z~P}[L(s, z)] = 0`` for every ``s``.

    Replacing one element moves both ``M(s, z)`` and its mean by at most gamma,
    so the returned certificate is ``2 * gamma``.
    """

    def evaluator(s, z):
        return M(s, z) - true_mean(M, s, P).value

    return DataDependentFunction(
        evaluator,
        lo=M.lo - M.hi,
        hi=M.hi - M.lo,
        stability=2.0 * M.stability,
        unbiased=True,
        name=f"unbias({M.name})" if M.name else "unbias",
    )


def loo_terms(L: DataDependentFunction, s: Dataset, z) -> np.ndarray:
    """Vector of ``L(s^{i<-z}, s_i)`` for ``i = 0..n-1``."""
    return np.array([L(s.replace(i, z), s[i]) for i in range(s.n)], dtype=float)


def loo_error(L: DataDependentFunction, s: Dataset, z) -> float:
    """Leave-one-out estimation error ``(1/n) sum_i L(s^{i<-z}, s_i)``."""
    if not L.unbiased:
        raise ValueError("leave-one-out error is defined for unbiased functions; call unbias() first")
    return math.fsum(loo_terms(L, s, z)) / s.n


def dataset_expectation(
    f: Callable[[Dataset], float],
    P: FiniteDistribution,
    n: int,
    *,
    mc_draws: int = 20_000,
    seed: int = 0,
    limit: int = ENUMERATION_LIMIT,
) -> ExpectationEstimate:
    """``E_{s~P^n}[f(s)]``: exact enumeration when ``m**n <= limit``, else Monte Carlo."""
    if P.num_datasets(n) <= limit:
        total = math.fsum(prob * f(s) for s, prob in P.enumerate_datasets(n) if prob > 0)
        return ExpectationEstimate(total)
    vals = np.array([f(P.sample(trial_rng(seed, j), n)) for j in range(mc_draws)])
    se = float(vals.std(ddof=1) / math.sqrt(mc_draws)) if mc_draws > 1 else 0.0
    return ExpectationEstimate(float(vals.mean()), se, method=f"monte_carlo({mc_draws})", samples=mc_draws)


def audit_stability(
    M: DataDependentFunction,
    P: FiniteDistribution,
    n: int,
    trials: int,
    seed: int = 0,
    *,
    raise_on_violation: bool = True,
) -> float:
    """Empirical lower bound on the true uniform stability of ``M``.

    Each trial draws ``s ~ P^n``, an index ``i`` and a replacement ``s'``; the
    deviation ``|M(s, z) - M(s^{i<-s'}, z)|`` is maximised over every ``z`` in the
    support. Raises :class:`CertificateViolation` if the result exceeds the
    declared certificate by more than ``1e-9``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    worst = 0.0
    witness = None
    for j in range(trials):
        rng = trial_rng(seed, j)
        s = P.sample(rng, n)
        i = int(rng.integers(n))
        repl = P.support[int(P.sample_indices(rng, None))]
        s2 = s.replace(i, repl)
        for z in P.support:
            dev = abs(M(s, z) - M(s2, z))
            if dev > worst:
                worst, witness = dev, (s, i, repl, z)
    if raise_on_violation and worst > M.stability + CERTIFICATE_SLACK:
        raise CertificateViolation(worst, M.stability, witness)
    return worst


def exhaustive_stability(M: DataDependentFunction, P: FiniteDistribution, n: int) -> float:
    """Exact uniform stability of ``M`` over ``support^n`` (tiny instances only)."""
    if P.num_datasets(n) * n * len(P) > ENUMERATION_LIMIT:
        raise ValueError("instance too large for exhaustive enumeration")
    worst = 0.0
    for s, _ in P.enumerate_datasets(n):
        base = [M(s, z) for z in P.support]
        for i in range(n):
            for repl in P.support:
                if repl == s[i]:
                    continue
                s2 = s.replace(i, repl)
                for z, v in zip(P.support, base):
                    worst = max(worst, abs(v - M(s2, z)))
    return worst
