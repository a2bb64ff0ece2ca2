"""Stability-certified convex solvers: regularized ERM, PGD with arbitrary rate
schedules, PSGD under shuffling or sampling with replacement, Moreau smoothing.

Certificates use the Lipschitz-scaled forms ``4 L^2 / ((lam + lam0) n)`` for
regularized ERM and ``2 L^2 * ||beta||_{1,inf}`` for PGD.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .core import DataDependentFunction, Dataset, FiniteDistribution


class ConvergenceError(RuntimeError):
    pass


class UnsupportedLossError(ValueError):
    pass


def _vec(z) -> np.ndarray:
    return np.atleast_1d(np.asarray(z, dtype=float))


# ---------------------------------------------------------------------------
# Convex bodies


@dataclass(frozen=True)
class Ball:
    """Euclidean ball of the given radius (at most 1) around the origin."""

    radius: float = 1.0

    def __post_init__(self):
        if not 0 < self.radius <= 1.0:
            raise ValueError("radius must lie in (0, 1]")

    def project(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        norm = float(np.sqrt(v @ v))
        return v * (self.radius / norm) if norm > self.radius else v.copy()

    def contains(self, v, tol: float = 1e-12) -> bool:
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ v)) <= self.radius + tol


# ---------------------------------------------------------------------------
# Loss families


class LossFamily:
    """Convex losses ``l(w, z)`` with range ``[0, 1]`` over the unit ball.

    Subclasses set ``dim``, ``lipschitz``, ``smoothness`` (``inf`` when
    nonsmooth) and ``strong_convexity``. ``kernel_kind`` names the compiled PGD
    kernel that handles the family, if any.
    """

    dim: int = 1
    lipschitz: float = 1.0
    smoothness: float = math.inf
    strong_convexity: float = 0.0
    kernel_kind: int | None = None
    curvature: float = 0.0

    def value(self, w, z) -> float:
        raise NotImplementedError

    def grad(self, w, z) -> np.ndarray:
        raise NotImplementedError

    def values(self, w, Z: np.ndarray) -> np.ndarray:
        return np.array([self.value(w, z) for z in Z])

    def empirical_loss(self, w, s: Dataset) -> float:
        return float(np.mean(self.values(w, s.as_array())))

    def empirical_grad(self, w, X: np.ndarray) -> np.ndarray:
        return np.mean([self.grad(w, x) for x in X], axis=0)

    def population_loss(self, w, P: FiniteDistribution) -> float:
        raise UnsupportedLossError(f"{type(self).__name__} has no analytic population loss")

    def population_minimizer(self, P: FiniteDistribution, body: Ball) -> np.ndarray:
        raise UnsupportedLossError(f"{type(self).__name__} has no analytic population minimizer")


@dataclass(frozen=True)
class QuadraticLoss(LossFamily):
    """``(c/2) ||w - z||^2`` with ``c <= 1/2`` so the range is ``[0, 1]`` on the unit ball."""

    dim: int = 1
    curvature: float = 0.5

    def __post_init__(self):
        if not 0 < self.curvature <= 0.5:
            raise ValueError("curvature must lie in (0, 1/2]")

    kernel_kind = kernels.QUADRATIC

    @property
    def lipschitz(self):
        return 2.0 * self.curvature

    @property
    def smoothness(self):
        return self.curvature

    @property
    def strong_convexity(self):
        return self.curvature

    def value(self, w, z):
        d = _vec(w) - _vec(z)
        return 0.5 * self.curvature * float(d @ d)

    def grad(self, w, z):
        return self.curvature * (_vec(w) - _vec(z))

    def values(self, w, Z):
        D = np.asarray(Z, dtype=float).reshape(len(Z), -1) - _vec(w)
        return 0.5 * self.curvature * np.einsum("ij,ij->i", D, D)

    def empirical_grad(self, w, X):
        return self.curvature * (_vec(w) - X.mean(axis=0))

    def population_loss(self, w, P):
        Z = np.asarray(P.support, dtype=float).reshape(len(P), -1)
        return float(P.probs @ self.values(w, Z))

    def population_minimizer(self, P, body):
        return body.project(P.mean_point())


@dataclass(frozen=True)
class LinearLoss(LossFamily):
    """``(1 + <w, z>) / 2`` for ``||z|| <= 1``."""

    dim: int = 1

    kernel_kind = kernels.LINEAR
    lipschitz = 0.5
    smoothness = 0.0
    strong_convexity = 0.0

    def value(self, w, z):
        return 0.5 * (1.0 + float(_vec(w) @ _vec(z)))

    def grad(self, w, z):
        return 0.5 * _vec(z)

    def values(self, w, Z):
        return 0.5 * (1.0 + np.asarray(Z, dtype=float).reshape(len(Z), -1) @ _vec(w))

    def empirical_grad(self, w, X):
        return 0.5 * X.mean(axis=0)

    def population_loss(self, w, P):
        return 0.5 * (1.0 + float(_vec(w) @ P.mean_point()))

    def population_minimizer(self, P, body):
        mu = P.mean_point()
        norm = float(np.sqrt(mu @ mu))
        if norm == 0.0:
            return np.zeros_like(mu)
        return -body.radius * mu / norm


@dataclass(frozen=True)
class AbsoluteLoss(LossFamily):
    """One-dimensional ``|w - z| / 2``; nonsmooth."""

    dim: int = 1
    lipschitz = 0.5
    smoothness = math.inf

    def value(self, w, z):
        return 0.5 * abs(float(_vec(w)[0]) - float(_vec(z)[0]))

    def grad(self, w, z):
        return np.array([0.5 * np.sign(float(_vec(w)[0]) - float(_vec(z)[0]))])

    def population_loss(self, w, P):
        return P.expect(lambda z: self.value(w, z))

    def population_minimizer(self, P, body):
        # piecewise linear and convex: the minimum sits on a support point
        candidates = [body.project(_vec(z)) for z in P.support]
        return min(candidates, key=lambda v: self.population_loss(v, P))


class SmoothedLoss(LossFamily):
    """Moreau envelope of a one-dimensional loss, applied per sample."""

    def __init__(self, base: LossFamily, sigma: float):
        if base.dim != 1:
            raise ValueError("Moreau smoothing is shipped for one-dimensional losses only")
        self.base = base
        self.sigma = float(sigma)
        self.dim = 1
        self.lipschitz = base.lipschitz
        self.smoothness = self.sigma
        self.strong_convexity = 0.0

    def _env(self, z):
        return moreau_smooth(lambda v: self.base.value(v, z), self.sigma, lipschitz=self.base.lipschitz)

    def value(self, w, z):
        return self._env(z)(float(_vec(w)[0]))

    def grad(self, w, z):
        return np.array([self._env(z).grad(float(_vec(w)[0]))])


# ---------------------------------------------------------------------------
# Moreau smoothing


class MoreauEnvelope:
    """``f~(w) = min_v f(v) + (sigma/2)(w - v)^2`` for a convex 1-d ``f``.

    The minimiser (the proximal point) lies within ``lipschitz / sigma`` of
    ``w``; it is located by ternary search to ``tol``.
    """

    def __init__(self, f: Callable[[float], float], sigma: float, lipschitz: float = 1.0, tol: float = 1e-10):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.f = f
        self.sigma = float(sigma)
        self.lipschitz = float(lipschitz)
        self.tol = tol

    def _objective(self, w, v):
        return self.f(v) + 0.5 * self.sigma * (w - v) ** 2

    def prox(self, w: float) -> float:
        radius = self.lipschitz / self.sigma
        lo, hi = w - radius, w + radius
        # tighten well below tol so the envelope value is accurate to ~tol
        target = min(self.tol, 1e-12) * max(1.0, radius)
        while hi - lo > target:
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if self._objective(w, m1) <= self._objective(w, m2):
                hi = m2
            else:
                lo = m1
        return 0.5 * (lo + hi)

    def __call__(self, w: float) -> float:
        return self._objective(w, self.prox(w))

    def grad(self, w: float) -> float:
        return self.sigma * (w - self.prox(w))


def moreau_smooth(f: Callable[[float], float], sigma: float, *, lipschitz: float = 1.0, tol: float = 1e-10) -> MoreauEnvelope:
    """Smooth a convex Lipschitz 1-d function; the result is ``sigma``-smooth and
    within ``lipschitz**2 / (2 sigma)`` of ``f`` everywhere."""
    return MoreauEnvelope(f, sigma, lipschitz, tol)


# ---------------------------------------------------------------------------
# Rate schedules


@dataclass(frozen=True, eq=False)
class RateSchedule:
    """Sparse ``T x n`` matrix of step rates ``eta[t, i] >= 0`` in CSR layout."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    etas: np.ndarray

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        etas = np.ascontiguousarray(self.etas, dtype=float)
        if indptr.ndim != 1 or len(indptr) < 1 or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise ValueError("malformed indptr")
        if indptr[-1] != len(indices) or len(indices) != len(etas):
            raise ValueError("indptr, indices and etas disagree in length")
        if len(indices) and (indices.min() < 0 or indices.max() >= self.n):
            raise ValueError("sample index out of range")
        if np.any(etas < 0) or not np.all(np.isfinite(etas)):
            raise ValueError("rates must be finite and nonnegative")
        for name, arr in (("indptr", indptr), ("indices", indices), ("etas", etas)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_steps(cls, n: int, steps: Sequence[tuple[Sequence[int], Sequence[float]]]) -> "RateSchedule":
        indptr = [0]
        idx, eta = [], []
        for ii, ee in steps:
            ii = list(ii)
            ee = list(np.broadcast_to(np.asarray(ee, dtype=float), (len(ii),)))
            idx.extend(ii)
            eta.extend(ee)
            indptr.append(len(idx))
        return cls(n, np.array(indptr), np.array(idx, dtype=np.int64), np.array(eta, dtype=float))

    @classmethod
    def from_dense(cls, matrix) -> "RateSchedule":
        M = np.asarray(matrix, dtype=float)
        steps = [(np.nonzero(row)[0], row[np.nonzero(row)[0]]) for row in M]
        return cls.from_steps(M.shape[1], steps)

    @property
    def T(self) -> int:
        return len(self.indptr) - 1

    def to_dense(self) -> np.ndarray:
        M = np.zeros((self.T, self.n))
        steps = np.repeat(np.arange(self.T), np.diff(self.indptr))
        np.add.at(M, (steps, self.indices), self.etas)
        return M

    @property
    def per_step_l1(self) -> np.ndarray:
        steps = np.repeat(np.arange(self.T), np.diff(self.indptr))
        return np.bincount(steps, weights=self.etas, minlength=self.T)

    @property
    def column_sums(self) -> np.ndarray:
        return np.bincount(self.indices, weights=self.etas, minlength=self.n)

    @property
    def one_inf_norm(self) -> float:
        """``max_i sum_t eta[t, i]``, the per-sample total rate."""
        return float(self.column_sums.max()) if self.n else 0.0

    def rows(self):
        """Yield ``(t, i, eta)`` triples in step order."""
        for t in range(self.T):
            for j in range(self.indptr[t], self.indptr[t + 1]):
                yield t, int(self.indices[j]), float(self.etas[j])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "i", "eta"])
            writer.writerow(["#", self.n, self.T])
            for t, i, eta in self.rows():
                writer.writerow([t, i, f"{eta:.17g}"])

    @classmethod
    def read_csv(cls, path) -> "RateSchedule":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["t", "i", "eta"]:
                raise ValueError(f"{path}: unexpected header {header!r}")
            meta = next(reader)
            n, T = int(meta[1]), int(meta[2])
            triples = [(int(t), int(i), float(e)) for t, i, e in reader]
        counts = np.bincount([t for t, _, _ in triples], minlength=T) if triples else np.zeros(T, int)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return cls(n, indptr, [i for _, i, _ in triples], [e for _, _, e in triples])


SCHEDULE_KINDS = ("full_gd", "shuffle", "with_replacement")


def make_schedule(kind: str, n: int, T_or_passes: int, k: int = 1, eta: float = 0.1, seed: int = 0) -> RateSchedule:
    """Build a rate schedule.

    ``full_gd``: ``T`` steps with every ``eta[t, i] = eta / n``.
    ``shuffle``: ``T_or_passes`` passes, each a fresh uniform partition into
    batches of ``k`` (last batch may be short) at in-batch rate ``eta / k``.
    ``with_replacement``: ``T`` steps, each an independent uniform ``k``-subset
    at rate ``eta / k``.
    """
    if not 1 <= k <= n:
        raise ValueError(f"batch size must satisfy 1 <= k <= n, got k = {k}")
    if not eta > 0:
        raise ValueError("eta must be positive")
    if T_or_passes < 0:
        raise ValueError("number of steps/passes must be nonnegative")
    rng = np.random.default_rng(seed)
    if kind == "full_gd":
        T = T_or_passes
        indptr = np.arange(T + 1, dtype=np.int64) * n
        return RateSchedule(n, indptr, np.tile(np.arange(n), T), np.full(T * n, eta / n))
    if kind == "shuffle":
        starts = np.arange(0, n, k)
        perms = [rng.permutation(n) for _ in range(T_or_passes)]
        indices = np.concatenate(perms) if perms else np.zeros(0, np.int64)
        per_pass = np.append(starts, n)
        indptr = np.concatenate([[0]] + [p * n + per_pass[1:] for p in range(T_or_passes)])
        return RateSchedule(n, indptr, indices, np.full(len(indices), eta / k))
    if kind == "with_replacement":
        T = T_or_passes
        if k == 1:
            indices = rng.integers(0, n, size=T)
        else:
            indices = np.concatenate([rng.choice(n, size=k, replace=False) for _ in range(T)]) if T else np.zeros(0, np.int64)
        indptr = np.arange(T + 1, dtype=np.int64) * k
        return RateSchedule(n, indptr, indices, np.full(T * k, eta / k))
    raise ValueError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")


def replacement_count_tail(T: int, k: int, n: int, beta: float) -> int:
    """Smallest ``m`` with ``n * P[Binomial(T, k/n) >= m] <= beta``, capped at ``T``.

    With probability at least ``1 - beta`` no sample is drawn more than ``m``
    times in ``T`` independent batches of size ``k`` (union bound over samples).
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    counts = np.arange(T + 2)
    tail = stats.binom.sf(counts - 1, T, k / n)  # P[X >= m]
    ok = np.nonzero(n * tail <= beta)[0]
    m_star = int(ok[0]) if len(ok) else T + 1
    return min(m_star, T)


def replacement_rate_tail(T: int, k: int, n: int, eta: float, beta: float) -> float:
    """High-probability bound ``zeta = (eta / k) * m`` on ``||beta||_{1,inf}`` under
    sampling with replacement, ``m`` from :func:`replacement_count_tail`."""
    return (eta / k) * replacement_count_tail(T, k, n, beta)


# ---------------------------------------------------------------------------
# Solvers


@dataclass
class SolveResult:
    w: np.ndarray
    empirical_loss: float
    stability_certificate: float
    iterations: int
    method: str = ""
    certificate_high_prob: float | None = None
    schedule: RateSchedule | None = field(default=None, repr=False)


def _regularized_closed_form(F: QuadraticLoss, X: np.ndarray, lam: float, body: Ball) -> np.ndarray:
    # isotropic objective: project the unconstrained minimiser
    c = F.curvature
    return body.project(c * X.mean(axis=0) / (c + lam))


def reg_erm(
    F: LossFamily,
    s: Dataset,
    lam: float,
    tol: float = 1e-9,
    *,
    body: Ball = Ball(),
    max_iter: int = 10**6,
) -> SolveResult:
    """Minimise ``F_s(w) + (lam/2) ||w||^2`` over the body.

    The quadratic family is solved in closed form; other smooth families use
    accelerated projected gradient until the gradient mapping is below ``tol``.
    """
    mu = lam + F.strong_convexity
    if lam < 0 or not mu > 0:
        raise ValueError("need lam > 0 or a strongly convex loss family")
    X = s.as_array()
    n = len(X)
    certificate = 4.0 * F.lipschitz**2 / (mu * n)
    if isinstance(F, QuadraticLoss):
        w = _regularized_closed_form(F, X, lam, body)
        return SolveResult(w, F.empirical_loss(w, s), certificate, 0, "closed_form")
    if not math.isfinite(F.smoothness):
        raise ValueError("reg_erm needs a smooth loss; smooth it with SmoothedLoss first")

    Lf = F.smoothness + lam
    step = 1.0 / Lf
    kappa = Lf / mu
    momentum = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)

    def grad(w):
        return F.empirical_grad(w, X) + lam * w

    w = np.zeros(X.shape[1])
    y = w.copy()
    gmap = math.inf
    for it in range(1, max_iter + 1):
        w_next = body.project(y - step * grad(y))
        y = w_next + momentum * (w_next - w)
        w = w_next
        gmap = float(np.linalg.norm(Lf * (w - body.project(w - step * grad(w)))))
        if gmap <= tol:
            return SolveResult(w, F.empirical_loss(w, s), certificate, it, "accelerated_pg")
    raise ConvergenceError(
        f"reg_erm did not converge in {max_iter} iterations: gradient mapping {gmap:.3e} > tol {tol:.1e}"
    )


def check_rates(F: LossFamily, schedule: RateSchedule) -> None:
    """Raise unless every step satisfies ``||beta_t||_1 <= 2 / sigma``."""
    sigma = F.smoothness
    if not math.isfinite(sigma):
        raise ValueError("PGD stability needs a smooth loss (finite sigma)")
    if sigma <= 0:
        return
    limit = 2.0 / sigma
    l1 = schedule.per_step_l1
    bad = np.nonzero(l1 > limit * (1 + 1e-12))[0]
    if len(bad):
        t = int(bad[0])
        raise ValueError(f"step {t}: ||beta_t||_1 = {l1[t]:.6g} exceeds 2/sigma = {limit:.6g}")


def pgd(
    F: LossFamily,
    s: Dataset,
    schedule: RateSchedule,
    w0=None,
    *,
    body: Ball = Ball(),
) -> SolveResult:
    """Projected gradient descent ``w <- proj(w - sum_i eta[t, i] grad l(w, s_i))``."""
    X = s.as_array()
    if schedule.n != len(X):
        raise ValueError(f"schedule is for n = {schedule.n}, dataset has n = {len(X)}")
    check_rates(F, schedule)
    w = np.zeros(X.shape[1]) if w0 is None else body.project(_vec(w0))
    if F.kernel_kind is not None and isinstance(body, Ball):
        w = kernels.pgd_run(
            F.kernel_kind, X, w, schedule.indptr, schedule.indices, schedule.etas, body.radius, F.curvature
        )
    else:
        for t in range(schedule.T):
            a, b = schedule.indptr[t], schedule.indptr[t + 1]
            g = np.zeros_like(w)
            for i, eta in zip(schedule.indices[a:b], schedule.etas[a:b]):
                g += eta * F.grad(w, X[i])
            w = body.project(w - g)
    certificate = 2.0 * F.lipschitz**2 * schedule.one_inf_norm
    return SolveResult(w, F.empirical_loss(w, s), certificate, schedule.T, "pgd", schedule=schedule)


@dataclass(frozen=True)
class PSGDParams:
    steps: int  # steps T, or passes for "shuffle"
    k: int = 1
    eta: float = 0.1
    beta: float = 0.01  # failure probability for the high-probability certificate


def high_prob_rate(kind: str, n: int, params: PSGDParams) -> float:
    """Bound on ``||beta||_{1,inf}`` holding with probability ``1 - beta``."""
    if kind == "full_gd":
        return params.steps * params.eta / n
    if kind == "shuffle":
        return params.steps * params.eta / params.k
    if kind == "with_replacement":
        return replacement_rate_tail(params.steps, params.k, n, params.eta, params.beta)
    raise ValueError(f"unknown schedule kind {kind!r}")


def psgd(
    F: LossFamily,
    s: Dataset,
    kind: str,
    params: PSGDParams,
    seed: int,
    w0=None,
    *,
    body: Ball = Ball(),
) -> SolveResult:
    """Draw a schedule and run PGD on it.

    Certificates: ``stability_certificate`` for the realised schedule and
    ``certificate_high_prob`` from the ``1 - beta`` rate bound.
    """
    schedule = make_schedule(kind, s.n, params.steps, params.k, params.eta, seed)
    result = pgd(F, s, schedule, w0, body=body)
    result.method = f"psgd:{kind}"
    result.certificate_high_prob = 2.0 * F.lipschitz**2 * high_prob_rate(kind, s.n, params)
    return result


def smooth_gd_schedule(F: LossFamily, n: int) -> RateSchedule:
    """Full GD with ``eta = 1/sigma`` and ``T = floor(sigma sqrt(n) / ln n)``."""
    sigma = F.smoothness
    if not (math.isfinite(sigma) and sigma > 0):
        raise ValueError("smooth-gd preset needs finite positive smoothness")
    T = int(math.floor(sigma * math.sqrt(n) / math.log(n)))
    return make_schedule("full_gd", n, T, 1, 1.0 / sigma)


def resample_sgd_params(n: int) -> PSGDParams:
    """``k = 1``, ``T = n`` and ``eta = 1/sqrt(T)``."""
    return PSGDParams(steps=n, k=1, eta=1.0 / math.sqrt(n))


PRESETS = ("smooth-gd", "resample-sgd")


def excess_loss(F: LossFamily, P: FiniteDistribution, w, *, body: Ball = Ball()) -> float:
    """``F_P(w) - min_{w' in body} F_P(w')`` from the family's analytic population loss."""
    w_star = F.population_minimizer(P, body)
    gap = F.population_loss(_vec(w), P) - F.population_loss(w_star, P)
    return max(gap, 0.0)


def gradient_step(F: LossFamily, w, z, eta: float) -> np.ndarray:
    return _vec(w) - eta * F.grad(w, z)


# ---------------------------------------------------------------------------
# Data-dependent views of the solvers


def solver_loss_function(
    F: LossFamily,
    solve: Callable[[Dataset], SolveResult],
    certificate: float,
    name: str = "",
) -> DataDependentFunction:
    """``M(s, z) = l(w_s, z)`` for the solver's output ``w_s``; solves are memoised."""
    cache: dict = {}

    def evaluator(s, z):
        w = cache.get(s)
        if w is None:
            w = cache.setdefault(s, solve(s).w)
        return F.value(w, z)

    return DataDependentFunction(evaluator, 0.0, 1.0, certificate, name=name)


def erm_loss_function(F: LossFamily, lam: float, n: int, tol: float = 1e-9) -> DataDependentFunction:
    cert = 4.0 * F.lipschitz**2 / ((lam + F.strong_convexity) * n)
    return solver_loss_function(F, lambda s: reg_erm(F, s, lam, tol), cert, name=f"erm(lam={lam:g})")


def pgd_loss_function(F: LossFamily, schedule: RateSchedule, w0=None) -> DataDependentFunction:
    cert = 2.0 * F.lipschitz**2 * schedule.one_inf_norm
    return solver_loss_function(F, lambda s: pgd(F, s, schedule, w0), cert, name="pgd")
