"""Monte Carlo experiments: estimation-error tails, excess loss, audits, reports.

Every trial draws from its own stream ``trial_rng(seed, j, n)``, so results
are identical whatever the number of workers.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import convexopt as cx
from .bounds import BoundParams, be02_bound, fv18_bound, main_bound
from .core import (
    CERTIFICATE_SLACK,
    DataDependentFunction,
    Dataset,
    FiniteDistribution,
    exhaustive_stability,
    trial_rng,
)
from .dp_prediction import exp_mech_probs
from .reduction import ClampSpec, adaptive_clamp, find_shift, tail_budget


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration

SOLVERS = ("reg-erm", "smooth-gd", "resample-sgd")
PROBLEMS = ("mean", "constant", "dp-majority")


@dataclass
class ExperimentConfig:
    problem: str = "mean"
    solver: str = "reg-erm"
    n: list = field(default_factory=lambda: [100, 400, 1600, 6400])
    trials: int = 2000
    delta: list = field(default_factory=lambda: [0.1, 0.05, 0.01])
    seed: int = 0
    lam: float | None = None
    epsilon: float = 0.1
    workers: int = 1
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        self.n = [int(v) for v in self.n]
        self.delta = [float(v) for v in self.delta]
        self.trials = int(self.trials)
        self.seed = int(self.seed)
        self.workers = int(self.workers)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.n or any(v < 1 for v in self.n):
            raise ConfigError("n must be a nonempty list of positive integers")
        if any(not 0 < d < 1 for d in self.delta):
            raise ConfigError("every delta must lie in (0, 1)")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Problems


MEAN_SUPPORT = (-0.8, -0.3, 0.1, 0.5, 0.9)
MEAN_PROBS = (0.15, 0.2, 0.25, 0.25, 0.15)


def default_lambda(n: int) -> float:
    return math.log(n) / math.sqrt(n)


class MeanEstimationProblem:
    """Quadratic loss ``(1/4)(w - z)^2`` on a five-point distribution in ``[-1, 1]``."""

    range_width = 1.0

    def __init__(self, solver: str = "reg-erm", lam: float | None = None,
                 support=MEAN_SUPPORT, probs=MEAN_PROBS):
        if solver not in SOLVERS:
            raise ConfigError(f"unknown solver {solver!r}")
        self.solver = solver
        self.lam = lam
        self.loss = cx.QuadraticLoss()
        self.P = FiniteDistribution(support, probs)
        self.points = np.asarray(support, dtype=float)

    def lam_for(self, n: int) -> float:
        return default_lambda(n) if self.lam is None else self.lam

    def gamma(self, n: int) -> float:
        F = self.loss
        if self.solver == "reg-erm":
            return 4.0 * F.lipschitz**2 / ((self.lam_for(n) + F.strong_convexity) * n)
        if self.solver == "smooth-gd":
            return 2.0 * F.lipschitz**2 * cx.smooth_gd_schedule(F, n).one_inf_norm
        p = cx.resample_sgd_params(n)
        return 2.0 * F.lipschitz**2 * cx.high_prob_rate("with_replacement", n, p)

    def solve(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        s = Dataset(X.tolist())
        n = len(X)
        if self.solver == "reg-erm":
            return cx.reg_erm(self.loss, s, self.lam_for(n)).w
        if self.solver == "smooth-gd":
            return cx.pgd(self.loss, s, cx.smooth_gd_schedule(self.loss, n)).w
        seed = int(rng.integers(2**63))
        return cx.psgd(self.loss, s, "with_replacement", cx.resample_sgd_params(n), seed).w

    def _draw(self, n, rng):
        X = self.points[self.P.sample_indices(rng, n)]
        return X, self.solve(X, rng)

    def estimation_error(self, n: int, rng: np.random.Generator) -> float:
        X, w = self._draw(n, rng)
        empirical = float(np.mean(self.loss.values(w, X)))
        true = self.loss.population_loss(w, self.P)
        return abs(true - empirical)

    def excess(self, n: int, rng: np.random.Generator) -> float:
        _, w = self._draw(n, rng)
        return cx.excess_loss(self.loss, self.P, w)


class ConstantProblem:
    """``M == c``: zero stability and zero estimation error."""

    range_width = 1.0

    def __init__(self, c: float = 0.5):
        self.c = c

    def gamma(self, n):
        return 0.0

    def estimation_error(self, n, rng):
        rng.random(n)
        return abs(self.c - self.c)


class DPMajorityProblem:
    """0-1 expected loss of the private majority-label predictor; labels ~ Bernoulli(p)."""

    range_width = 1.0

    def __init__(self, epsilon: float = 0.1, p: float = 0.3):
        self.epsilon = epsilon
        self.p = p

    def gamma(self, n):
        return math.expm1(self.epsilon)

    def estimation_error(self, n, rng):
        c1 = int(rng.binomial(n, self.p))
        c0 = n - c1
        p1 = exp_mech_probs(c0, c1, self.epsilon)[1]
        empirical = (c1 * (1.0 - p1) + c0 * p1) / n
        true = self.p * (1.0 - p1) + (1.0 - self.p) * p1
        return abs(true - empirical)


def make_problem(cfg: ExperimentConfig):
    if cfg.problem == "mean":
        return MeanEstimationProblem(cfg.solver, cfg.lam)
    if cfg.problem == "constant":
        return ConstantProblem()
    if cfg.problem == "dp-majority":
        return DPMajorityProblem(cfg.epsilon)
    raise ConfigError(f"unknown problem {cfg.problem!r}")


# ---------------------------------------------------------------------------
# Trial execution


def _run_chunk(args):
    problem, metric, n, seed, start, stop = args
    fn = getattr(problem, metric)
    return np.array([fn(n, trial_rng(seed, j, n)) for j in range(start, stop)])


def run_trials(problem, metric: str, n: int, trials: int, seed: int, workers: int = 1) -> np.ndarray:
    """Evaluate ``problem.<metric>(n, rng_j)`` for ``j < trials``, in trial order."""
    if workers <= 1 or trials < 2:
        return _run_chunk((problem, metric, n, seed, 0, trials))
    bounds = np.linspace(0, trials, min(workers, trials) + 1).astype(int)
    jobs = [(problem, metric, n, seed, a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, jobs))
    return np.concatenate(parts)


def tail_quantile(values: Sequence[float], delta: float) -> float:
    """Order statistic at rank ``ceil((1 - delta) m)`` (1-based) of ``m`` values."""
    vals = np.sort(np.asarray(values, dtype=float))
    m = len(vals)
    # ceil((1 - delta) m) == m - floor(delta m); the guard absorbs rounding in delta * m
    rank = m - math.floor(delta * m + 1e-9)
    return float(vals[max(rank, 1) - 1])


def binomial_se(p: float, m: int) -> float:
    return math.sqrt(p * (1.0 - p) / m)


# ---------------------------------------------------------------------------
# Reports

TAIL_COLUMNS = ("n", "delta", "quantile", "be02", "fv18", "main", "main_vacuous", "trials", "seed")
EXCESS_COLUMNS = ("n", "delta", "quantile", "reference", "c_fit", "trials", "seed", "solver")


@dataclass
class TailRow:
    n: int
    delta: float
    quantile: float
    be02: float
    fv18: float
    main: float
    main_vacuous: bool
    trials: int
    seed: int
    # not part of the emitted schema
    gamma: float = math.nan
    main_valid: bool = False
    exceed_freq: float = math.nan
    exceed_se: float = math.nan


@dataclass
class TailReport:
    rows: list = field(default_factory=list)
    columns: tuple = TAIL_COLUMNS
    kind: str = "tail"

    def records(self) -> list[dict]:
        return [{c: getattr(r, c) for c in self.columns} for r in self.rows]


@dataclass
class ExcessRow:
    n: int
    delta: float
    quantile: float
    reference: float
    c_fit: float
    trials: int
    seed: int
    solver: str


@dataclass
class ExcessReport:
    rows: list = field(default_factory=list)
    columns: tuple = EXCESS_COLUMNS
    kind: str = "excess"

    def records(self) -> list[dict]:
        return [{c: getattr(r, c) for c in self.columns} for r in self.rows]


def run_tail_experiment(cfg: ExperimentConfig, problem=None) -> TailReport:
    """Empirical ``(1 - delta)``-quantiles of the estimation error, next to the bounds."""
    problem = problem or make_problem(cfg)
    if not hasattr(problem, "estimation_error"):
        raise ConfigError(f"problem {cfg.problem!r} has no analytic estimation error")
    report = TailReport()
    for n in cfg.n:
        errors = run_trials(problem, "estimation_error", n, cfg.trials, cfg.seed, cfg.workers)
        gamma = problem.gamma(n)
        for delta in sorted(cfg.delta, reverse=True):
            p = BoundParams(n=n, delta=delta, gamma=gamma, R=problem.range_width)
            main = main_bound(p)
            freq = float(np.mean(errors >= main.value))
            report.rows.append(
                TailRow(
                    n=n,
                    delta=delta,
                    quantile=tail_quantile(errors, delta),
                    be02=be02_bound(p).value,
                    fv18=fv18_bound(p).value,
                    main=main.value,
                    main_vacuous=main.vacuous,
                    trials=cfg.trials,
                    seed=cfg.seed,
                    gamma=gamma,
                    main_valid=main.valid,
                    exceed_freq=freq,
                    exceed_se=binomial_se(delta, cfg.trials),
                )
            )
    return report


def excess_reference(n: int, delta: float) -> float:
    return math.log(n / delta) / math.sqrt(n)


def run_excess_experiment(cfg: ExperimentConfig, problem=None) -> ExcessReport:
    """Excess-loss quantiles against ``c log(n/delta) / sqrt(n)`` with least-squares ``c``."""
    problem = problem or make_problem(cfg)
    if not hasattr(problem, "excess"):
        raise ConfigError(f"problem {cfg.problem!r} has no analytic excess loss")
    pending = []
    for n in cfg.n:
        values = run_trials(problem, "excess", n, cfg.trials, cfg.seed, cfg.workers)
        for delta in sorted(cfg.delta, reverse=True):
            pending.append((n, delta, tail_quantile(values, delta)))
    refs = np.array([excess_reference(n, d) for n, d, _ in pending])
    qs = np.array([q for _, _, q in pending])
    c_fit = float(refs @ qs / (refs @ refs)) if len(refs) else math.nan
    report = ExcessReport()
    for (n, delta, q), r in zip(pending, refs):
        report.rows.append(ExcessRow(n, delta, q, c_fit * r, c_fit, cfg.trials, cfg.seed, cfg.solver))
    return report


def fit_power_law(ns: Sequence[float], values: Sequence[float]) -> float:
    """Exponent ``alpha`` of a least-squares fit ``values ~ C n^-alpha`` on log-log axes."""
    slope, _ = np.polyfit(np.log(ns), np.log(values), 1)
    return float(-slope)


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def emit(report, path, fmt: str = "csv") -> None:
    """Write a report as CSV or JSON with a fixed column order."""
    records = report.records()
    try:
        with open(path, "w", newline="") as fh:
            if fmt == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(report.columns)
                for rec in records:
                    writer.writerow([_format_cell(rec[c]) for c in report.columns])
            elif fmt == "json":
                doc = {"kind": report.kind, "columns": list(report.columns), "rows": records}
                json.dump(doc, fh, indent=2, default=_json_default)
                fh.write("\n")
            else:
                raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"not JSON serialisable: {v!r}")


def _parse_cell(text: str, like):
    if like is bool:
        return text == "true"
    if like is int:
        return int(text)
    if like is float:
        return float(text)
    return text


def load_report(path, fmt: str = "csv"):
    """Read back a report written by :func:`emit`."""
    with open(path, newline="") as fh:
        if fmt == "json":
            doc = json.load(fh)
            kind, rows = doc["kind"], doc["rows"]
        else:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            kind = "tail" if header == TAIL_COLUMNS else "excess" if header == EXCESS_COLUMNS else None
            if kind is None:
                raise ValueError(f"{path}: unrecognised header {header!r}")
            row_cls = TailRow if kind == "tail" else ExcessRow
            types = {f.name: f.type for f in dataclasses.fields(row_cls)}
            casts = {"int": int, "float": float, "bool": bool, "str": str}
            rows = [
                {c: _parse_cell(v, casts[types[c]]) for c, v in zip(header, line)} for line in reader
            ]
    if kind == "tail":
        return TailReport([TailRow(**r) for r in rows])
    return ExcessReport([ExcessRow(**r) for r in rows])


# ---------------------------------------------------------------------------
# Property runs used by the CLI and the acceptance suite


def _table_function(table: dict, lo: float, hi: float, gamma: float, unbiased: bool, name: str):
    return DataDependentFunction(lambda s, z: table[(s.elements, z)], lo, hi, gamma, unbiased, name)


def random_clamp_instance(rng: np.random.Generator):
    """Random tiny unbiased instance for the adaptive-clamp checks.

    Returns ``(K, P, n, w)``: ``K`` tabulated over every dataset of ``support^n``
    with its exact stability as certificate, and a window ``w`` small enough
    that clamping bites.
    """
    n = int(rng.integers(2, 4))
    m = int(rng.integers(2, 4))
    support = tuple(range(m))
    probs = rng.dirichlet(np.ones(m))
    probs = probs / probs.sum()
    P = FiniteDistribution(support, probs)
    h = rng.uniform(-1.0, 1.0, size=(m, m))
    scale = rng.uniform(0.5, 3.0)
    raw = {}
    for s, _ in P.enumerate_datasets(n):
        g = np.array([math.tanh(scale * sum(h[si, z] for si in s.elements)) for z in support])
        g = g - probs @ g
        for z in support:
            raw[(s.elements, z)] = float(g[z])
    lo, hi = min(raw.values()), max(raw.values())
    K0 = _table_function(raw, lo, hi, 0.0, True, "K")
    gamma = exhaustive_stability(K0, P, n)
    K = _table_function(raw, lo, hi, gamma, True, "K")
    w = float(rng.uniform(0.2, 0.9) * max(abs(lo), abs(hi)))
    return K, P, n, w


@dataclass
class ClampSuiteSummary:
    instances: int
    max_abs_mean: float
    max_shift_ratio: float
    max_stability_excess: float
    max_budget_excess: float
    failures: int

    @property
    def ok(self) -> bool:
        return self.failures == 0


def clamp_suite(instances: int = 200, seed: int = 0) -> ClampSuiteSummary:
    """Check zero mean, shift range, stability and clamp-error budget on random instances."""
    worst_mean = worst_shift = 0.0
    worst_stab = worst_budget = -math.inf
    failures = 0
    for j in range(instances):
        K, P, n, w = random_clamp_instance(trial_rng(seed, j))
        res = adaptive_clamp(K, P, ClampSpec(w), n)
        Kt = res.clamped
        inst_ok = True
        for s, _ in P.enumerate_datasets(n):
            b = res.shift(s)
            mean = abs(P.expect(lambda z: Kt(s, z)))
            worst_mean = max(worst_mean, mean)
            worst_shift = max(worst_shift, abs(b) / w)
            inst_ok &= mean <= 1e-9 and abs(b) <= w
        stab_excess = exhaustive_stability(Kt, P, n) - K.stability
        beta = max(tail_budget(K, P, n, w))
        budget_excess = res.clamp_error_mean.value - 4.0 * beta
        worst_stab = max(worst_stab, stab_excess)
        worst_budget = max(worst_budget, budget_excess)
        inst_ok &= stab_excess <= CERTIFICATE_SLACK and budget_excess <= 1e-9
        failures += not inst_ok
    return ClampSuiteSummary(instances, worst_mean, worst_shift, worst_stab, worst_budget, failures)


def worked_clamp_instance():
    """``K = 2`` w.p. 1/4 and ``-2/3`` w.p. 3/4 with ``w = 1``: shift and clamped mean."""
    P = FiniteDistribution(("a", "b"), [0.25, 0.75])
    K = DataDependentFunction(lambda s, z: 2.0 if z == "a" else -2.0 / 3.0, -1.0, 2.0, 0.0, True, "two-point")
    s = Dataset(("a",))
    b = find_shift(K, s, P, ClampSpec(1.0))
    res = adaptive_clamp(K, P, ClampSpec(1.0))
    mean = P.expect(lambda z: res.clamped(s, z))
    return b, mean


@dataclass
class AuditRow:
    name: str
    declared: float
    observed: float

    @property
    def ok(self) -> bool:
        return self.observed <= self.declared + 1e-7


def neighbor_audit(M_solve, loss_value, P: FiniteDistribution, n: int, pairs: int, seed: int):
    """Max over random neighbour pairs of ``sup_z |l(w_s, z) - l(w_s', z)|``."""
    worst = 0.0
    for j in range(pairs):
        rng = trial_rng(seed, j)
        s = P.sample(rng, n)
        i = int(rng.integers(n))
        s2 = s.replace(i, P.support[int(P.sample_indices(rng, None))])
        w1, w2 = M_solve(s), M_solve(s2)
        worst = max(worst, max(abs(loss_value(w1, z) - loss_value(w2, z)) for z in P.support))
    return worst


def stability_audits(n: int = 50, pairs: int = 1000, seed: int = 0, lam: float = 0.1) -> list[AuditRow]:
    """Neighbour-pair audits of the shipped solvers and the DP expected loss."""
    from .dp_prediction import DPPredictor, expected_loss_function
    from .core import audit_stability

    rows = []
    F = cx.QuadraticLoss()
    P = FiniteDistribution(MEAN_SUPPORT, MEAN_PROBS)
    erm_cert = 4.0 * F.lipschitz**2 / (lam * n)
    observed = neighbor_audit(lambda s: cx.reg_erm(F, s, lam).w, F.value, P, n, pairs, seed)
    rows.append(AuditRow(f"reg-erm lam={lam:g}", erm_cert, observed))

    T, eta = 20, 1.0
    schedule = cx.make_schedule("full_gd", n, T, 1, eta)
    observed = neighbor_audit(lambda s: cx.pgd(F, s, schedule).w, F.value, P, n, pairs, seed + 1)
    rows.append(AuditRow(f"full-gd T={T} eta={eta:g}", 2.0 * F.lipschitz**2 * T * eta / n, observed))

    for eps in (0.1, 1.0):
        M = expected_loss_function(DPPredictor(eps))
        Pl = FiniteDistribution(((0, 0), (0, 1)), [0.6, 0.4])
        observed = audit_stability(M, Pl, n, min(pairs, 500), seed + 2, raise_on_violation=False)
        rows.append(AuditRow(f"dp eps={eps:g}", M.stability, observed))
    return rows


def cpu_workers() -> int:
    return os.cpu_count() or 1
