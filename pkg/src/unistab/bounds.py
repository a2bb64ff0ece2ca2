"""Closed-form tail and moment bounds for uniformly stable functions.

Conventions: ``R`` is the range scale, ``gamma`` the stability certificate and
``delta`` the tail probability. Bounds on the estimation error of a function
with range ``[0, R]`` (``be02``, ``fv18``, ``main``) treat ``R`` as the width;
bounds on ``D_delta(n, R, gamma)`` (``thm_large``, ``thm_small``, ``inductive``)
are for unbiased functions with range ``[-R, R]``. Every bound is homogeneous:
scaling ``R`` and ``gamma`` by ``alpha`` scales the value by ``alpha``.

Logarithms are natural except where ``log2`` is written.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence


@dataclass(frozen=True)
class BoundParams:
    n: int
    delta: float
    gamma: float = 0.0
    R: float = 1.0
    c0: float = 1.0
    c1: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        for name in ("n", "delta", "gamma", "R", "c0", "c1", "c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def scaled(self, alpha: float) -> "BoundParams":
        """Same problem with range and stability multiplied by ``alpha``."""
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        return replace(self, R=alpha * self.R, gamma=alpha * self.gamma)


@dataclass(frozen=True)
class BoundValue:
    value: float
    valid: bool
    theorem_id: str
    range_width: float = field(default=1.0, repr=False)

    @property
    def vacuous(self) -> bool:
        """True when the bound exceeds the width of the function's range."""
        return self.value >= self.range_width

    def __float__(self) -> float:
        return float(self.value)


def mcdiarmid_tail(n: int, gamma: float, t: float) -> float:
    """``P[f(s) >= E f + t] <= exp(-2 t^2 / (n gamma^2))`` for sensitivity ``gamma``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if t == 0:
        return 1.0
    if gamma == 0:
        return 0.0
    return min(1.0, math.exp(-2.0 * t * t / (n * gamma * gamma)))


def be02_bound(p: BoundParams) -> BoundValue:
    """Classical bound ``c0 * (gamma sqrt(n) + R / sqrt(n)) * sqrt(ln(1/delta))``."""
    rn = math.sqrt(p.n)
    value = p.c0 * (p.gamma * rn + p.R / rn) * math.sqrt(math.log(1.0 / p.delta))
    return BoundValue(value, True, "be02", p.R)


def fv18_bound(p: BoundParams) -> BoundValue:
    """``c1 * (sqrt(gamma R) + R / sqrt(n)) * sqrt(ln(1/delta))``."""
    value = p.c1 * (math.sqrt(p.gamma * p.R) + p.R / math.sqrt(p.n)) * math.sqrt(
        math.log(1.0 / p.delta)
    )
    return BoundValue(value, True, "fv18", p.R)


def _high_prob_ok(p: BoundParams) -> bool:
    return p.n >= 4 and p.delta <= 1.0 / math.e


def main_bound(p: BoundParams) -> BoundValue:
    """Explicit estimation-error bound for a ``gamma``-stable function with range ``[0, R]``.

    ``32 gamma ln(5 n^3 / delta) log2(n) + 2 R sqrt(ln(4/delta) / n)``, holding
    with probability ``1 - delta``. Needs ``n >= 4`` and ``delta <= 1/e``.
    """
    n, d = p.n, p.delta
    value = 32.0 * p.gamma * math.log(5.0 * n**3 / d) * math.log2(n) + 2.0 * p.R * math.sqrt(
        math.log(4.0 / d) / n
    )
    return BoundValue(value, _high_prob_ok(p), "main", p.R)


def gamma_threshold(n: int, delta: float, R: float = 1.0) -> float:
    """Boundary ``R / (4 sqrt(n ln(n/delta)))`` between the large- and small-gamma regimes."""
    return R / (4.0 * math.sqrt(n * math.log(n / delta)))


def thm_large_gamma_bound(p: BoundParams) -> BoundValue:
    """``D_delta(n, R, gamma) <= 16 gamma ln(n^3/delta) log2(n)`` for gamma above the threshold."""
    n, d = p.n, p.delta
    valid = _high_prob_ok(p) and p.gamma >= gamma_threshold(n, d, p.R)
    value = 16.0 * p.gamma * math.log(n**3 / d) * math.log2(n)
    return BoundValue(value, valid, "thm_large", 2.0 * p.R)


def thm_small_gamma_bound(p: BoundParams) -> BoundValue:
    """Small-gamma companion: ``16 gamma ln(4n^3/delta) log2 n + 2 R sqrt(ln(4/delta)/n)``."""
    n, d = p.n, p.delta
    valid = _high_prob_ok(p) and p.gamma < gamma_threshold(n, d, p.R)
    value = 16.0 * p.gamma * math.log(4.0 * n**3 / d) * math.log2(n) + 2.0 * p.R * math.sqrt(
        math.log(4.0 / d) / n
    )
    return BoundValue(value, valid, "thm_small", 2.0 * p.R)


def inductive_bound(a: int, delta: float) -> BoundValue:
    """Bound at ``n = 4**a``, ``gamma = 1/sqrt(n)``, ``R = 8 sqrt(ln(n/delta))``.

    Value ``(8/sqrt(n)) ln(n^2/delta) log2(n)``. ``valid`` additionally records
    whether the trivial bound ``R`` covers the base case.
    """
    if a < 1:
        raise ValueError("a must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    n = 4**a
    value = 8.0 / math.sqrt(n) * math.log(n * n / delta) * math.log2(n)
    R = 8.0 * math.sqrt(math.log(n / delta))
    valid = delta <= 1.0 / math.e
    if a == 1:
        valid = valid and R <= value
    return BoundValue(value, valid, "inductive", 2.0 * R)


def scale_bound(value: float, alpha: float) -> float:
    """Convert ``D_delta(n, alpha R, alpha gamma)`` into ``D_delta(n, R, gamma)``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return value / alpha


def moment_bounds(gamma: float, n: int) -> tuple[float, float]:
    """First and second moment bounds ``(gamma + 1/sqrt(n), gamma^2 + 1/n)`` with unit constants."""
    return gamma + 1.0 / math.sqrt(n), gamma * gamma + 1.0 / n


def parse_gamma_rule(rule: str):
    """Turn ``fixed:v``, ``inv_sqrt_n`` or ``inv_n`` into a callable ``n -> gamma``."""
    if rule == "inv_sqrt_n":
        return lambda n: 1.0 / math.sqrt(n)
    if rule == "inv_n":
        return lambda n: 1.0 / n
    if rule.startswith("fixed:"):
        v = float(rule.split(":", 1)[1])
        if v < 0:
            raise ValueError("fixed gamma must be nonnegative")
        return lambda n: v
    raise ValueError(f"unknown gamma rule {rule!r}")


TABLE_COLUMNS = (
    "n",
    "gamma",
    "delta",
    "be02",
    "fv18",
    "main",
    "thm_large",
    "thm_large_valid",
    "thm_small",
    "thm_small_valid",
)


def bound_table(
    n_list: Iterable[int], gamma_rule: str, delta: float, R: float = 1.0
) -> list[dict]:
    """One record per ``n`` comparing the bounds under a stability rule."""
    rule = parse_gamma_rule(gamma_rule)
    rows = []
    for n in n_list:
        p = BoundParams(n=int(n), delta=delta, gamma=rule(n), R=R)
        large = thm_large_gamma_bound(p)
        small = thm_small_gamma_bound(p)
        rows.append(
            {
                "n": p.n,
                "gamma": p.gamma,
                "delta": p.delta,
                "be02": be02_bound(p).value,
                "fv18": fv18_bound(p).value,
                "main": main_bound(p).value,
                "thm_large": large.value,
                "thm_large_valid": large.valid,
                "thm_small": small.value,
                "thm_small_valid": small.valid,
            }
        )
    return rows


def table_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for row in rows:
        out = []
        for col in TABLE_COLUMNS:
            v = row[col]
            if isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, float):
                out.append(f"{v:.17g}")
            else:
                out.append(str(v))
        writer.writerow(out)
    return buf.getvalue()
