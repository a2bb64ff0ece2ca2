"""Differentially private prediction and the stability of its expected loss.

The shipped mechanism is the exponential mechanism over label counts with
utility ``c_y`` (sensitivity 1). It ignores the query ``x``: a dataset of
labeled points ``(x, y)`` maps to a distribution over labels ``{0, 1}``.
Neighbouring datasets change the output probabilities by a factor of at most
``e^eps``, so the expected loss ``E_K[l(K(s, x), y)]`` of any loss with range
``[0, 1]`` is ``(e^eps - 1)``-uniformly stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bounds import BoundParams, main_bound
from .core import DataDependentFunction, Dataset

LABELS = (0, 1)


def _label(point) -> int:
    y = point[1] if isinstance(point, tuple) else point
    if y not in LABELS:
        raise ValueError(f"labels must be 0 or 1, got {y!r}")
    return int(y)


def label_counts(s: Dataset) -> tuple[int, int]:
    ones = sum(_label(p) for p in s)
    return s.n - ones, ones


def exp_mech_probs(c0: int, c1: int, epsilon: float) -> np.ndarray:
    """``P[y] proportional to exp(eps * c_y / 2)`` for counts ``(c0, c1)``."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    # logistic form is stable for large counts
    p1 = 1.0 / (1.0 + math.exp(-0.5 * epsilon * (c1 - c0)))
    return np.array([1.0 - p1, p1])


def exp_mech_majority(s: Dataset, epsilon: float) -> np.ndarray:
    """Output distribution ``[P(0), P(1)]`` of the private majority-label mechanism."""
    c0, c1 = label_counts(s)
    return exp_mech_probs(c0, c1, epsilon)


@dataclass(frozen=True)
class DPPredictor:
    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    def mechanism(self, s: Dataset, x=None) -> np.ndarray:
        return exp_mech_majority(s, self.epsilon)

    @property
    def stability(self) -> float:
        return math.expm1(self.epsilon)


def zero_one_loss(pred: int, y: int) -> float:
    return float(pred != y)


def expected_loss_function(
    K: DPPredictor, loss: Callable[[int, int], float] = zero_one_loss
) -> DataDependentFunction:
    """``M(s, (x, y)) = E_K[loss(K(s, x), y)]`` with certificate ``e^eps - 1``."""
    table = {(p, y): float(loss(p, y)) for p in LABELS for y in LABELS}
    if any(not 0.0 <= v <= 1.0 for v in table.values()):
        raise ValueError("loss must take values in [0, 1]")

    def evaluator(s, z):
        y = _label(z)
        x = z[0] if isinstance(z, tuple) else None
        probs = K.mechanism(s, x)
        return probs[0] * table[(0, y)] + probs[1] * table[(1, y)]

    return DataDependentFunction(
        evaluator,
        lo=min(table.values()),
        hi=max(table.values()),
        stability=K.stability,
        name=f"dp_loss(eps={K.epsilon:g})",
    )


def dp_generalization_bound(n: int, epsilon: float, delta: float) -> float:
    """High-probability bound on the estimation error of the DP expected loss.

    The explicit stability bound evaluated at ``gamma = e^eps - 1`` and range ``[0, 1]``.
    """
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    return main_bound(BoundParams(n=n, delta=delta, gamma=math.expm1(epsilon), R=1.0)).value
