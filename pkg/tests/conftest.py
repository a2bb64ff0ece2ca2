import math

import numpy as np
import pytest

from unistab import kernels
from unistab.core import DataDependentFunction, Dataset, FiniteDistribution


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request, monkeypatch):
    """Run the test once per importable kernel backend."""
    mod = kernels.available_backends()[request.param]
    monkeypatch.setattr(kernels, "psi", mod.psi)
    monkeypatch.setattr(kernels, "shift_root", mod.shift_root)
    monkeypatch.setattr(kernels, "pgd_run", mod.pgd_run)
    return request.param


def count_function(scale=0.01, name="count"):
    """``M(s, z) = scale * #{i : s_i = z}``; one replacement moves it by ``scale``."""
    return DataDependentFunction(lambda s, z: scale * s.elements.count(z), 0.0, 1.0, scale, name=name)


def centered_count_function(n, m, gamma, R=1.0):
    """``L(s, z) = gamma (count(z) - n/m)``, unbiased under the uniform law on ``m`` points.

    The declared range ``[-R, R]`` is deliberately loose: the tight range makes
    the range-reduction hypothesis fail for the small instances used here.
    """
    return DataDependentFunction(
        lambda s, z: gamma * (s.elements.count(z) - n / m), -R, R, gamma, unbiased=True, name="ccount"
    )


@pytest.fixture
def ab_uniform():
    return FiniteDistribution.uniform(("a", "b"))


@pytest.fixture
def s_aab():
    return Dataset(("a", "a", "b"))
