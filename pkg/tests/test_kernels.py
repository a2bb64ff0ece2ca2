"""The compiled and pure-Python kernels must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unistab import _pykernels, kernels

BACKENDS = kernels.available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")


def _instance(seed, m):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(m))
    values = rng.uniform(-2, 2, m)
    values -= probs @ values
    return values, probs


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_shift_root_solves_psi(name):
    mod = BACKENDS[name]
    for seed in range(50):
        values, probs = _instance(seed, 2 + seed % 6)
        w = 0.1 + (seed % 7) * 0.2
        b = mod.shift_root(values, probs, w, 1e-12)
        assert -w <= b <= w
        assert abs(mod.psi(values, probs, b, w)) <= 1e-10


@needs_both
@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.floats(0.01, 3.0))
def test_backends_agree_on_shift(seed, m, w):
    values, probs = _instance(seed, m)
    out = [BACKENDS[k].shift_root(values, probs, w, 1e-12) for k in ("python", "cython")]
    assert out[0] == pytest.approx(out[1], abs=1e-11)
    x = float(np.random.default_rng(seed).uniform(-w, w))
    assert BACKENDS["python"].psi(values, probs, x, w) == pytest.approx(BACKENDS["cython"].psi(values, probs, x, w), abs=1e-14)


def test_flat_psi_returns_midpoint():
    # K = +-0.5 w.p. 1/2 with w = 1: psi vanishes on [-0.5, 0.5], midpoint 0
    values = np.array([0.5, -0.5])
    probs = np.array([0.5, 0.5])
    for mod in BACKENDS.values():
        assert mod.shift_root(values, probs, 1.0, 1e-12) == pytest.approx(0.0, abs=1e-11)


def test_env_var_forces_python_backend():
    env = dict(os.environ, UNISTAB_PURE_PYTHON="1")
    res = subprocess.run(
        [sys.executable, "-c", "import unistab.kernels as k; print(k.BACKEND)"], env=env, capture_output=True, text=True
    )
    assert res.stdout.strip() == "python"


def test_default_backend_prefers_compiled():
    expected = "cython" if "cython" in BACKENDS else "python"
    if os.environ.get("UNISTAB_PURE_PYTHON"):
        expected = "python"
    assert kernels.BACKEND == expected
    assert _pykernels.QUADRATIC == kernels.QUADRATIC
