"""Bound formulas against an independent high-precision evaluation."""
import math

import mpmath as mp
import pytest
from hypothesis import given, settings, strategies as st

from unistab.bounds import (
    TABLE_COLUMNS,
    BoundParams,
    be02_bound,
    bound_table,
    fv18_bound,
    gamma_threshold,
    inductive_bound,
    main_bound,
    mcdiarmid_tail,
    moment_bounds,
    parse_gamma_rule,
    scale_bound,
    table_to_csv,
    thm_large_gamma_bound,
    thm_small_gamma_bound,
)

mp.mp.dps = 40


def rel(a, b):
    return abs(a - b) / abs(b)


# mpmath oracles, written from the closed forms independently of the package
def o_mcd(n, g, t):
    return mp.e ** (-2 * mp.mpf(t) ** 2 / (n * mp.mpf(g) ** 2))


def o_be02(n, g, d, R=1):
    return (mp.mpf(g) * mp.sqrt(n) + mp.mpf(R) / mp.sqrt(n)) * mp.sqrt(mp.log(1 / mp.mpf(d)))


def o_fv18(n, g, d, R=1):
    return (mp.sqrt(mp.mpf(g) * R) + mp.mpf(R) / mp.sqrt(n)) * mp.sqrt(mp.log(1 / mp.mpf(d)))


def o_main(n, g, d, R=1):
    n, g, d = mp.mpf(n), mp.mpf(g), mp.mpf(d)
    return 32 * g * mp.log(5 * n**3 / d) * mp.log(n, 2) + 2 * R * mp.sqrt(mp.log(4 / d) / n)


def o_large(n, g, d):
    n, g, d = mp.mpf(n), mp.mpf(g), mp.mpf(d)
    return 16 * g * mp.log(n**3 / d) * mp.log(n, 2)


def o_small(n, g, d, R=1):
    n, g, d = mp.mpf(n), mp.mpf(g), mp.mpf(d)
    return 16 * g * mp.log(4 * n**3 / d) * mp.log(n, 2) + 2 * R * mp.sqrt(mp.log(4 / d) / n)


def o_inductive(a, d):
    n = mp.mpf(4) ** a
    return 8 / mp.sqrt(n) * mp.log(n**2 / mp.mpf(d)) * mp.log(n, 2)


@pytest.mark.parametrize(
    "n,g,t,expected", [(100, 0.1, 0.5, 0.606531), (4, 1, 2, 0.135335)]
)
def test_mcdiarmid_examples(n, g, t, expected):
    v = mcdiarmid_tail(n, g, t)
    assert rel(v, float(o_mcd(n, g, t))) < 1e-12
    assert v == pytest.approx(expected, abs=5e-7)


def test_mcdiarmid_zero_gamma():
    assert mcdiarmid_tail(10, 0.0, 0.1) == 0.0
    assert mcdiarmid_tail(10, 0.0, 0.0) == 1.0


def test_be02_and_fv18_examples():
    p = BoundParams(n=10**4, delta=1e-3, gamma=0.01)
    assert rel(be02_bound(p).value, float(o_be02(10**4, 0.01, 1e-3))) < 1e-12
    assert rel(fv18_bound(p).value, float(o_fv18(10**4, 0.01, 1e-3))) < 1e-12
    assert be02_bound(p).value == pytest.approx(2.6546, abs=1e-4)
    assert fv18_bound(p).value == pytest.approx(0.289109, abs=5e-7)


def test_fv18_and_be02_agree_in_order_at_gamma_one_over_n():
    n = 10**4
    p = BoundParams(n=n, delta=0.01, gamma=1.0 / n)
    # both reduce to ~ 1/sqrt(n) times a log factor
    ratio = fv18_bound(p).value / be02_bound(p).value
    assert ratio == pytest.approx(1.0, abs=1e-12)


def test_main_examples():
    p = BoundParams(n=10**4, delta=0.01, gamma=1e-4)
    v = main_bound(p)
    assert v.valid and rel(v.value, float(o_main(10**4, 1e-4, 0.01))) < 1e-12
    assert v.value == pytest.approx(1.4881, abs=5e-5)


def test_main_asymptotic_witness():
    p = BoundParams(n=10**24, delta=1e-3, gamma=1e-12)
    m, f = main_bound(p).value, fv18_bound(p).value
    assert rel(m, float(o_main(10**24, 1e-12, 1e-3))) < 1e-9
    assert m == pytest.approx(4.447e-7, rel=1e-3)
    assert f == pytest.approx(2.628e-6, rel=1e-3)
    assert m < f


def test_main_validity_flags():
    assert not main_bound(BoundParams(n=3, delta=0.01, gamma=0.01)).valid
    assert not main_bound(BoundParams(n=100, delta=0.5, gamma=0.01)).valid


def test_thm_large_example():
    p = BoundParams(n=4, delta=1 / math.e, gamma=0.5)
    v = thm_large_gamma_bound(p)
    assert rel(v.value, float(o_large(4, 0.5, 1 / mp.e))) < 1e-12
    assert v.value == pytest.approx(82.542, abs=5e-4)


def test_thm_small_example_formula():
    # the hand arithmetic in the source example rounds the first term to 2.1029;
    # the formula itself gives 2.1055 + 0.4896
    p = BoundParams(n=100, delta=0.01, gamma=1e-3)
    assert gamma_threshold(100, 0.01) == pytest.approx(0.00823, abs=1e-5)
    v = thm_small_gamma_bound(p)
    assert v.valid
    assert rel(v.value, float(o_small(100, 1e-3, 0.01))) < 1e-12
    assert v.value == pytest.approx(2.5951, abs=5e-4)


def test_small_and_large_agree_within_factor_two_at_threshold():
    n, d = 4, 1 / math.e
    g = gamma_threshold(n, d)
    p = BoundParams(n=n, delta=d, gamma=g)
    a, b = thm_small_gamma_bound(p).value, thm_large_gamma_bound(p).value
    assert 0.5 <= a / b <= 2.0


def test_inductive_examples():
    assert inductive_bound(1, 1 / math.e).value == pytest.approx(30.18, abs=5e-3)
    assert inductive_bound(2, 1 / math.e).value == pytest.approx(52.36, abs=5e-3)
    for a in (1, 2, 5):
        assert rel(inductive_bound(a, 0.05).value, float(o_inductive(a, 0.05))) < 1e-12
    base = 8 * math.sqrt(math.log(4 * math.e))
    assert base <= inductive_bound(1, 1 / math.e).value


@pytest.mark.parametrize("delta", [1 / math.e, 0.1, 0.01])
def test_inductive_decreasing_from_a3(delta):
    vals = [inductive_bound(a, delta).value for a in range(3, 11)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


@pytest.mark.parametrize("alpha", [0.5, 2.0, 10.0])
@pytest.mark.parametrize("fn", [be02_bound, fv18_bound, main_bound, thm_large_gamma_bound, thm_small_gamma_bound])
def test_homogeneity(fn, alpha):
    p = BoundParams(n=1000, delta=0.01, gamma=0.003, R=0.7)
    scaled = fn(p.scaled(alpha)).value
    assert scaled == pytest.approx(alpha * fn(p).value, rel=1e-12)
    assert scale_bound(scaled, alpha) == pytest.approx(fn(p).value, rel=1e-12)


def test_range_two_equals_twice_half_gamma():
    a = main_bound(BoundParams(n=500, delta=0.01, gamma=0.002, R=2.0)).value
    b = main_bound(BoundParams(n=500, delta=0.01, gamma=0.001, R=1.0)).value
    assert a == pytest.approx(2 * b, rel=1e-12)


def test_moment_bounds():
    first, second = moment_bounds(0.1, 100)
    assert (first, second) == pytest.approx((0.2, 0.02))
    assert second <= first


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.integers(1, 10**6))
def test_moment_second_below_first(g, n):
    first, second = moment_bounds(g, n)
    assert second <= first + 1e-15


@settings(max_examples=100, deadline=None)
@given(
    n=st.integers(4, 10**9),
    g=st.floats(0, 1),
    d=st.floats(1e-12, 1 / math.e),
    alpha=st.floats(0.01, 100),
)
def test_homogeneity_property(n, g, d, alpha):
    p = BoundParams(n=n, delta=d, gamma=g)
    for fn in (be02_bound, fv18_bound, main_bound):
        assert fn(p.scaled(alpha)).value == pytest.approx(alpha * fn(p).value, rel=1e-11)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(4, 10**9), g=st.floats(0, 1), d1=st.floats(1e-12, 0.3), d2=st.floats(1e-12, 0.3))
def test_bounds_monotone_in_delta(n, g, d1, d2):
    lo, hi = sorted((d1, d2))
    for fn in (be02_bound, fv18_bound, main_bound):
        assert fn(BoundParams(n=n, delta=lo, gamma=g)).value >= fn(BoundParams(n=n, delta=hi, gamma=g)).value


def test_invalid_params():
    for kw in ({"n": 0, "delta": 0.1}, {"n": 10, "delta": 0.0}, {"n": 10, "delta": 1.0},
               {"n": 10, "delta": 0.1, "gamma": -1.0}, {"n": 10, "delta": 0.1, "R": 0.0}):
        with pytest.raises(ValueError):
            BoundParams(**kw)
    with pytest.raises(ValueError):
        parse_gamma_rule("sqrt_n")


def test_table_row_and_csv():
    rows = bound_table([10**4], "inv_sqrt_n", 1e-3)
    row = rows[0]
    assert row["gamma"] == pytest.approx(0.01)
    assert row["be02"] == pytest.approx(2.6546, abs=1e-4)
    assert row["fv18"] == pytest.approx(0.2891, abs=5e-5)
    assert row["main"] == pytest.approx(float(o_main(10**4, 0.01, 1e-3)), rel=1e-12)
    text = table_to_csv(rows)
    header, line = text.strip().split("\n")
    assert tuple(header.split(",")) == TABLE_COLUMNS
    assert line.split(",")[7] in ("true", "false")


def test_table_main_decreasing_in_n():
    # under gamma = 1/sqrt(n) the main bound rises until n ~ 21 then falls;
    # checked along powers of two from 16
    ns = [2**k for k in range(4, 25)]
    vals = [r["main"] for r in bound_table(ns, "inv_sqrt_n", 1e-3)]
    assert all(x > y for x, y in zip(vals[1:], vals[2:]))
