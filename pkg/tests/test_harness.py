import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unistab import harness as hx
from unistab.core import trial_rng


def small_cfg(**kw):
    base = dict(n=[50, 200], trials=100, delta=[0.1, 0.05, 0.01], seed=3)
    base.update(kw)
    return hx.ExperimentConfig(**base)


def test_config_round_trip(tmp_path):
    cfg = small_cfg(solver="smooth-gd", lam=0.25, epsilon=0.3, out="x.csv", format="json")
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    assert hx.ExperimentConfig.load(path) == cfg


@pytest.mark.parametrize(
    "bad", [{"trials": 0}, {"delta": [1.2]}, {"n": []}, {"problem": "nope"}, {"solver": "adam"}, {"format": "xml"}]
)
def test_config_validation(bad):
    with pytest.raises(hx.ConfigError):
        small_cfg(**bad)


def test_config_unknown_key_and_bad_file(tmp_path):
    with pytest.raises(hx.ConfigError, match="unknown"):
        hx.ExperimentConfig.from_dict({"colour": 1})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(hx.ConfigError, match="valid JSON"):
        hx.ExperimentConfig.load(bad)
    with pytest.raises(hx.ConfigError, match="cannot read"):
        hx.ExperimentConfig.load(tmp_path / "missing.json")


def test_quantile_convention():
    vals = np.arange(1, 101, dtype=float)
    assert hx.tail_quantile(vals, 0.01) == 99.0  # rank ceil(99) = 99
    assert hx.tail_quantile(vals, 0.1) == 90.0
    assert hx.tail_quantile(vals, 0.015) == 99.0  # rank ceil(98.5) = 99
    assert hx.tail_quantile([5.0], 0.5) == 5.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.floats(0.001, 0.999))
def test_quantile_is_conservative_order_statistic(vals, delta):
    q = hx.tail_quantile(vals, delta)
    m = len(vals)
    # at least ceil((1 - delta) m) values lie at or below q
    assert sum(v <= q for v in vals) >= math.ceil((1 - delta) * m - 1e-9)


def test_constant_problem_zero_error():
    report = hx.run_tail_experiment(small_cfg(problem="constant"))
    assert all(r.quantile == 0.0 for r in report.rows)


def test_tail_quantiles_monotone_in_delta():
    report = hx.run_tail_experiment(small_cfg())
    for n in (50, 200):
        rows = [r for r in report.rows if r.n == n]
        rows.sort(key=lambda r: -r.delta)
        qs = [r.quantile for r in rows]
        assert qs == sorted(qs)
        assert all(r.seed == 3 and r.trials == 100 for r in rows)


def test_tail_matches_direct_simulation():
    cfg = small_cfg(n=[80], trials=60, delta=[0.1])
    problem = hx.make_problem(cfg)
    errs = []
    P = problem.P
    lam = math.log(80) / math.sqrt(80)
    for j in range(60):
        rng = trial_rng(3, j, 80)
        X = problem.points[P.sample_indices(rng, 80)]
        # closed-form ridge solution of the (1/4)(w - z)^2 objective
        w = float(np.clip(0.5 * X.mean() / (0.5 + lam), -1, 1))
        emp = np.mean(0.25 * (w - X) ** 2)
        true = float(P.probs @ (0.25 * (w - np.asarray(P.support)) ** 2))
        errs.append(abs(true - emp))
    report = hx.run_tail_experiment(cfg)
    assert report.rows[0].quantile == pytest.approx(hx.tail_quantile(errs, 0.1), abs=1e-15)


def test_dp_problem_exceedance():
    cfg = small_cfg(problem="dp-majority", epsilon=0.05, n=[400], trials=400, delta=[0.1])
    row = hx.run_tail_experiment(cfg).rows[0]
    assert row.exceed_freq <= row.delta + 3 * row.exceed_se
    assert row.quantile < row.main


def test_soundness_on_non_vacuous_rows():
    cfg = small_cfg(problem="dp-majority", epsilon=1e-5, n=[2000], trials=300, delta=[0.3, 0.05])
    report = hx.run_tail_experiment(cfg)
    checked = [r for r in report.rows if r.main_valid and not r.main_vacuous]
    assert checked
    for r in checked:
        assert r.exceed_freq <= r.delta + 3 * math.sqrt(r.delta * (1 - r.delta) / r.trials)


def test_emit_round_trip(tmp_path):
    report = hx.run_tail_experiment(small_cfg(n=[50], trials=40))
    for fmt in ("csv", "json"):
        path = tmp_path / f"r.{fmt}"
        hx.emit(report, path, fmt)
        back = hx.load_report(path, fmt)
        assert back.records() == report.records()
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "n,delta,quantile,be02,fv18,main,main_vacuous,trials,seed"


def test_emit_empty_and_errors(tmp_path):
    path = tmp_path / "empty.csv"
    hx.emit(hx.TailReport(), path)
    assert path.read_text() == ",".join(hx.TAIL_COLUMNS) + "\n"
    with pytest.raises(OSError, match="nowhere"):
        hx.emit(hx.TailReport(), tmp_path / "nowhere" / "x.csv")


def test_float_format_17_digits(tmp_path):
    report = hx.TailReport([hx.TailRow(10, 0.1, 1 / 3, 0.1, 0.2, 0.3, False, 5, 0)])
    path = tmp_path / "r.csv"
    hx.emit(report, path)
    line = path.read_text().splitlines()[1]
    assert "0.33333333333333331" in line and ",false," in line


def test_parallel_matches_serial(tmp_path):
    cfg1 = small_cfg(n=[60], trials=50, solver="resample-sgd")
    cfg4 = small_cfg(n=[60], trials=50, solver="resample-sgd", workers=4)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    hx.emit(hx.run_tail_experiment(cfg1), a)
    hx.emit(hx.run_tail_experiment(cfg4), b)
    assert a.read_bytes() == b.read_bytes()


def test_excess_experiment_and_fit():
    report = hx.run_excess_experiment(small_cfg(n=[100, 400], trials=100))
    c = report.rows[0].c_fit
    assert all(r.c_fit == c for r in report.rows)
    q = {(r.n, r.delta): r.quantile for r in report.rows}
    assert q[(400, 0.1)] < q[(100, 0.1)]
    assert c > 0


def test_excess_grows_with_lambda():
    qs = [hx.run_excess_experiment(small_cfg(n=[200], trials=60, delta=[0.1], lam=lam)).rows[0].quantile
          for lam in (0.1, 1.0, 10.0)]
    assert qs == sorted(qs)


def test_point_mass_excess_is_bias():
    problem = hx.MeanEstimationProblem("reg-erm", lam=0.5, support=(0.6,), probs=(1.0,))
    val = problem.excess(10, trial_rng(0, 0))
    w = 0.5 * 0.6 / (0.5 + 0.5)
    assert val == pytest.approx(0.25 * (w - 0.6) ** 2, abs=1e-15)


def test_power_law_fit():
    ns = np.array([100, 400, 1600])
    assert hx.fit_power_law(ns, 3 * ns**-0.5) == pytest.approx(0.5, abs=1e-12)


def test_clamp_suite_and_worked_instance():
    summary = hx.clamp_suite(25, seed=1)
    assert summary.ok
    b, mean = hx.worked_clamp_instance()
    assert b == pytest.approx(0.5, abs=1e-9) and abs(mean) <= 1e-12


def test_stability_audits_pass():
    rows = hx.stability_audits(n=30, pairs=60)
    assert all(r.ok for r in rows)
