import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttfs.env import EnvKind, ResetMode, TTFSEnv
from ttfs.evaluation import (PLOT_KINDS, SCALAR_FIELDS, SERIES_COLUMNS, ConfigMismatchError,
                             EvalReport, compare, emit_plots, evaluate, isv, read_summary,
                             write_comparison)

from helpers import tiny_config

CFG = tiny_config(t_final=5.0)


@pytest.fixture(scope="module")
def report():
    return evaluate(CFG, seed=3)


def test_isv_zero_and_constant():
    t = np.linspace(0.0, 4.0, 41)
    assert isv(t, np.zeros((41, 3))) == 0.0
    c = np.tile([1.0, 2.0, 2.0], (41, 1))
    assert isv(t, c) == pytest.approx(9.0 * 4.0, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 40), st.integers(1, 38))
def test_isv_additive_over_split(n, k):
    k = min(k, n - 2)
    rng = np.random.default_rng(n * 100 + k)
    t = np.cumsum(rng.uniform(0.01, 0.2, n))
    v = rng.normal(size=(n, 2))
    whole = isv(t, v)
    split = isv(t[:k + 1], v[:k + 1]) + isv(t[k:], v[k:])
    assert whole == pytest.approx(split, rel=1e-12, abs=1e-15)


def test_series_layout(report):
    assert report.series.shape == (51, len(SERIES_COLUMNS))
    assert report.done_reason == "horizon"
    assert np.allclose(np.diff(report.column("t")), CFG.episode.dt)
    assert set(report.scalars) == set(SCALAR_FIELDS)


def test_rms_recomputed_from_csv(report, tmp_path):
    report.write(tmp_path / "r-series.csv", tmp_path / "r-summary.csv")
    data = np.loadtxt(tmp_path / "r-series.csv", delimiter=",", skiprows=1)
    e = data[:, 1:4]
    assert math.sqrt(np.mean(np.sum(e * e, axis=1))) == pytest.approx(report.rms_length, abs=1e-12)
    p = data[:, 7:13]
    assert math.sqrt(np.mean(np.sum(p * p, axis=1))) == pytest.approx(report.rms_position, abs=1e-12)
    back = read_summary(tmp_path / "r-summary.csv")
    assert back.scalars == pytest.approx(report.scalars)
    assert back.config_hash == report.config_hash


def test_evaluation_is_deterministic(report, tmp_path):
    again = evaluate(CFG, seed=3)
    report.write(tmp_path / "a-series.csv", tmp_path / "a-summary.csv")
    again.write(tmp_path / "b-series.csv", tmp_path / "b-summary.csv")
    assert (tmp_path / "a-series.csv").read_bytes() == (tmp_path / "b-series.csv").read_bytes()
    assert (tmp_path / "a-summary.csv").read_bytes() == (tmp_path / "b-summary.csv").read_bytes()


def test_baseline_report_matches_neutral_env_rollout(report):
    env = TTFSEnv(CFG, EnvKind.SATELLITE, seed=3, reset_mode=ResetMode.START)
    env.reset()
    etas = [env.eta.copy()]
    while not env.step(env.neutral_action).done:
        etas.append(env.eta.copy())
    etas.append(env.eta.copy())
    assert len(etas) == report.series.shape[0]
    from ttfs.reference import tether_reference
    t = report.column("t")
    expected = np.array([tether_reference(tk, env.rp) - e for tk, e in zip(t, etas)])
    assert np.array_equal(report.block("e_l", 6), expected)


def test_compare_self(report):
    rows = compare(report, report)
    assert [r["metric"] for r in rows] == SCALAR_FIELDS
    for r in rows:
        assert r["ratio"] == 1.0 and r["reduction_pct"] == 0.0 and r["winner"] == "tie"


def test_compare_reduction_formula(report):
    scalars = dict(report.scalars)
    scalars["rms_length"] = report.rms_length * 0.25
    scalars["elongation_within"] = 1.0
    better = EvalReport(report.series, report.done_reason, report.config_hash, scalars=scalars)
    rows = {r["metric"]: r for r in compare(report, better)}
    assert rows["rms_length"]["reduction_pct"] == pytest.approx(75.0)
    assert rows["rms_length"]["winner"] == "b"
    if report.elongation_within < 1.0:
        assert rows["elongation_within"]["winner"] == "b"


def test_compare_rejects_config_mismatch(report):
    other = EvalReport(report.series, report.done_reason, "deadbeef")
    with pytest.raises(ConfigMismatchError):
        compare(report, other)


def test_write_comparison(report, tmp_path):
    write_comparison(compare(report, report), tmp_path / "c.csv")
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert len(rows) == len(SCALAR_FIELDS)


def test_emit_plots(report, tmp_path):
    kinds = PLOT_KINDS[:4]
    written = emit_plots([report], tmp_path, kinds)
    assert sorted(p.name for p in written) == sorted(f"{k}.svg" for k in kinds)
    for k in kinds:
        rows = list(csv.reader(open(tmp_path / f"{k}.csv")))
        assert len(rows) - 1 == report.series.shape[0]


def test_emit_plots_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_plots([], tmp_path)
    with pytest.raises(ValueError):
        emit_plots([], tmp_path, ("bogus",))


def test_report_needs_two_samples():
    with pytest.raises(ValueError):
        EvalReport(np.zeros((1, len(SERIES_COLUMNS))), "none", "x")
