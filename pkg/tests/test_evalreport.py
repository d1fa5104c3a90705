import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ranspinn.evalreport import build_report, error_stats, histogram, normalized_error_field, variance_study
from ranspinn.net import NetworkEnsemble
from ranspinn.trainer import TrainingDiverged


def brute_stats(e):
    s = sorted(e.tolist())
    n = len(s)

    def rank(q_num, q_den):  # ceil(q n) in integer arithmetic
        return max(1, -(-q_num * n // q_den))

    return {"mean": float(np.mean(e)), "median": s[rank(1, 2) - 1], "p95": s[rank(95, 100) - 1]}


def test_normalized_error_examples():
    t = np.array([0.0, 1.0, 2.0])
    e, d, flag = normalized_error_field(t, t, "u")
    assert np.all(e == 0) and d == 2.0 and not flag
    e, _, _ = normalized_error_field(t + [0.2, 0, 0], t)
    assert e[0] == pytest.approx(0.1)
    e, d, flag = normalized_error_field(np.array([1.5, 1.0]), np.array([1.0, 1.0]))
    assert flag and d == 1e-12 and e[0] == pytest.approx(0.5e12)
    with pytest.raises(ValueError):
        normalized_error_field(np.zeros(2), np.zeros(3))


@given(hnp.arrays(float, 20, elements=st.floats(-5, 5)), hnp.arrays(float, 20, elements=st.floats(-5, 5)), st.floats(0.01, 100))
def test_normalized_errors_scale_invariant(pred, truth, c):
    truth = truth + np.linspace(0, 1, 20)  # nonconstant
    a, _, _ = normalized_error_field(pred, truth)
    b, _, _ = normalized_error_field(c * pred, c * truth)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_error_stats_examples():
    s = error_stats([0.1, 0.2, 0.3])
    assert s["mean"] == pytest.approx(0.2) and s["median"] == 0.2 and s["p95"] == 0.3
    s = error_stats(np.arange(1, 101) / 100)
    assert s["p95"] == 0.95
    with pytest.raises(ValueError):
        error_stats([])


def test_error_stats_matches_sort_oracle_on_many_arrays():
    rng = np.random.default_rng(123)
    for _ in range(10_000):
        n = int(rng.integers(1, 60))
        e = rng.exponential(size=n)
        assert error_stats(e) == brute_stats(e)


@given(hnp.arrays(float, st.integers(1, 200), elements=st.floats(0, 10)))
def test_stats_order_and_shuffle_invariance(e):
    s = error_stats(e)
    assert 0 <= s["median"] <= s["p95"]
    shuffled = np.random.default_rng(0).permutation(e)
    s2 = error_stats(shuffled)
    assert s2["median"] == s["median"] and s2["p95"] == s["p95"]
    assert s2["mean"] == pytest.approx(s["mean"], rel=1e-12, abs=1e-300)


def test_histogram_examples():
    edges, frac = histogram(np.zeros(5), 4)
    assert frac.tolist() == [1.0, 0.0, 0.0, 0.0] and edges[-1] == 1.0
    edges, frac = histogram(np.array([0.0, 0.5, 1.0]), 2)
    np.testing.assert_allclose(frac, [2 / 3, 1 / 3])
    np.testing.assert_array_equal(edges, [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        histogram(np.array([-1.0]), 2)


@given(hnp.arrays(float, st.integers(1, 500), elements=st.floats(0, 1e3)), st.integers(1, 50))
def test_histogram_fractions_sum_to_one(e, bins):
    edges, frac = histogram(e, bins)
    assert abs(frac.sum() - 1.0) <= 1e-12
    counts = np.round(frac * len(e)).astype(int)
    assert counts.sum() == len(e)
    assert len(edges) == bins + 1 and edges[0] == 0.0


def test_report_writes_expected_csvs(tmp_path):
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(30, 2))
    truth = {v: rng.normal(size=30) for v in ("u", "v", "p")}
    pred = {v: truth[v] + 0.01 * rng.normal(size=30) for v in truth}
    rep = build_report(pred, truth, pts, n_bins=5, metadata={"Re": 1500.0})
    rep.write(tmp_path)
    rows = list(csv.reader((tmp_path / "stats.csv").open()))
    assert rows[0] == ["variable", "mean", "p95", "median"]
    assert [r[0] for r in rows[1:]] == ["u", "v", "p"]
    assert float(rows[1][1]) == rep.stats["u"]["mean"]
    hist = list(csv.reader((tmp_path / "hist_u.csv").open()))
    assert hist[0] == ["bin_lo", "bin_hi", "fraction"] and len(hist) == 6
    err = list(csv.reader((tmp_path / "errors.csv").open()))
    assert err[0] == ["x", "y", "err_u", "err_v", "err_p"] and len(err) == 31
    assert "variable" in rep.format_table()
    assert rep.metadata["Re"] == 1500.0 and rep.metadata["degenerate_range"] == []


def test_report_svgs(tmp_path):
    pytest.importorskip("matplotlib")
    rep = build_report({v: np.arange(4.0) for v in "uvp"}, {v: np.arange(4.0)[::-1] for v in "uvp"}, np.zeros((4, 2)))
    paths = rep.write(tmp_path, svg=True)
    assert (tmp_path / "hist_u.svg").exists() and (tmp_path / "errors.svg") in paths


def _fake_trainer(offsets):
    base = NetworkEnsemble.create((3,), seed=0)

    def fn(seed):
        off = offsets[seed]
        if off is None:
            raise TrainingDiverged("boom", base, None)
        e = base.copy()
        bias_u = e.slices()["u"].stop - 1  # output bias of the u network
        e.params[bias_u] += off
        return e

    return fn


def test_variance_study_examples():
    pts = np.random.default_rng(1).uniform(size=(7, 3))
    same = variance_study(_fake_trainer({1: 0.0, 2: 0.0}), [1, 1, 2], pts)
    assert all(np.all(v == 0) for v in same.variance.values())
    two = variance_study(_fake_trainer({1: 0.0, 2: 0.3}), [1, 2], pts)
    np.testing.assert_allclose(two.variance["u"], 0.3**2 / 2, rtol=1e-10)
    assert np.all(two.variance["v"] == 0)
    with_bad = variance_study(_fake_trainer({1: 0.0, 2: 0.3, 3: None}), [1, 2, 3], pts)
    assert with_bad.seeds_used == [1, 2] and list(with_bad.diverged) == [3]
    with pytest.raises(ValueError):
        variance_study(_fake_trainer({1: 0.0}), [1], pts)
    with pytest.raises(RuntimeError):
        variance_study(_fake_trainer({1: 0.0, 3: None}), [1, 3], pts)
