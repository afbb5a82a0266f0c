import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepl0 import metrics
from deepl0.metrics import EvalReport, UndefinedMetricError
from oracles import brute_force_clustering_error


def test_prediction_error_examples(rng):
    opt = rng.standard_normal((20, 8))
    assert metrics.prediction_error(opt, opt) == 0.0
    assert metrics.prediction_error(np.zeros_like(opt), opt) == 100.0
    assert metrics.prediction_error(1.1 * opt, opt) == pytest.approx(1.0, rel=1e-12)
    assert metrics.prediction_error(1.1 * opt, opt, per_sample=True) == pytest.approx(1.0, rel=1e-12)


def test_prediction_error_aggregate_vs_per_sample():
    opt = np.array([[1.0, 0.0], [10.0, 0.0]])
    pred = np.array([[0.0, 0.0], [10.0, 0.0]])
    assert metrics.prediction_error(pred, opt) == pytest.approx(100.0 / 101.0)
    assert metrics.prediction_error(pred, opt, per_sample=True) == pytest.approx(50.0)


def test_prediction_error_undefined():
    with pytest.raises(UndefinedMetricError):
        metrics.prediction_error(np.ones((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        metrics.prediction_error(np.ones((2, 3)), np.ones((3, 3)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.sampled_from([-4.0, -0.5, 0.25, 2.0, 8.0]))
def test_prediction_error_scale_invariant(seed, c):
    r = np.random.default_rng(seed)
    opt = r.standard_normal((6, 5))
    pred = r.standard_normal((6, 5))
    # power-of-two scales keep the comparison exact
    assert metrics.prediction_error(c * pred, c * opt) == metrics.prediction_error(pred, opt)


def test_support_error_examples():
    a = np.zeros((1, 10))
    a[0, [0, 1, 2]] = 1.0
    assert metrics.support_error(a, a * 3) == 0.0
    b = np.zeros((1, 10))
    b[0, [5, 6, 7]] = 1.0
    assert metrics.support_error(b, a) == 6.0
    opt = np.zeros((1, 64))
    opt[0, :32] = 1.0
    pred = opt.copy()
    pred[0, 31] = 0.0
    assert metrics.support_error(pred, opt) == 1.0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), M=st.integers(1, 8))
def test_support_error_bounded_by_2M(seed, M):
    r = np.random.default_rng(seed)
    def sparse():
        A = np.zeros((5, 16))
        for row in A:
            row[r.choice(16, M, replace=False)] = r.standard_normal(M) + 3
        return A
    assert metrics.support_error(sparse(), sparse()) <= 2 * M


def test_classification_error():
    assert metrics.classification_error([0, 1, 1, 2], [0, 1, 2, 2]) == 25.0


def test_clustering_error_examples():
    y = np.array([0, 0, 0, 1, 1, 1])
    assert metrics.clustering_error(y, y, 2) == 0.0
    assert metrics.clustering_error(1 - y, y, 2) == 0.0
    a = np.array([0, 0, 1, 1, 1, 1])
    assert metrics.clustering_error(a, y, 2) == pytest.approx(100 / 6)
    assert brute_force_clustering_error(a, y, 2) == pytest.approx(100 / 6)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), K=st.integers(2, 5))
def test_clustering_error_matches_brute_force(seed, K):
    r = np.random.default_rng(seed)
    y = r.integers(0, K, 25)
    a = np.where(r.random(25) < 0.7, (y + 1) % K, r.integers(0, K, 25))
    expect = brute_force_clustering_error(a, y, K)
    assert metrics.clustering_error(a, y, K) == pytest.approx(expect, abs=1e-12)
    perm = r.permutation(K)
    assert metrics.clustering_error(perm[a], y, K) == pytest.approx(expect, abs=1e-12)


def test_clustering_error_hungarian_path(rng):
    K = 10
    y = rng.integers(0, K, 200)
    perm = rng.permutation(K)
    a = perm[y].copy()
    a[:20] = (a[:20] + 1) % K
    assert metrics.clustering_error(a, y, K) == pytest.approx(10.0)


def test_clustering_error_range_checks():
    with pytest.raises(ValueError):
        metrics.clustering_error([0, 3], [0, 1], 2)


def test_eval_report_and_csv(tmp_path):
    with pytest.raises(UndefinedMetricError):
        EvalReport("prediction_error", float("nan"), 3)
    path = tmp_path / "r.csv"
    metrics.append_reports(path, [EvalReport("support_error", 1.5, 10, "abc")])
    metrics.append_reports(path, [EvalReport("prediction_error", 0.25, 10, "abc")])
    assert path.read_text().splitlines() == [
        "metric,value,n,config_hash", "support_error,1.5,10,abc", "prediction_error,0.25,10,abc"]


def test_config_fingerprint_stable():
    a = metrics.config_fingerprint({"b": 1, "a": [1, 2]})
    assert a == metrics.config_fingerprint({"a": [1, 2], "b": 1})
    assert a != metrics.config_fingerprint({"a": [1, 2], "b": 2})
    assert len(a) == 16
