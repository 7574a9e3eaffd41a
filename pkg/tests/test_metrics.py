import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import jensenshannon
from skimage.metrics import structural_similarity

from boss.engine import SynthesisResult, SynthesisSpec
from boss.errors import StructuralError
from boss.metrics import (REPORT_HEADER, boundary_stats, cross_entropy, cross_entropy_grad,
                          d_distance, evaluate_batch, js_distance, mse, mse_grad, ssim)


def pmfs(size):
    # subnormal entries make scipy's reference return inf
    return st.lists(st.floats(0, 1, allow_nan=False, allow_subnormal=False),
                    min_size=size, max_size=size).filter(
        lambda v: sum(v) > 1e-3).map(lambda v: np.array(v) / sum(v))


def test_js_identical_is_zero():
    p = np.array([0.2, 0.3, 0.5])
    assert js_distance(p, p) == 0.0


def test_js_disjoint_support_is_one():
    assert js_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-12)


def test_js_half_case_symmetric_and_inside():
    a = js_distance([1.0, 0.0], [0.5, 0.5])
    assert 0.0 < a < 1.0
    assert a == js_distance([0.5, 0.5], [1.0, 0.0])


def test_js_length_mismatch():
    with pytest.raises(StructuralError):
        js_distance([1.0], [0.5, 0.5])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 12).flatmap(lambda m: st.tuples(pmfs(m), pmfs(m))))
def test_js_properties_against_scipy(pair):
    p, q = pair
    d = js_distance(p, q)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(js_distance(q, p), abs=1e-12)
    assert d == pytest.approx(float(jensenshannon(p, q, base=2)), abs=1e-7)
    assert js_distance(p, p) < 1e-12


def _image(seed, shape=(28, 28)):
    return np.random.default_rng(seed).uniform(size=shape)


def test_ssim_identical_is_one():
    x = _image(0)
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)


def test_ssim_inverted_is_lower():
    x = _image(1)
    assert ssim(x, 1.0 - x) < ssim(x, x)


def test_ssim_symmetric():
    a, b = _image(2), _image(3)
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_ssim_matches_skimage(seed):
    a = _image(seed)
    b = np.clip(a + 0.2 * np.random.default_rng(seed + 100).normal(size=a.shape), 0, 1)
    ref = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-12)


def test_ssim_rejects_bad_shapes():
    with pytest.raises(StructuralError):
        ssim(_image(0, (8, 8)), _image(1, (8, 8)))
    with pytest.raises(StructuralError):
        ssim(_image(0), _image(1, (28, 27)))
    with pytest.raises(StructuralError):
        ssim(np.zeros(784), np.zeros(784))


def test_d_distance():
    a, b = _image(4), _image(5)
    assert d_distance(a, a) == pytest.approx(0.0, abs=1e-9)
    assert d_distance(a, b) == pytest.approx(d_distance(b, a), abs=1e-12)
    assert 0.0 <= d_distance(a, b) <= 2.0
    # non-images fall back to MSE
    assert d_distance(np.ones(3), np.zeros(3)) == 1.0


def test_mse_values():
    x = np.array([0.1, 0.7])
    assert mse(x, x) == 0.0
    assert mse([1.0, 0.0], [0.0, 1.0]) == 1.0
    n, k = 7, 3
    v = np.zeros(n)
    v[:k] = 1.0
    assert mse(v, np.zeros(n)) == k / n


def test_cross_entropy_values():
    assert cross_entropy([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-11)
    u = np.full(4, 0.25)
    skewed = np.array([0.4, 0.2, 0.2, 0.2])
    assert cross_entropy(u, u) < cross_entropy(skewed, u)
    assert cross_entropy(u, u) == pytest.approx(math.log(4), abs=1e-10)


def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    p_hat = rng.dirichlet(np.ones(5))
    p_d = rng.dirichlet(np.ones(5))
    num = _fd(lambda q: cross_entropy(q, p_d), p_hat)
    assert np.max(np.abs(cross_entropy_grad(p_hat, p_d) - num) / (np.abs(num) + 1e-8)) < 1e-4
    a, b = rng.normal(size=6), rng.normal(size=6)
    num = _fd(lambda v: mse(v, b), a)
    assert np.max(np.abs(mse_grad(a, b) - num) / (np.abs(num) + 1e-8)) < 1e-4


def test_boundary_stats():
    s = boundary_stats([0.5, 0.5, 0.0, 0.0], "pair")
    assert s.l2 == 0.0 and s.linf == 0.0
    u = boundary_stats(np.full(10, 0.1), "uniform")
    assert u.l2 == pytest.approx(0.0, abs=1e-15) and u.linf == pytest.approx(0.0, abs=1e-15)
    s = boundary_stats([0.6, 0.4], "pair")
    assert s.top2 == (0.6, 0.4)
    assert s.linf == pytest.approx(0.1, abs=1e-15)
    assert s.l2 == pytest.approx(math.sqrt(0.02), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10).flatmap(pmfs), st.sampled_from(["pair", "uniform"]))
def test_boundary_linf_below_l2(p, mode):
    s = boundary_stats(p, mode)
    assert s.top2[0] >= s.top2[1]
    assert 0.0 <= s.linf <= s.l2 + 1e-15


class FixedClassifier:
    """Returns a preset PMF for every input."""

    def __init__(self, pmf):
        self.pmf = np.asarray(pmf)
        self.M = len(self.pmf)

    def predict(self, x):
        return self.pmf


def _result(x, status="satisfied", iterations=4):
    return SynthesisResult(x=x, status=status, iterations=iterations)


def test_evaluate_all_targets_hit():
    clf = FixedClassifier([0.1, 0.9])
    x = np.full(3, 0.5)
    specs = [SynthesisSpec(x_d=x, p_d=[0.0, 1.0], delta_s=0.5, delta_c=0.5) for _ in range(3)]
    report = evaluate_batch([_result(x) for _ in specs], specs, clf, true_labels=[0, 0, 0])
    assert report.alpha == 1.0
    assert report.ca == 0.0
    assert report.sigma_js == pytest.approx(js_distance([0.1, 0.9], [0.0, 1.0]))


def test_evaluate_confidence_percentage():
    clf = FixedClassifier([0.991, 0.009])
    x = np.zeros(2)
    spec = SynthesisSpec(x_d=x, p_d=[0.6, 0.4], delta_s=0.5, delta_c=0.5)
    report = evaluate_batch([_result(x)], [spec], clf, true_labels=[0])
    assert report.sigma_con == pytest.approx(99.1, abs=1e-9)
    assert report.ca == 1.0


def test_evaluate_no_success_and_empty():
    clf = FixedClassifier([0.9, 0.1])
    x = np.zeros(2)
    spec = SynthesisSpec(x_d=x, p_d=[0.0, 1.0], delta_s=0.5, delta_c=0.5)
    assert evaluate_batch([_result(x, "budget_exhausted")], [spec], clf).alpha == 0.0
    with pytest.raises(ValueError):
        evaluate_batch([], [], clf)


def test_report_aggregates_are_row_means_and_csv_layout():
    clf = FixedClassifier([0.3, 0.7])
    xs = [np.full(2, v) for v in (0.0, 0.5, 1.0)]
    specs = [SynthesisSpec(x_d=np.zeros(2), p_d=[0.0, 1.0], delta_s=0.5, delta_c=0.5) for _ in xs]
    report = evaluate_batch([_result(x, iterations=i + 1) for i, x in enumerate(xs)], specs, clf,
                            true_labels=[1, 1, 0])
    assert report.sigma_s == 100.0 * np.mean([r.ssim for r in report.rows])
    assert report.sigma_con == 100.0 * np.mean([r.confidence for r in report.rows])
    lines = report.to_csv().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER)
    assert len(lines) == 5 and lines[-1].startswith("mean,")
