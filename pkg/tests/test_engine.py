import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boss.data import generate_blobs
from boss.engine import D_FLOOR, SynthesisSpec, lambda_update, synthesize, total_loss
from boss.errors import ConfigError, StructuralError
from boss.metrics import cross_entropy, mse
from boss.models import ClassifierModel, build_generator, mlp, train_classifier, uniform_latent

from oracles import LD, central_difference, max_rel_error, ref_joint_loss, snapshot


def test_lambda_fixed_point():
    assert lambda_update(0.0042, 0.001, 0.2, 0.2) == 0.0042


def test_lambda_grows_when_output_is_far():
    assert lambda_update(0.001, 0.001, 0.2, 0.4) == pytest.approx(0.0015, abs=1e-12)


def test_lambda_clamped_at_zero():
    assert lambda_update(0.0001, 0.001, 0.2, 0.05) == 0.0


def test_lambda_zero_distance_is_clamped():
    # D = 0 is floored at 1e-8, so the weight collapses to zero
    assert lambda_update(1.0, 0.001, 0.2, 0.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 10), st.floats(1e-6, 1), st.floats(0, 1), st.floats(0, 1))
def test_lambda_direction(lam, lam0, dc, D):
    new = lambda_update(lam, lam0, dc, D)
    assert new >= 0.0
    D = max(D, D_FLOOR)  # the ratio uses the floored distance
    if D > dc:
        assert new >= lam
    elif D < dc:
        assert new <= lam


def _small(seed):
    rng = np.random.default_rng(seed)
    gen = build_generator(3, 5, hidden=(4,), seed=seed)
    clf = ClassifierModel(mlp([5, 4, 3], rng))
    for layer in gen.graph.layers + clf.graph.layers:
        if layer.kind == "dense":
            layer.bias[:] = rng.normal(scale=0.5, size=layer.bias.shape)
    return rng, gen, clf


def test_total_loss_without_weight_is_mse():
    rng, gen, clf = _small(0)
    z, x_d = rng.uniform(size=3), rng.uniform(size=5)
    loss, _ = total_loss(gen, clf, z, x_d, [0.2, 0.3, 0.5], 0.0)
    assert loss == mse(gen(z), x_d)


def test_total_loss_at_both_targets_is_entropy_floor():
    rng, gen, clf = _small(1)
    z = rng.uniform(size=3)
    x = gen(z)
    p = clf.predict(x)
    loss, _ = total_loss(gen, clf, z, x, p, 0.7)
    assert loss == pytest.approx(0.7 * cross_entropy(p, p), abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_total_loss_gradient_matches_finite_differences(seed):
    rng, gen, clf = _small(seed)
    z, x_d = rng.uniform(size=3), rng.uniform(size=5)
    p_d = rng.dirichlet(np.ones(3))
    _, grads = total_loss(gen, clf, z, x_d, p_d, 0.8)
    ref_g, ref_c = snapshot(gen.graph), snapshot(clf.graph)
    arrays = [a for _, w, b in ref_g if w is not None for a in (w.astype(LD), b.astype(LD))]
    it = iter(arrays)
    ref_g = [(k, next(it), next(it)) if w is not None else (k, w, b) for k, w, b in ref_g]
    numeric = central_difference(
        lambda: ref_joint_loss(ref_g, [ref_c], z, x_d, [p_d], [0.8]), arrays)
    assert max_rel_error(grads, numeric) < 1e-4


def test_spec_validation():
    with pytest.raises(ConfigError):
        SynthesisSpec(x_d=np.zeros(4), p_d=[1.0, 0.0], delta_s=1.5, delta_c=0.1)
    with pytest.raises(ConfigError):
        SynthesisSpec(x_d=np.zeros(4), p_d=[1.0, 0.0], delta_s=0.1, delta_c=0.1, max_iters=0)
    with pytest.raises(ValueError):
        SynthesisSpec(x_d=np.zeros(4), p_d=[0.7, 0.7], delta_s=0.1, delta_c=0.1)


def test_dimension_mismatch(clf4):
    spec = SynthesisSpec(x_d=np.zeros(64), p_d=np.eye(4)[1], delta_s=0.5, delta_c=0.5)
    with pytest.raises(StructuralError):
        synthesize(spec, clf4, build_generator(4, 10, hidden=(5,)))


def test_vacuous_thresholds_exit_at_once(clf4, gen64, blobs4):
    spec = SynthesisSpec(x_d=blobs4.x[0].reshape(8, 8), p_d=np.eye(4)[2], delta_s=1.0,
                         delta_c=1.0)
    res = synthesize(spec, clf4, gen64)
    assert res.satisfied and res.iterations == 1


@pytest.fixture(scope="module")
def two_class():
    data = generate_blobs(2, 50, 20, seed=0)
    return data, train_classifier(data, [20, 2], epochs=50, lr=1e-2, seed=0)


def test_blob_targeted_run(two_class):
    data, clf = two_class
    x_d = data.x[np.flatnonzero(data.labels == 0)[0]]
    before = [l.weights.copy() for l in clf.graph.layers if l.kind == "dense"]
    spec = SynthesisSpec(x_d=x_d, p_d=[0.0, 1.0], delta_s=0.5, delta_c=0.3, max_iters=2000)
    gen = build_generator(100, 20, seed=0)
    res = synthesize(spec, clf, gen)
    assert res.satisfied
    assert clf.label(res.x) == 1
    assert res.d < 0.5 and res.D < 0.3
    assert np.all((res.x >= 0) & (res.x <= 1))
    # classifier untouched
    after = [l.weights for l in clf.graph.layers if l.kind == "dense"]
    for a, b in zip(before, after):
        np.testing.assert_array_equal(a, b)
    # the caller's generator is not trained in place
    np.testing.assert_array_equal(gen(uniform_latent(100, 0)),
                                  build_generator(100, 20, seed=0)(uniform_latent(100, 0)))


def test_trace_invariants_and_budget(clf4, gen64, blobs4):
    spec = SynthesisSpec(x_d=blobs4.x[0].reshape(8, 8), p_d=[0.25] * 4, delta_s=0.01,
                         delta_c=0.001, max_iters=60)
    res = synthesize(spec, clf4, gen64)
    assert res.status == "budget_exhausted" and res.iterations == 60
    assert [r.tau for r in res.trace] == list(range(1, 61))
    for a, b in zip(res.trace, res.trace[1:]):
        if a.D > spec.delta_c:
            assert b.lam >= a.lam
        elif a.D < spec.delta_c:
            assert b.lam <= a.lam
    assert res.trace[0].lam == spec.lambda0
    lines = res.trace_csv().splitlines()
    assert lines[0] == "tau,d,D,lambda" and len(lines) == 61


def test_exit_status_matches_final_distances(clf4, gen64, blobs4):
    for seed in range(3):
        spec = SynthesisSpec(x_d=blobs4.x[seed].reshape(8, 8), p_d=np.eye(4)[(seed + 1) % 4],
                             delta_s=0.6, delta_c=0.3, max_iters=300, seed=seed)
        res = synthesize(spec, clf4, gen64)
        last = res.trace[-1]
        met = last.d < spec.delta_s and last.D < spec.delta_c
        assert res.satisfied == met
        assert met or res.iterations == spec.max_iters


def test_synthesis_is_deterministic(clf4, gen64, blobs4):
    spec = SynthesisSpec(x_d=blobs4.x[5].reshape(8, 8), p_d=np.eye(4)[3], delta_s=0.5,
                         delta_c=0.2, max_iters=100, seed=4)
    a, b = synthesize(spec, clf4, gen64), synthesize(spec, clf4, gen64)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.trace_csv() == b.trace_csv()


def test_full_trace_without_early_exit(clf4, gen64, blobs4):
    spec = SynthesisSpec(x_d=blobs4.x[0].reshape(8, 8), p_d=np.eye(4)[1], delta_s=1.0,
                         delta_c=1.0, max_iters=25)
    res = synthesize(spec, clf4, gen64, early_exit=False)
    assert res.iterations == 25 and res.satisfied
