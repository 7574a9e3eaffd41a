import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boss.errors import ConfigError
from boss.presets import (AttackPreset, make_spec, pd_boundary, pd_confidence, pd_targeted,
                          pd_uniform, random_target)


def test_targeted():
    p = pd_targeted(3, 10)
    assert p.sum() == 1.0 and np.argmax(p) == 3 and p[3] == 1.0
    with pytest.raises(ConfigError):
        pd_targeted(10, 10)


def test_boundary_and_uniform():
    np.testing.assert_array_equal(pd_uniform(4), np.full(4, 0.25))
    np.testing.assert_array_equal(pd_boundary([0, 2], 3), [0.5, 0.0, 0.5])
    np.testing.assert_array_equal(pd_boundary([1], 3), pd_targeted(1, 3))
    with pytest.raises(ConfigError):
        pd_boundary([1, 5], 3)
    with pytest.raises(ConfigError):
        pd_boundary([], 3)


def test_confidence_values():
    p = pd_confidence(0.6, 7, 10)
    assert p[7] == 0.6
    np.testing.assert_allclose(np.delete(p, 7), 0.4 / 9, rtol=0, atol=1e-15)
    np.testing.assert_allclose(pd_confidence(0.1, 2, 10), np.full(10, 0.1), atol=1e-15)
    with pytest.raises(ConfigError):
        pd_confidence(0.6, 0, 1)
    with pytest.raises(ConfigError):
        pd_confidence(1.0, 0, 3)


@given(st.floats(0, 0.999), st.integers(2, 20), st.data())
def test_confidence_is_a_pmf(c_d, M, data):
    f = data.draw(st.integers(0, M - 1))
    p = pd_confidence(c_d, f, M)
    assert abs(p.sum() - 1.0) < 1e-12 and np.all(p >= 0)


def test_random_target_never_true_label():
    rng = np.random.default_rng(0)
    draws = {random_target(4, 10, rng) for _ in range(300)}
    assert 4 not in draws and len(draws) == 9


def test_preset_from_dict_validation():
    assert AttackPreset.from_dict({"variant": "boundary", "B": [1, 2]}).B == (1, 2)
    for bad in ({"variant": "targeted"}, {"variant": "confidence"}, {"variant": "nope"},
                {"t": 1}, {"variant": "targeted", "t": 1, "extra": 2}):
        with pytest.raises(ConfigError):
            AttackPreset.from_dict(bad)
    ens = AttackPreset("ensemble_targets", targets=(1, 2))
    assert [int(np.argmax(p)) for p in ens.pmfs([4, 4])] == [1, 2]
    with pytest.raises(ConfigError):
        ens.pmfs([4])


def test_make_spec_uses_predicted_label(clf4, blobs4):
    x = blobs4.x[0].reshape(8, 8)
    f = clf4.label(x)
    spec = make_spec({"variant": "confidence", "c_d": 0.6}, x, clf4)
    assert int(np.argmax(spec.p_d)) == f and spec.p_d[f] == 0.6
    assert spec.delta_c == 0.2 and spec.delta_s == 0.15


def test_degenerate_target_warns(clf4, blobs4):
    x = blobs4.x[0]
    with pytest.warns(UserWarning):
        make_spec(AttackPreset("targeted", t=clf4.label(x)), x, clf4)


def test_boundary_labels_out_of_range(clf4, blobs4):
    with pytest.raises(ConfigError):
        make_spec(AttackPreset("boundary", B=(0, 4)), blobs4.x[0], clf4)
