import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from silogstab.optimkit import AdamState, LrSchedule, adam_step, lr_at


def _params():
    return {"W": np.array([0.5, -1.0, 2.0], np.float32), "b": np.float32(0.1)}


def test_zero_gradient_leaves_params():
    st_ = AdamState(lr=1e-2)
    p = _params()
    out = adam_step(st_, p, {"W": np.zeros(3, np.float32), "b": np.float32(0)})
    np.testing.assert_array_equal(out["W"], p["W"])
    assert out["b"] == p["b"] and st_.t == 1


def test_constant_gradient_step_is_lr_sign():
    st_ = AdamState(lr=1e-3)
    p = _params()
    g = {"W": np.array([3.0, -0.02, 1e3], np.float32), "b": np.float32(-5)}
    for _ in range(200):
        new = adam_step(st_, p, g)
        step = {k: np.asarray(new[k], np.float64) - np.asarray(p[k], np.float64) for k in p}
        p = new
    np.testing.assert_allclose(step["W"], -1e-3 * np.sign(g["W"]), rtol=1e-3)
    assert step["b"] == pytest.approx(1e-3, rel=1e-3)


def test_nan_propagates():
    out = adam_step(AdamState(), _params(), {"W": np.array([np.nan, 0, 0], np.float32), "b": np.float32(0)})
    assert np.isnan(out["W"][0]) and np.isfinite(out["W"][1:]).all()


def test_dtypes_and_validation():
    out = adam_step(AdamState(), _params(), {"W": np.ones(3, np.float32), "b": np.float32(1)})
    assert out["W"].dtype == np.float32
    with pytest.raises(ValueError):
        adam_step(AdamState(), _params(), {"W": np.ones(3, np.float32)})
    with pytest.raises(ValueError):
        adam_step(AdamState(), _params(), {"W": np.ones(2, np.float32), "b": np.float32(1)})
    with pytest.raises(ValueError):
        AdamState(beta1=1.0)


@given(st.lists(st.floats(-1e3, 1e3, width=32), min_size=1, max_size=8), st.integers(1, 20))
@settings(max_examples=100, deadline=None)
def test_deterministic_and_finite(gs, steps):
    def run():
        s = AdamState(lr=1e-3)
        p = {"W": np.zeros(len(gs), np.float32)}
        for _ in range(steps):
            p = adam_step(s, p, {"W": np.array(gs, np.float32)})
        return p["W"]

    a, b = run(), run()
    np.testing.assert_array_equal(a, b)
    assert np.isfinite(a).all()


def test_lr_schedules():
    s = LrSchedule.step(0.001, 0.1, 100)
    assert lr_at(s, 0) == 0.001
    assert lr_at(s, 250) == pytest.approx(1e-5, rel=1e-12)
    assert all(lr_at(LrSchedule.constant(0.005), t) == 0.005 for t in (0, 7, 10_000))
    with pytest.raises(ValueError):
        lr_at(s, -1)
    with pytest.raises(ValueError):
        LrSchedule.step(0.001, 0.0, 100)
    with pytest.raises(ValueError):
        LrSchedule.step(0.001, 0.5, 0)
    assert LrSchedule.from_dict(s.to_dict()) == s


@given(st.floats(1e-6, 1.0), st.floats(0.01, 1.0), st.integers(1, 50), st.integers(0, 1000), st.integers(0, 1000))
@settings(max_examples=200, deadline=None)
def test_step_schedule_nonincreasing(lr, factor, every, t1, t2):
    s = LrSchedule.step(lr, factor, every)
    lo, hi = sorted((t1, t2))
    assert lr_at(s, hi) <= lr_at(s, lo)
