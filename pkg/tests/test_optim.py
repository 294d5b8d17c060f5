"""Adam update rule and the warmup / inverse-sqrt schedule."""

import math

import numpy as np
import pytest

from taskdial import tensor as T
from taskdial.nn import ParamStore
from taskdial.optim import Adam, lr_at
from taskdial.tensor import Tensor


def test_lr_warmup_linear_then_decay():
    peak, warm = 1.0, 100
    assert lr_at(1, peak, warm) == pytest.approx(0.01)
    assert lr_at(50, peak, warm) == pytest.approx(0.5)
    assert lr_at(100, peak, warm) == pytest.approx(1.0)
    assert lr_at(400, peak, warm) == pytest.approx(0.5)


def test_lr_continuous_and_nonincreasing_after_peak():
    peak, warm = 3e-4, 37
    left = lr_at(warm, peak, warm)
    right = lr_at(warm + 1, peak, warm)
    assert abs(left - peak) < 1e-12
    assert right <= left
    vals = [lr_at(s, peak, warm) for s in range(warm, warm + 500)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_lr_rejects_step_zero():
    with pytest.raises(ValueError):
        lr_at(0, 1.0, 10)


def test_adam_first_step_size_is_lr():
    # with bias correction the first update is lr * sign(g) for any g
    store = ParamStore(0)
    p = store.uniform("p", (3,))
    start = p.data.copy()
    opt = Adam(store, lr=0.1)
    p.grad = np.array([1e-4, -2.0, 5.0], dtype=np.float32)
    opt.step()
    np.testing.assert_allclose(start - p.data, [0.1, -0.1, 0.1], rtol=1e-3)


def test_adam_matches_reference_implementation():
    store = ParamStore(1)
    p = store.uniform("p", (4,))
    ref = p.data.astype(np.float64).copy()
    opt = Adam(store, lr=0.01)
    rng = np.random.default_rng(0)
    m = np.zeros(4)
    v = np.zeros(4)
    for t in range(1, 6):
        g = rng.normal(size=4)
        p.grad = g.astype(np.float32)
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat = m / (1 - 0.9**t)
        vhat = v / (1 - 0.999**t)
        ref = ref - 0.01 * mhat / (np.sqrt(vhat) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-4, atol=1e-6)


def test_step_clears_grads_and_skips_untouched():
    store = ParamStore(2)
    a = store.uniform("a", (2,))
    b = store.uniform("b", (2,))
    b_before = b.data.copy()
    opt = Adam(store)
    a.grad = np.ones(2, dtype=np.float32)
    opt.step()
    assert a.grad is None and b.grad is None
    np.testing.assert_array_equal(b.data, b_before)


def test_adam_converges_on_quadratic():
    store = ParamStore(3)
    p = store.uniform("p", (5,))
    target = np.arange(5, dtype=np.float32)
    opt = Adam(store, lr=0.05)
    for _ in range(400):
        diff = T.sub(p, Tensor(target))
        loss = T.tsum(T.mul(diff, diff))
        loss.backward()
        opt.step()
    np.testing.assert_allclose(p.data, target, atol=1e-2)


def test_optimizer_state_roundtrip():
    store = ParamStore(4)
    p = store.uniform("p", (3,))
    opt = Adam(store, lr=0.01)
    p.grad = np.ones(3, dtype=np.float32)
    opt.step()
    saved = {k: v.copy() for k, v in opt.state_arrays().items()}

    store2 = ParamStore(5)
    store2.uniform("p", (3,))
    opt2 = Adam(store2, lr=0.01)
    opt2.load_arrays(saved)
    assert opt2.t == 1
    np.testing.assert_array_equal(opt2._m["p"], opt._m["p"])
    np.testing.assert_array_equal(opt2._v["p"], opt._v["p"])
