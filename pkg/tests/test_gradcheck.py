"""Finite-difference verification of every differentiable op and layer."""

import numpy as np
import pytest

from taskdial import tensor as T
from taskdial.gradcheck import check_gradients
from taskdial.nn import GRUCell, MultiHeadAttention, NetContext, ParamStore
from taskdial.tensor import Tensor


@pytest.fixture(autouse=True)
def f64():
    with T.use_dtype(np.float64):
        yield


def p(rng, shape):
    return Tensor(rng.normal(size=shape) * 0.5, requires_grad=True)


def test_arithmetic_ops():
    rng = np.random.default_rng(0)
    a = p(rng, (3, 4))
    b = p(rng, (4,))

    def fn():
        x = T.add(T.mul(a, b), T.sub(a, 2.0))
        return T.tsum(T.mul(x, x))

    assert check_gradients(fn, [a, b]) < 1e-6


def test_matmul_and_shapes():
    rng = np.random.default_rng(1)
    a = p(rng, (2, 3, 4))
    b = p(rng, (4, 5))

    def fn():
        x = T.matmul(a, b)
        x = T.reshape(x, (6, 5))
        x = T.transpose(x, (1, 0))
        return T.tsum(T.mul(x, x))

    assert check_gradients(fn, [a, b]) < 1e-6


def test_concat_narrow_expand():
    rng = np.random.default_rng(2)
    a = p(rng, (2, 3))
    b = p(rng, (2, 2))

    def fn():
        cat = T.concat([a, b], axis=1)
        cut = T.narrow(cat, 1, 1, 3)
        big = T.expand(T.reshape(cut, (2, 1, 3)), (2, 4, 3))
        return T.tsum(T.mul(big, big))

    assert check_gradients(fn, [a, b]) < 1e-6


def test_gather_ops():
    rng = np.random.default_rng(3)
    w = p(rng, (6, 4))
    ids = np.array([[0, 2], [2, 5]])

    def fn():
        e = T.embed(w, ids)
        s = T.index_select(w, 0, np.array([1, 1, 3]))
        return T.add(T.tsum(T.mul(e, e)), T.tsum(T.mul(s, 3.0)))

    assert check_gradients(fn, [w]) < 1e-6


def test_pointwise_and_softmaxes():
    rng = np.random.default_rng(4)
    a = p(rng, (3, 5))
    mask = np.array(
        [[True, True, False, True, True],
         [False, False, False, False, False],
         [True, False, True, False, True]]
    )

    def fn():
        s = T.sigmoid(a)
        t_ = T.tanh(a)
        sm = T.softmax_rows(a)
        ms = T.masked_softmax(a, mask)
        ls = T.log_softmax_rows(a)
        total = T.tsum(T.mul(s, t_))
        total = T.add(total, T.tsum(T.mul(sm, 2.0)))
        total = T.add(total, T.tsum(T.mul(ms, ms)))
        return T.add(total, T.tsum(T.mul(ls, 0.1)))

    assert check_gradients(fn, [a]) < 1e-6


def test_layer_norm():
    rng = np.random.default_rng(5)
    a = p(rng, (4, 6))
    gain = Tensor(rng.normal(size=(6,)) * 0.5 + 1.0, requires_grad=True)
    bias = Tensor(rng.normal(size=(6,)) * 0.1, requires_grad=True)

    def fn():
        y = T.layer_norm(a, gain, bias)
        return T.tsum(T.mul(y, y))

    assert check_gradients(fn, [a, gain, bias]) < 1e-6


def test_losses():
    rng = np.random.default_rng(6)
    logits = p(rng, (5, 7))
    targets = np.array([0, 3, 6, 0, 2])
    probs = Tensor(rng.uniform(0.05, 0.95, size=(4,)), requires_grad=True)
    y = np.array([1.0, 0.0, 1.0, 0.0])

    def fn():
        ce = T.cross_entropy_smoothed(logits, targets, smoothing=0.1, pad_index=0)
        bce = T.binary_cross_entropy(T.sigmoid(probs), y)
        return T.add(ce, bce)

    assert check_gradients(fn, [logits, probs]) < 1e-6


def test_attention_sublayer_end_to_end():
    store = ParamStore(7)
    ctx = NetContext(store, dropout=0.0)
    ctx.training = False
    att = MultiHeadAttention(ctx, "att", d=6, n_heads=2)
    rng = np.random.default_rng(8)
    kv = p(rng, (4, 6))
    q = p(rng, (3, 6))
    mask = np.array([[True, True, False, True]] * 3)
    params = [kv, q] + [t for _, t in store.items()]

    def fn():
        out, _ = att(kv, q, mask)
        return T.tsum(T.mul(out, out))

    assert check_gradients(fn, params) < 1e-5


def test_gru_cell():
    store = ParamStore(9)
    ctx = NetContext(store, dropout=0.0)
    cell = GRUCell(ctx, "gru", d_in=3, d_h=4)
    rng = np.random.default_rng(10)
    x = p(rng, (2, 3))
    h0 = p(rng, (2, 4))
    params = [x, h0] + [t for _, t in store.items()]

    def fn():
        h = cell(x, h0)
        h = cell(x, h)
        return T.tsum(T.mul(h, h))

    assert check_gradients(fn, params) < 1e-5


def test_sampled_coordinates_are_deterministic():
    rng = np.random.default_rng(11)
    a = p(rng, (20, 20))

    def fn():
        return T.tsum(T.mul(a, a))

    e1 = check_gradients(fn, [a], max_coords_per_param=10, rng=np.random.default_rng(0))
    e2 = check_gradients(fn, [a], max_coords_per_param=10, rng=np.random.default_rng(0))
    assert e1 == e2 < 1e-8
