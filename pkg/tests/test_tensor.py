"""Autodiff core: op semantics, broadcasting grads, exact-zero masking."""

import numpy as np
import pytest

from taskdial import tensor as T
from taskdial.errors import NumericsError, ShapeError
from taskdial.tensor import Tensor


def t(data, grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


def test_add_broadcast_grad():
    a = t(np.ones((3, 4)))
    b = t(np.ones((4,)))
    out = T.tsum(T.add(a, b))
    out.backward()
    assert a.grad.shape == (3, 4)
    assert b.grad.shape == (4,)
    np.testing.assert_allclose(b.grad, 3.0 * np.ones(4))


def test_mul_scalar_and_neg():
    a = t([1.0, 2.0])
    out = T.tsum(-a * 3.0)
    out.backward()
    np.testing.assert_allclose(a.grad, [-3.0, -3.0])


def test_matmul_shape_error_names_shapes():
    a = t(np.ones((2, 3)))
    b = t(np.ones((4, 2)))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        T.matmul(a, b)


def test_matmul_batched_grad():
    rng = np.random.default_rng(0)
    a = t(rng.normal(size=(2, 3, 4)))
    b = t(rng.normal(size=(4, 5)))
    out = T.tsum(T.matmul(a, b))
    out.backward()
    assert a.grad.shape == (2, 3, 4)
    assert b.grad.shape == (4, 5)
    np.testing.assert_allclose(b.grad, a.data.reshape(-1, 4).sum(axis=0)[:, None] * np.ones((4, 5)))


def test_backward_requires_scalar():
    a = t(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        a.backward()


def test_diamond_graph_accumulates():
    # y = x*x + x*x reuses x twice through two paths
    x = t([3.0])
    y = T.add(T.mul(x, x), T.mul(x, x))
    T.tsum(y).backward()
    np.testing.assert_allclose(x.grad, [12.0])


def test_grad_accumulation_not_aliased():
    # two consumers of a narrow view must not share a buffer
    x = t(np.arange(6, dtype=np.float64).reshape(2, 3))
    left = T.narrow(x, 1, 0, 2)
    out = T.add(T.tsum(left), T.tsum(T.mul(left, 2.0)))
    out.backward()
    np.testing.assert_allclose(x.grad, [[3.0, 3.0, 0.0], [3.0, 3.0, 0.0]])


def test_concat_and_narrow_roundtrip_grads():
    a = t(np.ones((2, 2)))
    b = t(np.ones((2, 3)))
    cat = T.concat([a, b], axis=1)
    T.tsum(T.mul(T.narrow(cat, 1, 1, 3), 5.0)).backward()
    np.testing.assert_allclose(a.grad, [[0.0, 5.0], [0.0, 5.0]])
    np.testing.assert_allclose(b.grad, [[5.0, 5.0, 0.0], [5.0, 5.0, 0.0]])


def test_index_select_repeated_rows_sum():
    w = t(np.eye(3))
    out = T.index_select(w, 0, np.array([1, 1, 2]))
    T.tsum(out).backward()
    # row 1 gathered twice: its grad row is 2s, row 2 once: 1s, row 0 untouched
    np.testing.assert_allclose(w.grad, [[0.0] * 3, [2.0] * 3, [1.0] * 3])


def test_embed_scatter_adds():
    w = t(np.zeros((4, 2)))
    ids = np.array([[0, 1], [1, 3]])
    out = T.embed(w, ids)
    assert out.shape == (2, 2, 2)
    T.tsum(out).backward()
    np.testing.assert_allclose(w.grad, [[1, 1], [2, 2], [0, 0], [1, 1]])


def test_softmax_rows_sums_to_one():
    x = t(np.random.default_rng(1).normal(size=(3, 5)))
    s = T.softmax_rows(x)
    np.testing.assert_allclose(s.data.sum(axis=-1), np.ones(3), rtol=1e-12)


def test_masked_softmax_exact_zero_and_renormalized():
    x = t(np.array([[1.0, 2.0, 3.0]]))
    mask = np.array([[True, False, True]])
    s = T.masked_softmax(x, mask)
    assert s.data[0, 1] == 0.0
    np.testing.assert_allclose(s.data.sum(), 1.0, rtol=1e-12)
    # masked weight matches softmax over the surviving logits
    keep = np.exp([1.0, 3.0])
    np.testing.assert_allclose(s.data[0, [0, 2]], keep / keep.sum(), rtol=1e-12)


def test_masked_softmax_dead_row_all_zero():
    x = t(np.array([[1.0, 2.0], [3.0, 4.0]]))
    mask = np.array([[False, False], [True, True]])
    s = T.masked_softmax(x, mask)
    assert np.all(s.data[0] == 0.0)
    np.testing.assert_allclose(s.data[1].sum(), 1.0, rtol=1e-12)
    T.tsum(s).backward()
    assert np.all(np.isfinite(x.grad))
    assert np.all(x.grad[0] == 0.0)


def test_layer_norm_zero_mean_unit_var():
    x = t(np.random.default_rng(2).normal(size=(4, 8)))
    gain = t(np.ones(8))
    bias = t(np.zeros(8))
    y = T.layer_norm(x, gain, bias)
    np.testing.assert_allclose(y.data.mean(axis=-1), np.zeros(4), atol=1e-7)
    np.testing.assert_allclose(y.data.std(axis=-1), np.ones(4), atol=1e-3)


def test_dropout_inverted_scaling_and_grad_mask():
    rng = np.random.default_rng(3)
    x = t(np.ones((1000,)))
    y = T.dropout(x, 0.3, rng)
    kept = y.data != 0.0
    np.testing.assert_allclose(y.data[kept], 1.0 / 0.7, rtol=1e-6)
    assert 0.6 < kept.mean() < 0.8
    T.tsum(y).backward()
    assert np.all((x.grad == 0.0) == ~kept)


def test_dropout_rate_zero_is_identity():
    x = t(np.ones(5))
    y = T.dropout(x, 0.0, np.random.default_rng(0))
    assert y is x


def test_cross_entropy_matches_manual():
    logits = t(np.array([[2.0, 0.0, -1.0], [0.5, 0.5, 0.5]]))
    targets = np.array([0, 2])
    loss = T.cross_entropy_smoothed(logits, targets)
    p = np.exp(logits.data) / np.exp(logits.data).sum(axis=-1, keepdims=True)
    expect = -(np.log(p[0, 0]) + np.log(p[1, 2])) / 2.0
    np.testing.assert_allclose(loss.item(), expect, rtol=1e-10)


def test_cross_entropy_pad_excluded():
    logits = t(np.array([[2.0, 0.0], [9.0, 0.0], [0.0, 3.0]]))
    # middle row is padding and must not affect the mean
    full = T.cross_entropy_smoothed(logits, np.array([0, 0, 1]), pad_index=0).item()
    sub = t(logits.data[[2]])
    only = T.cross_entropy_smoothed(sub, np.array([1])).item()
    np.testing.assert_allclose(full, only, rtol=1e-10)


def test_cross_entropy_smoothing_distribution():
    # smoothed loss equals cross-entropy against (1-eps)*onehot + eps/V
    rng = np.random.default_rng(4)
    logits = t(rng.normal(size=(3, 5)))
    targets = np.array([1, 4, 0])
    eps = 0.1
    loss = T.cross_entropy_smoothed(logits, targets, smoothing=eps).item()
    logp = logits.data - np.log(np.exp(logits.data).sum(axis=-1, keepdims=True))
    q = np.full((3, 5), eps / 5)
    q[np.arange(3), targets] += 1 - eps
    np.testing.assert_allclose(loss, -(q * logp).sum(axis=-1).mean(), rtol=1e-9)


def test_cross_entropy_out_of_range_raises():
    logits = t(np.zeros((1, 3)))
    with pytest.raises(IndexError):
        T.cross_entropy_smoothed(logits, np.array([3]))


def test_bce_matches_manual_and_clamps():
    p = t(np.array([0.9, 0.1]))
    y = np.array([1.0, 0.0])
    loss = T.binary_cross_entropy(p, y)
    np.testing.assert_allclose(loss.item(), -np.log(0.9), rtol=1e-7)
    extreme = t(np.array([0.0, 1.0]))
    val = T.binary_cross_entropy(extreme, np.array([1.0, 0.0]))
    assert np.isfinite(val.item())


def test_finiteness_check_raises():
    a = Tensor(np.array([1e300], dtype=np.float64), requires_grad=True)
    with pytest.raises(NumericsError), np.errstate(over="ignore"):
        T.mul(T.mul(a, 1e300), 1e300)


def test_finite_checks_can_be_disabled():
    a = Tensor(np.array([np.inf]), requires_grad=False)
    with T.finite_checks(False):
        out = T.mul(a, 1.0)
    assert np.isinf(out.data[0])


def test_no_grad_builds_no_graph():
    a = t([1.0])
    with T.no_grad():
        out = T.mul(a, 2.0)
    assert not out.requires_grad
    assert out._parents == ()


def test_deep_chain_iterative_backward():
    # depth well past the default recursion limit
    x = t([1.0])
    y = x
    for _ in range(5000):
        y = T.add(y, 0.0)
    T.tsum(y).backward()
    np.testing.assert_allclose(x.grad, [1.0])


def test_positional_encoding_values():
    pe = T.positional_encoding(4, 6, dtype=np.float64)
    assert pe.shape == (4, 6)
    np.testing.assert_allclose(pe[0], [0, 1, 0, 1, 0, 1], atol=1e-12)
    np.testing.assert_allclose(pe[2, 0], np.sin(2.0), rtol=1e-12)
    np.testing.assert_allclose(pe[3, 1], np.cos(3.0), rtol=1e-12)
    np.testing.assert_allclose(pe[1, 2], np.sin(1.0 / 10000.0 ** (2.0 / 6.0)), rtol=1e-12)


def test_default_dtype_switch():
    with T.use_dtype(np.float64):
        a = T.as_tensor([1.0])
        assert a.dtype == np.float64
    b = T.as_tensor([1.0])
    assert b.dtype == np.float32
