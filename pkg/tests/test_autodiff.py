"""Op-by-op checks of the reverse-mode core against numpy and finite differences."""

import numpy as np
import pytest
from fdcheck import fd_check

from liftfix import autodiff as ad


def test_values_match_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4,))
    va, vb = ad.var(a), ad.var(b)
    out = (va * vb + va / 2.0 - vb) * 3.0
    np.testing.assert_allclose(out.value, (a * b + a / 2.0 - b) * 3.0)


def test_arithmetic_gradients_with_broadcasting():
    rng = np.random.default_rng(1)
    leaves = {"a": rng.normal(size=(3, 1)), "b": rng.normal(size=(4,)), "c": rng.normal(size=(3, 4))}

    def build(v):
        return ad.vsum((v["a"] * v["b"] - v["c"]) / (2.0 + ad.exp(v["a"])))

    fd_check(build, leaves)


def test_broadcast_gradient_reduces_exactly():
    a = np.arange(6.0).reshape(2, 3)
    b = ad.var(np.ones(3))
    out = ad.vsum(ad.const(a) * b)
    ad.backward(out)
    np.testing.assert_array_equal(b.grad, a.sum(axis=0))


def test_scalar_operand_sugar():
    x = ad.var(np.array([1.0, 2.0]))
    out = ad.vsum((2.0 * x + 1.0) / 4.0 - (1.0 - x))
    ad.backward(out)
    np.testing.assert_allclose(x.grad, np.full(2, 2.0 / 4.0 + 1.0))
    assert out.item() == pytest.approx((3.0 / 4.0 + 5.0 / 4.0) - (0.0 - 1.0))


def test_neg_and_rsub():
    x = ad.var(np.array(3.0))
    out = -x + (5.0 - x)
    ad.backward(out)
    assert out.item() == pytest.approx(-1.0)
    assert x.grad == pytest.approx(-2.0)


@pytest.mark.parametrize("op", [ad.log, ad.exp, ad.sigmoid])
def test_unary_gradients(op):
    rng = np.random.default_rng(2)
    x = rng.uniform(0.2, 2.0, size=(2, 3))
    fd_check(lambda v: ad.vsum(op(v["x"])), {"x": x})


def test_sigmoid_is_stable_at_extremes():
    x = ad.var(np.array([-1000.0, 0.0, 1000.0]))
    with np.errstate(over="raise"):
        out = ad.sigmoid(x)
        ad.backward(ad.vsum(out))
    np.testing.assert_allclose(out.value, [0.0, 0.5, 1.0])
    assert np.all(np.isfinite(x.grad))


def test_div_gradients():
    rng = np.random.default_rng(3)
    leaves = {"a": rng.normal(size=(3,)), "b": rng.uniform(0.5, 2.0, size=(3,))}
    fd_check(lambda v: ad.vsum(v["a"] / v["b"]), leaves)


def test_clip_interior_gradient():
    x = np.array([0.3, 0.5, 0.7])
    fd_check(lambda v: ad.vsum(ad.clip(v["x"], 0.0, 1.0) * ad.clip(v["x"], 0.0, 1.0)), {"x": x})


def test_clip_blocks_gradient_outside():
    x = ad.var(np.array([-0.5, 0.5, 1.5]))
    out = ad.vsum(ad.clip(x, 0.0, 1.0))
    ad.backward(out)
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(out.value, 0.0 + 0.5 + 1.0)


@pytest.mark.parametrize("axis,keepdims", [(None, False), (0, False), (1, False), (1, True)])
def test_vsum_axes(axis, keepdims):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3))
    expected = x.sum(axis=axis, keepdims=keepdims)
    got = ad.vsum(ad.const(x), axis=axis, keepdims=keepdims).value
    np.testing.assert_allclose(got, expected)
    fd_check(lambda v: ad.vsum(ad.vsum(v["x"], axis=axis, keepdims=keepdims) * 2.0), {"x": x})


def test_vmean_matches_numpy():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 5))
    np.testing.assert_allclose(ad.vmean(ad.const(x)).value, x.mean())
    np.testing.assert_allclose(ad.vmean(ad.const(x), axis=1).value, x.mean(axis=1))
    fd_check(lambda v: ad.vsum(ad.vmean(v["x"], axis=0)), {"x": x})


def test_softmax_rows_are_distributions():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(4, 5)) * 10.0
    out = ad.softmax(ad.const(x), axis=-1).value
    np.testing.assert_allclose(out.sum(axis=-1), np.ones(4), atol=1e-12)
    assert np.all(out >= 0)


def test_softmax_shift_invariance():
    x = np.array([[1.0, 2.0, 3.0]])
    a = ad.softmax(ad.const(x)).value
    b = ad.softmax(ad.const(x + 1000.0)).value
    np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("axis", [-1, 0])
def test_softmax_gradients(axis):
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 4))

    def build(v):
        return ad.vsum(ad.softmax(v["x"], axis=axis) * ad.const(w))

    fd_check(build, {"x": x})


@pytest.mark.parametrize(
    "sa,sb",
    [((2, 3), (3, 4)), ((2, 3), (3,)), ((3,), (3, 4)), ((3,), (3,))],
)
def test_matmul_gradients_all_shapes(sa, sb):
    rng = np.random.default_rng(8)
    leaves = {"a": rng.normal(size=sa), "b": rng.normal(size=sb)}

    def build(v):
        out = ad.matmul(v["a"], v["b"])
        return ad.vsum(out * out)

    fd_check(build, leaves)
    got = ad.matmul(ad.const(leaves["a"]), ad.const(leaves["b"])).value
    np.testing.assert_allclose(got, leaves["a"] @ leaves["b"])


def test_reshape_roundtrip_gradient():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(2, 6))
    fd_check(lambda v: ad.vsum(ad.reshape(v["x"], (3, 4)) * 2.0), {"x": x})
    assert ad.reshape(ad.const(x), (-1,)).value.shape == (12,)


@pytest.mark.parametrize("axis", [0, 1])
def test_concat_values_and_gradients(axis):
    rng = np.random.default_rng(10)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 3))
    got = ad.concat([ad.const(a), ad.const(b)], axis=axis).value
    np.testing.assert_allclose(got, np.concatenate([a, b], axis=axis))
    w = rng.normal(size=got.shape)
    fd_check(lambda v: ad.vsum(ad.concat([v["a"], v["b"]], axis=axis) * ad.const(w)), {"a": a, "b": b})


def test_gather_accumulates_duplicates():
    x = ad.var(np.array([1.0, 2.0, 3.0]))
    idx = np.array([0, 2, 2, 1])
    out = ad.gather(x, idx)
    np.testing.assert_array_equal(out.value, [1.0, 3.0, 3.0, 2.0])
    ad.backward(ad.vsum(out))
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 2.0])
    fd_check(lambda v: ad.vsum(ad.gather(v["x"], idx) * ad.const(np.array([1.0, 2.0, 3.0, 4.0]))),
             {"x": np.array([1.0, 2.0, 3.0])})


def test_gather_rows():
    x = np.arange(12.0).reshape(4, 3)
    out = ad.gather(ad.const(x), np.array([3, 0]))
    np.testing.assert_array_equal(out.value, x[[3, 0]])


def test_scatter_distinct_is_plain_placement():
    v = ad.var(np.array([0.2, 0.9]))
    out = ad.scatter_combine(v, np.array([3, 1]), 5)
    np.testing.assert_array_equal(out.value, [0.0, 0.9, 0.0, 0.2, 0.0])
    ad.backward(ad.vsum(out * ad.const(np.arange(5.0))))
    np.testing.assert_array_equal(v.grad, [3.0, 1.0])


def test_scatter_duplicate_indices_combine_by_noisy_or():
    vals = np.array([0.3, 0.4, 0.2])
    idx = np.array([0, 0, 2])
    out = ad.scatter_combine(ad.const(vals), idx, 3).value
    np.testing.assert_allclose(out, [1.0 - 0.7 * 0.6, 0.0, 0.2])
    w = np.array([1.0, 5.0, 2.0])
    fd_check(lambda v: ad.vsum(ad.scatter_combine(v["x"], idx, 3) * ad.const(w)), {"x": vals})


def test_shared_subgraph_counted_once():
    x = ad.var(np.array(3.0))
    y = x * x
    z = y + y
    ad.backward(z)
    assert x.grad == pytest.approx(4.0 * 3.0)


def test_diamond_graph_gradient():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(4,))

    def build(v):
        s = ad.sigmoid(v["x"])
        return ad.vsum(s * s + ad.log(s + 1.0))

    fd_check(build, {"x": x})


def test_stop_gradient_blocks_flow():
    x = ad.var(np.array([1.0, 2.0]))
    out = ad.vsum(ad.stop_gradient(x * 2.0) * x)
    ad.backward(out)
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_const_leaves_get_no_grad():
    c = ad.const(np.ones(3))
    x = ad.var(np.ones(3))
    ad.backward(ad.vsum(c * x))
    assert c.grad is None
    np.testing.assert_array_equal(x.grad, np.ones(3))


def test_backward_rejects_non_scalar():
    x = ad.var(np.ones(3))
    with pytest.raises(ValueError):
        ad.backward(x * 2.0)
