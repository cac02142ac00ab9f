"""Every differentiable op must agree with central finite differences."""

import numpy as np
import pytest

from gaitxfer.numerics import (
    Tensor,
    avg_pool_same,
    batchnorm1d,
    channel_concat,
    conv1d,
    dense_affine,
    dropout,
    global_avg_pool,
    grad_check,
    mse_loss,
    reduce_sum,
    relu,
    softmax_cross_entropy,
)

TOL = 1e-4


def _param(rng, shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_linear_function_is_exact():
    w = Tensor(np.array([2.0]), requires_grad=True)

    def f():
        return reduce_sum(dense_affine(Tensor([[3.0]]), w.data.reshape(1, 1) * 0 + w, Tensor([0.0])))

    # a purely linear map: central differences are exact up to rounding
    w2 = Tensor(np.array([[2.0]]), requires_grad=True)

    def g():
        return reduce_sum(dense_affine(Tensor([[3.0]]), w2, Tensor([0.0])))

    assert grad_check(g, {"w": w2}) < 1e-9


def test_dense_relu_mse_chain():
    rng = np.random.default_rng(20)
    w = _param(rng, (5, 4))
    b = _param(rng, (4,))
    x = Tensor(rng.normal(size=(3, 5)))
    target = Tensor(rng.normal(size=(3, 4)))

    def f():
        return mse_loss(relu(dense_affine(x, w, b)), target)

    assert grad_check(f, {"w": w, "b": b}) <= TOL


def test_conv1d_width7():
    rng = np.random.default_rng(21)
    x = _param(rng, (3, 50))
    k = _param(rng, (4, 3, 7))
    b = _param(rng, (4,))
    target = Tensor(rng.normal(size=(4, 50)))

    def f():
        return mse_loss(conv1d(x, k, b), target)

    assert grad_check(f, {"x": x, "k": k, "b": b}) <= TOL


def test_conv1d_batched():
    rng = np.random.default_rng(22)
    x = _param(rng, (2, 3, 9))
    k = _param(rng, (2, 3, 3))
    b = _param(rng, (2,))
    target = Tensor(rng.normal(size=(2, 2, 9)))

    def f():
        return mse_loss(conv1d(x, k, b), target)

    assert grad_check(f, {"x": x, "k": k, "b": b}) <= TOL


def test_global_avg_pool():
    rng = np.random.default_rng(23)
    x = _param(rng, (6, 11))
    target = Tensor(rng.normal(size=(6,)))

    def f():
        return mse_loss(global_avg_pool(x), target)

    assert grad_check(f, {"x": x}) <= TOL


def test_avg_pool_same():
    rng = np.random.default_rng(24)
    x = _param(rng, (2, 13))
    target = Tensor(rng.normal(size=(2, 13)))

    for width in (2, 3):
        def f():
            return mse_loss(avg_pool_same(x, width), target)

        assert grad_check(f, {"x": x}) <= TOL


def test_channel_concat():
    rng = np.random.default_rng(25)
    a = _param(rng, (2, 6))
    b = _param(rng, (3, 6))
    target = Tensor(rng.normal(size=(5, 6)))

    def f():
        return mse_loss(channel_concat(a, b), target)

    assert grad_check(f, {"a": a, "b": b}) <= TOL


def test_concat_gradient_of_sum_equals_per_source():
    rng = np.random.default_rng(26)
    a = _param(rng, (2, 4))
    b = _param(rng, (1, 4))

    def f():
        return reduce_sum(channel_concat(a, b))

    assert grad_check(f, {"a": a, "b": b}) <= TOL
    f().backward()
    np.testing.assert_allclose(a.grad, np.ones((2, 4)))
    np.testing.assert_allclose(b.grad, np.ones((1, 4)))


def test_dropout_off_path():
    rng = np.random.default_rng(27)
    x = _param(rng, (3, 8))
    target = Tensor(rng.normal(size=(3, 8)))

    def f():
        return mse_loss(dropout(x, 0.2, training=False), target)

    assert grad_check(f, {"x": x}) <= TOL


def test_dropout_fixed_mask_path():
    rng = np.random.default_rng(28)
    x = _param(rng, (3, 8))
    target = Tensor(rng.normal(size=(3, 8)))

    def f():
        # same seed every call: the mask is constant, so f is differentiable
        return mse_loss(dropout(x, 0.4, training=True, rng=np.random.default_rng(5)), target)

    assert grad_check(f, {"x": x}) <= TOL


def test_batchnorm_training_mode():
    rng = np.random.default_rng(29)
    x = _param(rng, (4, 3, 7))
    gamma = Tensor(rng.uniform(0.5, 1.5, size=3), requires_grad=True)
    beta = _param(rng, (3,))
    target = Tensor(rng.normal(size=(4, 3, 7)))

    def f():
        rm, rv = np.zeros(3), np.ones(3)  # fresh buffers: no state bleed between calls
        return mse_loss(batchnorm1d(x, gamma, beta, rm, rv, training=True), target)

    assert grad_check(f, {"x": x, "gamma": gamma, "beta": beta}) <= TOL


def test_batchnorm_inference_mode():
    rng = np.random.default_rng(30)
    x = _param(rng, (2, 3, 5))
    gamma = Tensor(rng.uniform(0.5, 1.5, size=3), requires_grad=True)
    beta = _param(rng, (3,))
    rm = rng.normal(size=3)
    rv = rng.uniform(0.5, 2.0, size=3)
    target = Tensor(rng.normal(size=(2, 3, 5)))

    def f():
        return mse_loss(batchnorm1d(x, gamma, beta, rm.copy(), rv.copy(), training=False), target)

    assert grad_check(f, {"x": x, "gamma": gamma, "beta": beta}) <= TOL


def test_softmax_cross_entropy_grad():
    rng = np.random.default_rng(31)
    logits = _param(rng, (5, 3))
    labels = rng.integers(0, 3, size=5)

    def f():
        return softmax_cross_entropy(logits, labels)

    assert grad_check(f, {"logits": logits}) <= TOL


def test_mse_both_sides():
    rng = np.random.default_rng(32)
    p = _param(rng, (3, 4))
    t = _param(rng, (3, 4))

    def f():
        return mse_loss(p, t)

    assert grad_check(f, {"p": p, "t": t}) <= TOL


def test_gradient_accumulates_over_shared_use():
    # x used twice: gradients from both paths must accumulate
    x = Tensor(np.array([[1.5]]), requires_grad=True)

    def f():
        y = dense_affine(x, Tensor(np.array([[2.0]])), Tensor(np.array([0.0])))
        z = dense_affine(x, Tensor(np.array([[3.0]])), Tensor(np.array([0.0])))
        return reduce_sum(channel_concat(y, z))

    assert grad_check(f, {"x": x}) <= TOL
    f().backward()
    np.testing.assert_allclose(x.grad, [[5.0]])


def test_non_finite_reported_with_name():
    w = Tensor(np.array([[np.inf]]), requires_grad=True)

    def f():
        return reduce_sum(dense_affine(Tensor([[1.0]]), w, Tensor([0.0])))

    with pytest.raises(ValueError):
        grad_check(f, {"w": w})
