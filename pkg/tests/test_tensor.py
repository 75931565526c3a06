"""Tensor engine: forward contracts, finite-difference gradient checks, Adam."""

import numpy as np
import pytest

from wavegen import tensor as T
from wavegen.tensor import Tensor

from _utils import check_grads, fd_gradient, rel_error


def check_grad(make_loss, x, dtype=np.float32):
    """Single-input wrapper around the shared gradient checker."""
    check_grads(lambda ts: make_loss(ts["x"]), {"x": x}, dtype)


# -- conv2d --------------------------------------------------------------------

def test_conv2d_identity_kernel():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(1, 1, 3, 3)).astype(np.float32))
    w = Tensor(np.ones((1, 1, 1, 1), np.float32))
    out = T.conv2d(x, w)
    np.testing.assert_array_equal(out.data, x.data)


def test_conv2d_hand_example():
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], np.float32))
    w = Tensor(np.array([[[[2.0]]]], np.float32))
    b = Tensor(np.array([1.0], np.float32))
    out = T.conv2d(x, w, b)
    np.testing.assert_allclose(out.data[0, 0], [[3.0, 5.0], [7.0, 9.0]])


def test_conv2d_shape_contract():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(2, 3, 8, 8)).astype(np.float32))
    w = Tensor(rng.normal(size=(5, 3, 3, 3)).astype(np.float32))
    out = T.conv2d(x, w, stride=1, padding=1)
    assert out.shape == (2, 5, 8, 8)


def test_conv2d_shape_errors():
    x = Tensor(np.zeros((1, 3, 4, 4), np.float32))
    w_badchan = Tensor(np.zeros((2, 4, 3, 3), np.float32))
    with pytest.raises(ValueError):
        T.conv2d(x, w_badchan)
    w_even = Tensor(np.zeros((2, 3, 2, 2), np.float32))
    with pytest.raises(ValueError):
        T.conv2d(x, w_even)


def test_conv2d_nonfinite_error():
    x = Tensor(np.full((1, 1, 3, 3), np.inf, np.float32))
    w = Tensor(np.ones((1, 1, 3, 3), np.float32))
    with pytest.raises(FloatingPointError):
        T.conv2d(x, w, padding=1)


def test_conv2d_linearity():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(1, 2, 6, 6)).astype(np.float32))
    y = Tensor(rng.normal(size=(1, 2, 6, 6)).astype(np.float32))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)).astype(np.float32))
    a, b = 0.7, -1.3
    lhs = T.conv2d(Tensor(a * x.data + b * y.data), w, padding=1)
    rhs = a * T.conv2d(x, w, padding=1).data + b * T.conv2d(y, w, padding=1).data
    np.testing.assert_allclose(lhs.data, rhs, atol=1e-5)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv2d_grads_vs_fd(stride, padding):
    rng = np.random.default_rng(3)
    arrays = {
        "x": rng.normal(size=(2, 3, 5, 5)),
        "w": rng.normal(size=(4, 3, 3, 3)),
        "b": rng.normal(size=(4,)),
    }
    for dtype in (np.float32, np.float64):
        check_grads(lambda ts: T.tsum(T.tanh(T.conv2d(ts["x"], ts["w"], ts["b"], stride, padding))),
                    arrays, dtype)


# -- resizing ------------------------------------------------------------------

def test_bilinear_constant_and_identity():
    x = Tensor(np.full((1, 2, 3, 3), 7.0, np.float32))
    up = T.bilinear_resize(x, 7, 5)
    np.testing.assert_allclose(up.data, 7.0, atol=1e-6)
    same = T.bilinear_resize(x, 3, 3)
    np.testing.assert_array_equal(same.data, x.data)


def test_bilinear_half_pixel_row():
    x = Tensor(np.array([1.0, 3.0], np.float32).reshape(1, 1, 1, 2))
    out = T.bilinear_resize(x, 1, 4)
    np.testing.assert_allclose(out.data.ravel(), [1.0, 1.5, 2.5, 3.0], atol=1e-6)


def test_nearest_block_replication():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], np.float32).reshape(1, 1, 2, 2))
    out = T.nearest_resize(x, 4, 4)
    want = np.array([[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], np.float32)
    np.testing.assert_array_equal(out.data[0, 0], want)
    same = T.nearest_resize(x, 2, 2)
    np.testing.assert_array_equal(same.data, x.data)


def test_nearest_preserves_value_multiset():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)).astype(np.float32))
    out = T.nearest_resize(x, 8, 8)
    assert out.data.max() == x.data.max()
    assert out.data.min() == x.data.min()
    want = np.sort(np.repeat(x.data.ravel(), 4))
    np.testing.assert_array_equal(np.sort(out.data.ravel()), want)


@pytest.mark.parametrize("resize", [T.bilinear_resize, T.nearest_resize])
def test_resize_grads_vs_fd(resize):
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=(1, 2, 4, 4))
    for dtype in (np.float32, np.float64):
        check_grad(lambda t: T.tsum(T.tanh(resize(t, 7, 3))), x0, dtype)


# -- log_softmax ----------------------------------------------------------------

def test_log_softmax_uniform():
    x = Tensor(np.zeros((1, 4, 2, 2), np.float32))
    out = T.log_softmax(x)
    np.testing.assert_allclose(out.data, np.log(0.25), atol=1e-6)


def test_log_softmax_shift_invariance():
    rng = np.random.default_rng(6)
    x0 = rng.normal(size=(1, 5, 3, 3)).astype(np.float32)
    a = T.log_softmax(Tensor(x0))
    b = T.log_softmax(Tensor(x0 + 100.0))
    np.testing.assert_allclose(a.data, b.data, atol=1e-5)


def test_log_softmax_two_class():
    x = Tensor(np.array([0.0, np.log(3.0)], np.float32).reshape(1, 2, 1, 1))
    out = T.log_softmax(x)
    np.testing.assert_allclose(out.data.ravel(), [np.log(0.25), np.log(0.75)], atol=1e-6)


def test_log_softmax_sums_to_one():
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(scale=3.0, size=(2, 6, 4, 4)).astype(np.float32))
    p = np.exp(T.log_softmax(x).data).sum(axis=1)
    np.testing.assert_allclose(p, 1.0, atol=1e-5)


def test_log_softmax_grad_vs_fd():
    rng = np.random.default_rng(8)
    x0 = rng.normal(size=(1, 3, 2, 2))
    for dtype in (np.float32, np.float64):
        check_grad(lambda t: T.tsum(T.mul(T.log_softmax(t), Tensor(np.arange(12, dtype=dtype).reshape(1, 3, 2, 2)))), x0, dtype)


# -- normalize_features ----------------------------------------------------------

def test_normalize_constant_is_zero():
    x = Tensor(np.full((2, 3, 4, 4), 5.0, np.float32))
    out = T.normalize_features(x, "batch")
    np.testing.assert_allclose(out.data, 0.0, atol=1e-6)


def test_normalize_two_values_instance():
    x = Tensor(np.array([1.0, 3.0], np.float32).reshape(1, 1, 1, 2))
    out = T.normalize_features(x, "instance", eps=1e-12)
    np.testing.assert_allclose(out.data.ravel(), [-1.0, 1.0], atol=1e-4)


@pytest.mark.parametrize("mode", ["batch", "instance"])
def test_normalize_moments(mode):
    rng = np.random.default_rng(9)
    x = Tensor(rng.normal(loc=2.0, scale=3.0, size=(4, 3, 8, 8)).astype(np.float32))
    out = T.normalize_features(x, mode).data
    axes = (0, 2, 3) if mode == "batch" else (2, 3)
    np.testing.assert_allclose(out.mean(axis=axes), 0.0, atol=1e-5)
    np.testing.assert_allclose(out.var(axis=axes), 1.0, atol=1e-3)


@pytest.mark.parametrize("mode", ["batch", "instance"])
def test_normalize_grad_vs_fd(mode):
    rng = np.random.default_rng(10)
    x0 = rng.normal(size=(2, 2, 3, 3))
    coeff = rng.normal(size=(2, 2, 3, 3))
    for dtype in (np.float32, np.float64):
        c = Tensor(coeff.astype(dtype))
        check_grad(lambda t: T.tsum(T.mul(T.normalize_features(t, mode), c)), x0, dtype)


# -- elementwise / shape ops ------------------------------------------------------

@pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "leaky", "tanh", "exp",
                                "softplus", "sigmoid", "concat", "mean", "sum", "narrow"])
def test_elementwise_grads_vs_fd(op):
    rng = np.random.default_rng(hash(op) % 2 ** 31)
    x0 = rng.normal(size=(2, 3, 2, 2))
    y0 = rng.normal(size=(2, 3, 2, 2)) + 3.0  # keep divisors away from 0
    for dtype in (np.float32, np.float64):
        y = Tensor(y0.astype(dtype))
        fns = {
            "add": lambda t: T.tsum(T.tanh(t + y)),
            "sub": lambda t: T.tsum(T.tanh(t - y)),
            "mul": lambda t: T.tsum(T.tanh(t * y)),
            "div": lambda t: T.tsum(T.tanh(t / y)),
            "leaky": lambda t: T.tsum(T.mul(T.leaky_relu(t), y)),
            "tanh": lambda t: T.tsum(T.mul(T.tanh(t), y)),
            "exp": lambda t: T.tsum(T.tanh(T.exp(t))),
            "softplus": lambda t: T.tsum(T.mul(T.softplus(t), y)),
            "sigmoid": lambda t: T.tsum(T.mul(T.sigmoid(t), y)),
            "concat": lambda t: T.tsum(T.tanh(T.concat([t, t * 2.0, y], axis=1))),
            "mean": lambda t: T.tmean(T.mul(t, y)) + T.tsum(T.tmean(t, axis=(2, 3))),
            "sum": lambda t: T.tsum(T.tanh(T.tsum(t, axis=1, keepdims=True))),
            "narrow": lambda t: T.tsum(T.tanh(T.narrow(t, 1, 1, 2))),
        }
        check_grad(fns[op], x0, dtype)


def test_broadcasting_grads_vs_fd():
    rng = np.random.default_rng(11)
    x0 = rng.normal(size=(3, 1, 2))
    big = Tensor(rng.normal(size=(2, 3, 4, 2)).astype(np.float64))
    check_grad(lambda t: T.tsum(T.tanh(t * big)), x0, np.float64)


# -- backward contracts ------------------------------------------------------------

def test_backward_sum_gives_ones():
    w = Tensor(np.random.default_rng(12).normal(size=(3, 4)).astype(np.float32), requires_grad=True)
    T.tsum(w).backward()
    np.testing.assert_array_equal(w.grad.data, np.ones((3, 4), np.float32))


def test_backward_quadratic():
    w = Tensor(np.array([1.0, 2.0, 3.0], np.float32), requires_grad=True)
    T.tsum(w * w).backward()
    np.testing.assert_allclose(w.grad.data, [2.0, 4.0, 6.0])


def test_backward_composite_vs_fd():
    rng = np.random.default_rng(13)
    arrays = {
        "x": rng.normal(size=(1, 2, 4, 4)),
        "w": rng.normal(size=(3, 2, 3, 3)) * 0.5,
    }

    def net(ts):
        h = T.conv2d(ts["x"], ts["w"], padding=1)
        h = T.normalize_features(h, "instance")
        h = T.leaky_relu(h)
        return T.tsum(h * h)

    for dtype in (np.float32, np.float64):
        check_grads(net, arrays, dtype)


def test_backward_requires_scalar():
    w = Tensor(np.ones((2, 2), np.float32), requires_grad=True)
    with pytest.raises(ValueError):
        (w * 2.0).backward()


def test_backward_accumulates():
    w = Tensor(np.array([1.0, 2.0], np.float32), requires_grad=True)
    T.tsum(w).backward()
    T.tsum(w).backward()
    np.testing.assert_array_equal(w.grad.data, [2.0, 2.0])


def test_backward_deterministic():
    rng = np.random.default_rng(14)
    x0 = rng.normal(size=(1, 2, 4, 4)).astype(np.float32)
    w0 = rng.normal(size=(2, 2, 3, 3)).astype(np.float32)

    def run():
        x = Tensor(x0.copy(), requires_grad=True)
        w = Tensor(w0.copy(), requires_grad=True)
        T.tsum(T.tanh(T.conv2d(x, w, padding=1))).backward()
        return x.grad.data.copy(), w.grad.data.copy()

    gx1, gw1 = run()
    gx2, gw2 = run()
    assert np.array_equal(gx1, gx2) and np.array_equal(gw1, gw2)


def test_grad_of_create_graph_second_order():
    # d/dx of (dy/dx) for y = sum(x^3): first grad 3x^2, second 6x
    x = Tensor(np.array([1.0, 2.0, -1.5], np.float64), requires_grad=True)
    y = T.tsum(x * x * x)
    (g,) = T.grad_of(y, [x], create_graph=True)
    np.testing.assert_allclose(g.data, 3.0 * x.data ** 2)
    T.tsum(g).backward()
    np.testing.assert_allclose(x.grad.data, 6.0 * x.data)


def test_second_order_through_conv():
    # r1-style quantity: || d(sum conv(x,w))/dx ||^2 differentiated w.r.t. w
    rng = np.random.default_rng(15)
    x = Tensor(rng.normal(size=(1, 2, 4, 4)).astype(np.float64), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 2, 3, 3)).astype(np.float64), requires_grad=True)

    def penalty():
        out = T.tanh(T.conv2d(x, w, padding=1))
        (gx,) = T.grad_of(T.tsum(out), [x], create_graph=True)
        return T.tsum(gx * gx)

    penalty().backward()
    got = w.grad.data.copy()
    want = fd_gradient(lambda: penalty().item(), w.data, 1e-6)
    assert rel_error(got, want) < 1e-6


# -- Adam ---------------------------------------------------------------------

def test_adam_zero_grad_no_move():
    p = Tensor(np.array([1.0, -2.0], np.float32), requires_grad=True)
    opt = T.Adam({"p": p}, lr=0.1)
    p.grad = Tensor(np.zeros(2, np.float32))
    before = p.data.copy()
    opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_adam_first_step_magnitude():
    p = Tensor(np.array([0.0], np.float32), requires_grad=True)
    opt = T.Adam({"p": p}, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    p.grad = Tensor(np.array([1.0], np.float32))
    opt.step()
    np.testing.assert_allclose(p.data, [-0.1], atol=1e-6)


def test_adam_missing_grad_errors():
    p = Tensor(np.array([1.0], np.float32), requires_grad=True)
    opt = T.Adam({"p": p})
    with pytest.raises(ValueError):
        opt.step()


def reference_adam_quadratic(w0, lr, steps):
    # independent scalar recurrence for f(w) = w^2
    m = v = 0.0
    w = w0
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return w


def test_adam_minimizes_quadratic():
    ref = reference_adam_quadratic(5.0, 0.1, 500)
    assert abs(ref) < 1e-2
    p = Tensor(np.array([5.0], np.float64), requires_grad=True)
    opt = T.Adam({"p": p}, lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        T.tsum(p * p).backward()
        opt.step()
    assert abs(p.data[0]) < 1e-2
    np.testing.assert_allclose(p.data[0], ref, atol=1e-8)
