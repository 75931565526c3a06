"""Haar DWT/IWT: exact values, round trips, energy, arrangement, gradients."""

import numpy as np
import pytest

from wavegen import tensor as T
from wavegen import wavelet as W
from wavegen.tensor import Tensor

from _utils import check_grads


def rand_tensor(rng, shape, dtype=np.float32):
    return Tensor(rng.normal(size=shape).astype(dtype))


def test_dwt_constant_image():
    x = Tensor(np.ones((1, 1, 4, 4), np.float32))
    wf = W.dwt_channelwise(x)
    assert wf.shape == (1, 4, 2, 2)
    np.testing.assert_allclose(wf.tensor.data[0, 0], 2.0)      # LL
    np.testing.assert_allclose(wf.tensor.data[0, 1:], 0.0)     # LH, HL, HH


def test_dwt_single_block_hand_values():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], np.float32).reshape(1, 1, 2, 2))
    coef = W.dwt_channelwise(x).tensor.data.ravel()
    np.testing.assert_allclose(coef, [5.0, -1.0, -2.0, 0.0])
    assert np.isclose((coef ** 2).sum(), 30.0)
    assert np.isclose((x.data ** 2).sum(), 30.0)


def test_iwt_constant_coefficients():
    c = np.zeros((1, 4, 2, 2), np.float32)
    c[0, 0] = 2.0
    x = W.iwt_channelwise(Tensor(c))
    np.testing.assert_allclose(x.data, 1.0)


def test_iwt_hand_values():
    c = np.array([5.0, -1.0, -2.0, 0.0], np.float32).reshape(1, 4, 1, 1)
    x = W.iwt_channelwise(Tensor(c))
    np.testing.assert_allclose(x.data[0, 0], [[1.0, 2.0], [3.0, 4.0]])


def test_channelwise_round_trips():
    rng = np.random.default_rng(0)
    x = rand_tensor(rng, (2, 3, 8, 8))
    back = W.iwt_channelwise(W.dwt_channelwise(x))
    np.testing.assert_allclose(back.data, x.data, atol=1e-5)
    c = rand_tensor(rng, (2, 12, 4, 4))
    wf = W.WaveletFeatures(c, W.CHANNELWISE, 3)
    again = W.dwt_channelwise(W.iwt_channelwise(wf)).tensor
    np.testing.assert_allclose(again.data, c.data, atol=1e-5)


def test_spatial_shape_and_round_trip():
    rng = np.random.default_rng(1)
    x = rand_tensor(rng, (2, 3, 8, 6))
    wf = W.dwt_spatial(x)
    assert wf.shape == x.shape
    back = W.iwt_spatial(wf)
    np.testing.assert_allclose(back.data, x.data, atol=1e-5)


def test_spatial_same_multiset_as_channelwise():
    rng = np.random.default_rng(2)
    x = rand_tensor(rng, (1, 2, 6, 4))
    cw = W.dwt_channelwise(x).tensor.data
    sp = W.dwt_spatial(x).tensor.data
    np.testing.assert_array_equal(np.sort(cw.ravel()), np.sort(sp.ravel()))


def test_odd_extent_errors():
    x = Tensor(np.zeros((1, 1, 3, 4), np.float32))
    with pytest.raises(ValueError):
        W.dwt_channelwise(x)
    with pytest.raises(ValueError):
        W.dwt_spatial(x)


def test_iwt_arrangement_mismatch_errors():
    wf = W.dwt_spatial(Tensor(np.zeros((1, 1, 4, 4), np.float32)))
    with pytest.raises(ValueError):
        W.iwt_channelwise(wf)
    wf2 = W.dwt_channelwise(Tensor(np.zeros((1, 1, 4, 4), np.float32)))
    with pytest.raises(ValueError):
        W.iwt_spatial(wf2)


def test_arrange_identity_and_involution():
    rng = np.random.default_rng(3)
    wf = W.dwt_channelwise(rand_tensor(rng, (2, 3, 8, 8)))
    same = W.arrange(wf, W.CHANNELWISE)
    assert same is wf
    back = W.arrange(W.arrange(wf, W.SPATIAL), W.CHANNELWISE)
    np.testing.assert_array_equal(back.tensor.data, wf.tensor.data)


def test_arrange_ll_mapping_probe():
    # distinct values on a 1x4x2x2 channelwise probe: LL channel k at (y,x)
    # must land in the top-left quadrant of channel k at (y,x)
    probe = np.arange(16, dtype=np.float32).reshape(1, 4, 2, 2)
    wf = W.WaveletFeatures(Tensor(probe), W.CHANNELWISE, 1)
    sp = W.arrange(wf, W.SPATIAL).tensor.data  # (1,1,4,4)
    np.testing.assert_array_equal(sp[0, 0, :2, :2], probe[0, 0])   # LL quadrant
    np.testing.assert_array_equal(sp[0, 0, :2, 2:], probe[0, 1])   # LH
    np.testing.assert_array_equal(sp[0, 0, 2:, :2], probe[0, 2])   # HL
    np.testing.assert_array_equal(sp[0, 0, 2:, 2:], probe[0, 3])   # HH


def test_energy_preservation():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rand_tensor(rng, (1, 3, 16, 16))
        e_x = float((x.data.astype(np.float64) ** 2).sum())
        for wf in (W.dwt_channelwise(x), W.dwt_spatial(x)):
            e_w = float((wf.tensor.data.astype(np.float64) ** 2).sum())
            assert abs(e_x - e_w) / e_x < 1e-5


def test_linearity():
    rng = np.random.default_rng(5)
    x = rand_tensor(rng, (1, 2, 8, 8))
    y = rand_tensor(rng, (1, 2, 8, 8))
    a, b = 1.7, -0.3
    lhs = W.dwt_channelwise(Tensor(a * x.data + b * y.data)).tensor.data
    rhs = a * W.dwt_channelwise(x).tensor.data + b * W.dwt_channelwise(y).tensor.data
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)


def test_impulse_detail_magnitude():
    # a single-pixel impulse of value v gives detail coefficients of |v|/2
    v = 3.0
    x = np.zeros((1, 1, 4, 4), np.float32)
    x[0, 0, 1, 2] = v  # block row 0, col 1; position (c) within block: bottom-left
    c = W.dwt_channelwise(Tensor(x)).tensor.data
    np.testing.assert_allclose(c[0, 0, 0, 1], v / 2)   # LL
    np.testing.assert_allclose(c[0, 1, 0, 1], v / 2)   # LH: +c
    np.testing.assert_allclose(c[0, 2, 0, 1], -v / 2)  # HL: -c
    np.testing.assert_allclose(c[0, 3, 0, 1], -v / 2)  # HH: -c
    assert np.count_nonzero(c) == 4


@pytest.mark.parametrize("fwd,inv", [
    (lambda t: W.dwt_channelwise(t).tensor, W.iwt_channelwise),
    (lambda t: W.dwt_spatial(t).tensor, W.iwt_spatial),
])
def test_transform_grads_vs_fd(fwd, inv):
    rng = np.random.default_rng(6)
    arrays = {"x": rng.normal(size=(1, 2, 4, 4))}
    coeff = rng.normal(size=(1, 8, 2, 2)) if fwd(Tensor(np.zeros((1, 2, 4, 4), np.float32))).shape[1] == 8 \
        else rng.normal(size=(1, 2, 4, 4))
    for dtype in (np.float32, np.float64):
        c = Tensor(coeff.astype(dtype))
        check_grads(lambda ts: T.tsum(T.tanh(fwd(ts["x"]) * c)), arrays, dtype)
    # gradient of the forward transform is the inverse transform (orthonormality)
    x = Tensor(rng.normal(size=(1, 2, 4, 4)).astype(np.float64), requires_grad=True)
    g_seed = rng.normal(size=fwd(Tensor(x.data)).shape).astype(np.float64)
    T.tsum(fwd(x) * Tensor(g_seed)).backward()
    np.testing.assert_allclose(x.grad.data, inv(Tensor(g_seed)).data, atol=1e-12)
