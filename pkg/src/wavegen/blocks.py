"""Network building blocks: conv layers, SPADE modulation, wavelet res-blocks.

pixelSPADE and waveletUpsample are literal compositions of the transforms
they are defined from (IWT -> op -> DWT); the composition tests rely on
that, so do not fuse them.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .wavelet import CHANNELWISE, SPATIAL, WaveletFeatures, dwt, iwt

__all__ = [
    "Layer", "Conv2d", "Spade", "PixelSpade", "wavelet_upsample",
    "wavelet_downsample", "WaveletResBlock",
]


class Layer:
    """Minimal parameter container; children discovered from attributes."""

    def named_params(self, prefix=""):
        for key, val in vars(self).items():
            path = f"{prefix}.{key}" if prefix else key
            if isinstance(val, Tensor) and val.requires_grad:
                yield path, val
            elif isinstance(val, Layer):
                yield from val.named_params(path)
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Layer):
                        yield from item.named_params(f"{path}.{i}")

    def params(self):
        return dict(self.named_params())


def _mask_of(m):
    """Accept a SemanticLayout or a raw one-hot tensor."""
    return m.mask if hasattr(m, "mask") else m


class Conv2d(Layer):
    def __init__(self, cin, cout, k=3, stride=1, padding=None, bias=True,
                 rng=None, init="he"):
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        if init == "zero":
            w = np.zeros((cout, cin, k, k), np.float32)
        else:
            std = np.sqrt(2.0 / (cin * k * k))
            w = (rng.standard_normal((cout, cin, k, k)) * std).astype(np.float32)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(cout, np.float32), requires_grad=True) if bias else None

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Spade(Layer):
    """Spatially-adaptive modulation: normalize, then scale/shift per pixel
    with gamma/beta maps predicted from the (nearest-resized) semantic mask.

    Heads are zero-initialized so a fresh layer is a plain normalization.
    """

    def __init__(self, channels, num_classes, hidden=32, mode="batch", eps=1e-5, rng=None):
        self.mode = mode
        self.eps = eps
        self.trunk = Conv2d(num_classes, hidden, 3, rng=rng)
        self.gamma_head = Conv2d(hidden, channels, 3, init="zero")
        self.beta_head = Conv2d(hidden, channels, 3, init="zero")

    def __call__(self, x, mask):
        m = _mask_of(mask)
        if m.shape[0] != x.shape[0]:
            raise ValueError(f"batch mismatch: features {x.shape[0]} vs mask {m.shape[0]}")
        if m.shape[2:] != x.shape[2:]:
            m = T.nearest_resize(m, x.shape[2], x.shape[3])
        t = T.leaky_relu(self.trunk(m))
        gamma = self.gamma_head(t)
        beta = self.beta_head(t)
        return T.normalize_features(x, self.mode, self.eps) * (1.0 + gamma) + beta


class PixelSpade(Layer):
    """SPADE applied in the spatial domain inside a wavelet pipeline:
    IWT -> SPADE -> DWT."""

    def __init__(self, coeff_channels, num_classes, arrangement=CHANNELWISE,
                 hidden=32, mode="batch", eps=1e-5, rng=None):
        self.arrangement = arrangement
        spatial_c = coeff_channels // 4 if arrangement == CHANNELWISE else coeff_channels
        self.spade = Spade(spatial_c, num_classes, hidden, mode, eps, rng)

    def __call__(self, wf, mask):
        if not isinstance(wf, WaveletFeatures):
            raise ValueError("pixelSPADE needs WaveletFeatures input")
        if wf.arrangement != self.arrangement:
            raise ValueError(f"pixelSPADE built for {self.arrangement}, got {wf.arrangement}")
        x = iwt(wf)
        y = self.spade(x, mask)
        return dwt(y, self.arrangement)


def wavelet_upsample(wf):
    """Double coefficient resolution: IWT -> bilinear x2 -> DWT."""
    if not isinstance(wf, WaveletFeatures):
        raise ValueError("wavelet_upsample needs WaveletFeatures input")
    x = iwt(wf)
    y = T.bilinear_resize(x, x.shape[2] * 2, x.shape[3] * 2)
    return dwt(y, wf.arrangement)


def wavelet_downsample(wf):
    """Mirror of wavelet_upsample: IWT -> bilinear half-size -> DWT."""
    if not isinstance(wf, WaveletFeatures):
        raise ValueError("wavelet_downsample needs WaveletFeatures input")
    x = iwt(wf)
    y = T.bilinear_resize(x, x.shape[2] // 2, x.shape[3] // 2)
    return dwt(y, wf.arrangement)


class WaveletResBlock(Layer):
    """Residual block that doubles resolution.

    Identity branch: waveletUpsample (or nearest when disabled), then a 1x1
    conv if the channel count changes.  Residual branch: twice
    [modulate -> leaky -> conv3x3], with a nearest x2 before the first conv.
    Modulation is pixelSPADE, or plain SPADE straight on the coefficients
    when pixelSPADE is disabled.
    """

    def __init__(self, in_ch, out_ch, num_classes, use_wu=True, use_ps=True,
                 arrangement=CHANNELWISE, spade_hidden=32, spade_mode="batch", rng=None):
        self.use_wu = use_wu
        self.use_ps = use_ps
        if use_ps:
            self.mod0 = PixelSpade(in_ch, num_classes, arrangement, spade_hidden, spade_mode, rng=rng)
            self.mod1 = PixelSpade(out_ch, num_classes, arrangement, spade_hidden, spade_mode, rng=rng)
        else:
            self.mod0 = Spade(in_ch, num_classes, spade_hidden, spade_mode, rng=rng)
            self.mod1 = Spade(out_ch, num_classes, spade_hidden, spade_mode, rng=rng)
        self.conv0 = Conv2d(in_ch, out_ch, 3, rng=rng)
        self.conv1 = Conv2d(out_ch, out_ch, 3, rng=rng)
        self.conv_skip = Conv2d(in_ch, out_ch, 1, rng=rng, bias=False) if in_ch != out_ch else None

    def _modulate(self, which, wf, mask):
        mod = self.mod0 if which == 0 else self.mod1
        if self.use_ps:
            return mod(wf, mask).tensor
        return mod(wf.tensor, mask)

    def __call__(self, wf, mask):
        if not isinstance(wf, WaveletFeatures):
            raise ValueError("WaveletResBlock needs WaveletFeatures input")
        h2, w2 = wf.shape[2] * 2, wf.shape[3] * 2
        if self.use_wu:
            idt = wavelet_upsample(wf).tensor
        else:
            idt = T.nearest_resize(wf.tensor, h2, w2)
        if self.conv_skip is not None:
            idt = self.conv_skip(idt)

        def wrap(t):
            src = t.shape[1] // 4 if wf.arrangement == CHANNELWISE else t.shape[1]
            return WaveletFeatures(t, wf.arrangement, src)

        r = self._modulate(0, wf, mask)
        r = T.leaky_relu(r)
        r = T.nearest_resize(r, h2, w2)
        r = self.conv0(r)
        r = self._modulate(1, wrap(r), mask)
        r = T.leaky_relu(r)
        r = self.conv1(r)
        return wrap(idt + r)
