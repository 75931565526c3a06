"""Single-level 2D Haar transforms, channelwise and spatial arrangements.

The transform is orthonormal: per 2x2 block [[a, b], [c, d]] the four
coefficients are LL=(a+b+c+d)/2, LH=(a-b+c-d)/2, HL=(a+b-c-d)/2,
HH=(a-b-c+d)/2.  The block matrix is symmetric and orthogonal, so the
inverse applies the same formulas, energy is preserved exactly, and the
gradient of each transform is the opposite transform.

Channelwise arrangement stacks subbands along channels, subband-major
(all LL channels first, then LH, HL, HH): (c,h,w) -> (4c,h/2,w/2).
Spatial arrangement tiles them as quadrants [LL | LH ; HL | HH] and keeps
the tensor shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _record

CHANNELWISE = "channelwise"
SPATIAL = "spatial"

__all__ = [
    "CHANNELWISE", "SPATIAL", "WaveletFeatures",
    "dwt_channelwise", "iwt_channelwise", "dwt_spatial", "iwt_spatial",
    "dwt", "iwt", "arrange",
]


@dataclass
class WaveletFeatures:
    """A tensor of wavelet coefficients plus how its subbands are laid out."""

    tensor: Tensor
    arrangement: str
    source_channels: int

    @property
    def shape(self):
        return self.tensor.shape

    def with_tensor(self, t):
        return WaveletFeatures(t, self.arrangement, self.source_channels)


def _require_even(x):
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ValueError(f"DWT needs even spatial extents, got {x.shape[2]}x{x.shape[3]}")


def _haar_analysis(d):
    a = d[:, :, 0::2, 0::2]
    b = d[:, :, 0::2, 1::2]
    c = d[:, :, 1::2, 0::2]
    e = d[:, :, 1::2, 1::2]
    half = d.dtype.type(0.5)
    ll = (a + b + c + e) * half
    lh = (a - b + c - e) * half
    hl = (a + b - c - e) * half
    hh = (a - b - c + e) * half
    return ll, lh, hl, hh


def _haar_synthesis(ll, lh, hl, hh, out):
    half = ll.dtype.type(0.5)
    out[:, :, 0::2, 0::2] = (ll + lh + hl + hh) * half
    out[:, :, 0::2, 1::2] = (ll - lh + hl - hh) * half
    out[:, :, 1::2, 0::2] = (ll + lh - hl - hh) * half
    out[:, :, 1::2, 1::2] = (ll - lh - hl + hh) * half
    return out


def _dwt_channelwise_np(d):
    return np.concatenate(_haar_analysis(d), axis=1)


def _iwt_channelwise_np(d):
    c4 = d.shape[1] // 4
    ll, lh, hl, hh = (d[:, i * c4:(i + 1) * c4] for i in range(4))
    n, _, h2, w2 = d.shape
    out = np.empty((n, c4, h2 * 2, w2 * 2), d.dtype)
    return _haar_synthesis(ll, lh, hl, hh, out)


def _dwt_spatial_np(d):
    ll, lh, hl, hh = _haar_analysis(d)
    top = np.concatenate([ll, lh], axis=3)
    bot = np.concatenate([hl, hh], axis=3)
    return np.concatenate([top, bot], axis=2)


def _iwt_spatial_np(d):
    n, c, h, w = d.shape
    h2, w2 = h // 2, w // 2
    ll = d[:, :, :h2, :w2]
    lh = d[:, :, :h2, w2:]
    hl = d[:, :, h2:, :w2]
    hh = d[:, :, h2:, w2:]
    out = np.empty_like(d)
    return _haar_synthesis(ll, lh, hl, hh, out)


def _dwt_channelwise_t(x):
    def vjp(g, needs):
        return (_iwt_channelwise_t(g),)

    return _record(_dwt_channelwise_np(x.data), (x,), vjp)


def _iwt_channelwise_t(x):
    def vjp(g, needs):
        return (_dwt_channelwise_t(g),)

    return _record(_iwt_channelwise_np(x.data), (x,), vjp)


def _dwt_spatial_t(x):
    def vjp(g, needs):
        return (_iwt_spatial_t(g),)

    return _record(_dwt_spatial_np(x.data), (x,), vjp)


def _iwt_spatial_t(x):
    def vjp(g, needs):
        return (_dwt_spatial_t(g),)

    return _record(_iwt_spatial_np(x.data), (x,), vjp)


def dwt_channelwise(x):
    """(N,c,h,w) -> coefficients (N,4c,h/2,w/2), subband-major channels."""
    _require_even(x)
    return WaveletFeatures(_dwt_channelwise_t(x), CHANNELWISE, x.shape[1])


def iwt_channelwise(w):
    """Exact inverse of dwt_channelwise."""
    t = w.tensor if isinstance(w, WaveletFeatures) else w
    if isinstance(w, WaveletFeatures) and w.arrangement != CHANNELWISE:
        raise ValueError(f"iwt_channelwise got {w.arrangement} features")
    if t.shape[1] % 4:
        raise ValueError(f"channelwise coefficients need channels divisible by 4, got {t.shape[1]}")
    return _iwt_channelwise_t(t)


def dwt_spatial(x):
    """(N,c,h,w) -> same-shape coefficients tiled [LL | LH ; HL | HH]."""
    _require_even(x)
    return WaveletFeatures(_dwt_spatial_t(x), SPATIAL, x.shape[1])


def iwt_spatial(w):
    """Exact inverse of dwt_spatial."""
    t = w.tensor if isinstance(w, WaveletFeatures) else w
    if isinstance(w, WaveletFeatures) and w.arrangement != SPATIAL:
        raise ValueError(f"iwt_spatial got {w.arrangement} features")
    if t.shape[2] % 2 or t.shape[3] % 2:
        raise ValueError(f"spatial coefficients need even extents, got {t.shape[2:]}")
    return _iwt_spatial_t(t)


def dwt(x, arrangement=CHANNELWISE):
    return dwt_channelwise(x) if arrangement == CHANNELWISE else dwt_spatial(x)


def iwt(w):
    if not isinstance(w, WaveletFeatures):
        raise ValueError("iwt needs WaveletFeatures; use iwt_channelwise/iwt_spatial for raw tensors")
    return iwt_channelwise(w) if w.arrangement == CHANNELWISE else iwt_spatial(w)


def _chan_to_spatial_np(d):
    c4 = d.shape[1] // 4
    n, _, h2, w2 = d.shape
    out = np.empty((n, c4, h2 * 2, w2 * 2), d.dtype)
    out[:, :, :h2, :w2] = d[:, 0 * c4:1 * c4]
    out[:, :, :h2, w2:] = d[:, 1 * c4:2 * c4]
    out[:, :, h2:, :w2] = d[:, 2 * c4:3 * c4]
    out[:, :, h2:, w2:] = d[:, 3 * c4:4 * c4]
    return out


def _spatial_to_chan_np(d):
    n, c, h, w = d.shape
    h2, w2 = h // 2, w // 2
    return np.concatenate(
        [d[:, :, :h2, :w2], d[:, :, :h2, w2:], d[:, :, h2:, :w2], d[:, :, h2:, w2:]], axis=1)


def _chan_to_spatial_t(x):
    def vjp(g, needs):
        return (_spatial_to_chan_t(g),)

    return _record(_chan_to_spatial_np(x.data), (x,), vjp)


def _spatial_to_chan_t(x):
    def vjp(g, needs):
        return (_chan_to_spatial_t(g),)

    return _record(_spatial_to_chan_np(x.data), (x,), vjp)


def arrange(w, target):
    """Permute coefficients between the two arrangements; a bijection."""
    if target not in (CHANNELWISE, SPATIAL):
        raise ValueError(f"unknown arrangement {target!r}")
    if w.arrangement == target:
        return w
    if target == SPATIAL:
        if w.tensor.shape[1] % 4:
            raise ValueError(f"cannot tile {w.tensor.shape[1]} channels into quadrants")
        return WaveletFeatures(_chan_to_spatial_t(w.tensor), SPATIAL, w.source_channels)
    if w.tensor.shape[2] % 2 or w.tensor.shape[3] % 2:
        raise ValueError(f"cannot split odd extents {w.tensor.shape[2:]} into quadrants")
    return WaveletFeatures(_spatial_to_chan_t(w.tensor), CHANNELWISE, w.source_channels)
