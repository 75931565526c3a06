"""The three networks: wavelet generator, wavelet discriminator, UNet segmenter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .blocks import Conv2d, Layer, Spade, WaveletResBlock, _mask_of, wavelet_downsample
from .tensor import Tensor
from .wavelet import CHANNELWISE, SPATIAL, WaveletFeatures, dwt, iwt

__all__ = [
    "GeneratorConfig", "Generator", "Discriminator", "UNet",
    "sample_noise", "make_3d_noise",
]


def sample_noise(n, z_dim, height, width, rng):
    """Spatially-constant Gaussian noise (N, Z, H, W): one latent per sample,
    propagated to every pixel."""
    rng = np.random.default_rng(rng)
    vec = rng.standard_normal((n, z_dim)).astype(np.float32)
    return Tensor(np.broadcast_to(vec[:, :, None, None], (n, z_dim, height, width)).copy())


def make_3d_noise(m, z_dim, rng):
    """Concatenate the one-hot mask with a 3D noise tensor: (N, C+Z, H, W)."""
    mask = _mask_of(m)
    if z_dim == 0:
        return mask
    n, _, h, w = mask.shape
    z = sample_noise(n, z_dim, h, w, rng)
    return T.concat([mask, z], axis=1)


@dataclass
class GeneratorConfig:
    """Channel schedule plus the ablation toggles of the architecture."""

    num_classes: int
    z_dim: int = 16
    out_size: tuple = (64, 64)
    channels: tuple = (128, 128, 64, 32)
    use_wavelet_upsample: bool = True
    use_pixel_spade: bool = True
    arrangement: str = CHANNELWISE
    final_iwt: bool = True
    spade_hidden: int = 32
    spade_mode: str = "batch"

    def validate(self):
        if len(self.channels) < 1:
            raise ValueError("channel schedule must have at least one block")
        if any(c % 4 for c in self.channels):
            raise ValueError(f"channel schedule must be divisible by 4, got {self.channels}")
        h, w = self.out_size
        div = 2 ** (len(self.channels) + 1)
        if h % div or w % div:
            raise ValueError(f"output size {h}x{w} not divisible by 2^(blocks+1)={div}")
        if self.arrangement not in (CHANNELWISE, SPATIAL):
            raise ValueError(f"unknown arrangement {self.arrangement!r}")
        if not self.final_iwt and (self.use_wavelet_upsample or self.use_pixel_spade):
            raise ValueError("wavelet upsample / pixelSPADE require the wavelet path (final_iwt)")


class Generator(Layer):
    """waveletSPADE generator: mask+noise downsampled to a seed resolution,
    lifted into the wavelet domain, grown by waveletResBlocks, and mapped
    back to RGB by a final conv + IWT + tanh."""

    def __init__(self, cfg: GeneratorConfig, rng):
        cfg.validate()
        self.cfg = cfg
        n_blocks = len(cfg.channels)
        h, w = cfg.out_size
        self.init_size = (h // 2 ** n_blocks, w // 2 ** n_blocks)
        # spatial-arrangement (and plain) features carry schedule/4 channels so
        # they represent the same content as channelwise coefficients
        wavelet_dom = cfg.final_iwt and cfg.arrangement == CHANNELWISE
        feats = [c if wavelet_dom else c // 4 for c in cfg.channels]
        self.fc = Conv2d(cfg.num_classes + cfg.z_dim, cfg.channels[0] // 4, 3, rng=rng)
        self.blocks = []
        in_ch = feats[0]  # fc emits channels[0]/4, which the DWT lifts to feats[0]
        for out_ch in feats:
            self.blocks.append(WaveletResBlock(
                in_ch, out_ch, cfg.num_classes,
                use_wu=cfg.use_wavelet_upsample, use_ps=cfg.use_pixel_spade,
                arrangement=cfg.arrangement, spade_hidden=cfg.spade_hidden,
                spade_mode=cfg.spade_mode, rng=rng))
            in_ch = out_ch
        if not cfg.final_iwt:
            out_maps = 3
        else:
            out_maps = 12 if cfg.arrangement == CHANNELWISE else 3
        self.conv_img = Conv2d(feats[-1], out_maps, 3, rng=rng)

    def __call__(self, m, z=None):
        cfg = self.cfg
        mask = _mask_of(m)
        h, w = cfg.out_size
        if mask.shape[2:] != (h, w):
            raise ValueError(f"mask is {mask.shape[2]}x{mask.shape[3]}, generator built for {h}x{w}")
        if cfg.z_dim:
            if z is None:
                raise ValueError("generator configured with z_dim > 0 needs a noise tensor")
            x = T.concat([mask, z], axis=1)
        else:
            x = mask
        x = T.nearest_resize(x, *self.init_size)
        x = self.fc(x)
        if cfg.final_iwt:
            wf = dwt(x, cfg.arrangement)
        else:
            wf = WaveletFeatures(x, CHANNELWISE, x.shape[1])  # plain features, label only
        for block in self.blocks:
            wf = block(wf, mask)
        out = self.conv_img(T.leaky_relu(wf.tensor))
        if cfg.final_iwt:
            out = iwt(WaveletFeatures(out, cfg.arrangement, 3))
        return T.tanh(out)


class _DResBlock(Layer):
    def __init__(self, in_ch, out_ch, rng):
        self.conv0 = Conv2d(in_ch, out_ch, 3, rng=rng)
        self.conv1 = Conv2d(out_ch, out_ch, 3, rng=rng)
        self.skip = Conv2d(in_ch, out_ch, 1, bias=False, rng=rng) if in_ch != out_ch else None

    def __call__(self, x):
        r = self.conv0(T.leaky_relu(x))
        r = self.conv1(T.leaky_relu(r))
        s = x if self.skip is None else self.skip(x)
        return s + r


class Discriminator(Layer):
    """Whole-image realness critic on the channelwise DWT of the image.

    Residual conv stages; each downsampling is the wavelet mirror of the
    generator's upsample (IWT -> bilinear half -> DWT).  A global mean pool
    and a 1x1 head give one logit per image.  This is a reconstruction in
    the SWAGAN spirit, not a published architecture.
    """

    def __init__(self, in_size=(64, 64), channels=(32, 64, 128, 256), rng=None):
        h, w = in_size
        if h % 2 or w % 2:
            raise ValueError(f"discriminator input must be even-sized, got {h}x{w}")
        coeff = min(h, w) // 2
        max_stages = max(1, int(np.log2(coeff)) - 1)
        self.channels = tuple(channels[:max_stages])
        self.in_size = (h, w)
        self.stem = Conv2d(12, self.channels[0], 3, rng=rng)
        self.stages = []
        cur = self.channels[0]
        for c in self.channels:
            self.stages.append(_DResBlock(cur, c, rng))
            cur = c
        self.head = Conv2d(cur, 1, 1, rng=rng)

    def __call__(self, x):
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ValueError(f"discriminator needs even extents, got {x.shape[2:]}")
        wf = dwt(x, CHANNELWISE)
        t = self.stem(wf.tensor)
        for stage in self.stages:
            t = stage(t)
            t = wavelet_downsample(WaveletFeatures(t, CHANNELWISE, t.shape[1] // 4)).tensor
        pooled = T.tmean(t, axis=(2, 3), keepdims=True)
        logit = self.head(T.leaky_relu(pooled))
        return T.reshape(logit, (x.shape[0],))


class _NormConv(Layer):
    def __init__(self, in_ch, out_ch, rng, stride=1):
        self.conv = Conv2d(in_ch, out_ch, 3, stride=stride, rng=rng)

    def __call__(self, x):
        return T.leaky_relu(T.normalize_features(self.conv(x), "instance"))


class UNet(Layer):
    """Encoder-decoder segmenter with skip connections; per-pixel class logits."""

    def __init__(self, num_classes, in_ch=3, base=16, depth=3, rng=None):
        self.depth = depth
        self.stem = _NormConv(in_ch, base, rng)
        self.downs = []
        ch = base
        for _ in range(depth):
            self.downs.append(_NormConv(ch, ch * 2, rng, stride=2))
            ch *= 2
        self.ups = []
        for _ in range(depth):
            skip_ch = ch // 2
            self.ups.append(_NormConv(ch + skip_ch, skip_ch, rng))
            ch = skip_ch
        self.head = Conv2d(base, num_classes, 1, rng=rng)

    def __call__(self, x):
        if getattr(x, "tag_real_image", False):
            raise RuntimeError("segmenter must only observe generated images")
        if x.shape[2] % 2 ** self.depth or x.shape[3] % 2 ** self.depth:
            raise ValueError(f"UNet needs extents divisible by {2 ** self.depth}, got {x.shape[2:]}")
        skips = [self.stem(x)]
        t = skips[0]
        for down in self.downs:
            t = down(t)
            skips.append(t)
        skips.pop()  # bottleneck is not its own skip
        for up in self.ups:
            t = T.nearest_resize(t, t.shape[2] * 2, t.shape[3] * 2)
            t = up(T.concat([t, skips.pop()], axis=1))
        return self.head(t)
