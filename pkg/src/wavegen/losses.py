"""Class-balanced self-supervised segmentation loss and the adversarial game.

The segmentation loss is a weighted cross entropy between the segmenter's
output on a generated image and the very mask that image was generated
from; weights are inversely proportional to per-pixel class frequency over
the mask pool.  The adversarial side is the non-saturating logistic loss
with an R1 gradient penalty on real images.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .blocks import _mask_of
from .tensor import Tensor

log = logging.getLogger(__name__)

__all__ = [
    "ClassWeights", "compute_class_weights", "seg_loss",
    "adversarial_losses", "d_adversarial_loss", "g_adversarial_loss",
    "generator_objective",
]


@dataclass
class ClassWeights:
    alpha: np.ndarray         # (C,) weights, 0 for absent classes
    pixel_counts: np.ndarray  # (C,) mean per-image pixel count
    total_pixels: int         # H*W


def compute_class_weights(masks, num_classes=None):
    """Inverse per-pixel class-frequency weights over a pool of layouts.

    `masks` is an iterable of integer label maps (H,W), an (N,H,W) array,
    or SemanticLayouts.  alpha_c = H*W / mean_count_c; classes that never
    occur get alpha 0 and a logged warning.
    """
    arrays = []
    for m in ([masks] if isinstance(masks, np.ndarray) and masks.ndim in (2, 3) else masks):
        if hasattr(m, "label_map"):
            arrays.append(m.label_map().reshape(-1, *m.label_map().shape[-2:]))
        else:
            a = np.asarray(m)
            arrays.append(a[None] if a.ndim == 2 else a)
    if not arrays:
        raise ValueError("empty mask pool")
    stack = np.concatenate(arrays, axis=0)
    n, h, w = stack.shape
    if num_classes is None:
        num_classes = int(stack.max()) + 1
    counts = np.bincount(stack.reshape(-1), minlength=num_classes).astype(np.float64)
    mean_counts = counts / n
    alpha = np.zeros(num_classes, np.float64)
    present = mean_counts > 0
    alpha[present] = (h * w) / mean_counts[present]
    for c in np.nonzero(~present)[0]:
        log.warning("class %d absent from every layout; weight set to 0", c)
    return ClassWeights(alpha=alpha.astype(np.float32),
                        pixel_counts=mean_counts.astype(np.float32),
                        total_pixels=h * w)


def seg_loss(logits, m, weights):
    """-(1/N) sum_n sum_c alpha_c sum_ij m_cij log softmax(logits)_cij."""
    mask = _mask_of(m)
    if logits.shape != mask.shape:
        raise ValueError(f"logits {logits.shape} vs mask {mask.shape}")
    alpha = weights.alpha if isinstance(weights, ClassWeights) else np.asarray(weights, np.float32)
    if alpha.shape != (mask.shape[1],):
        raise ValueError(f"need {mask.shape[1]} class weights, got {alpha.shape}")
    lp = T.log_softmax(logits, axis=1)
    w = Tensor(alpha.astype(logits.dtype).reshape(1, -1, 1, 1))
    total = T.tsum(lp * mask * w)
    return -(total / float(mask.shape[0]))


def d_adversarial_loss(disc, real, fake_detached, r1_gamma=1.0):
    """Discriminator objective: softplus(-D(real)) + softplus(D(fake)) + R1.

    Returns (loss_d, r1).  The R1 term is (gamma/2) * mean_n ||dD/dx_n||^2
    at the real images, built with a differentiable gradient so it trains.
    """
    real_in = Tensor(real.data, requires_grad=True)
    logits_r = disc(real_in)
    logits_f = disc(fake_detached.detach())
    if not (np.isfinite(logits_r.data).all() and np.isfinite(logits_f.data).all()):
        raise FloatingPointError("discriminator produced non-finite logits")
    loss = T.tmean(T.softplus(-logits_r)) + T.tmean(T.softplus(logits_f))
    if r1_gamma > 0:
        (grad_x,) = T.grad_of(T.tsum(logits_r), [real_in], create_graph=True)
        r1 = (r1_gamma / 2.0) * (T.tsum(grad_x * grad_x) / float(real.shape[0]))
    else:
        r1 = Tensor(np.zeros((), real.dtype))
    return loss + r1, r1


def g_adversarial_loss(disc, fake):
    """Non-saturating generator objective: softplus(-D(fake))."""
    logits = disc(fake)
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("discriminator produced non-finite logits")
    return T.tmean(T.softplus(-logits))


def adversarial_losses(disc, real, fake, r1_gamma=1.0):
    """(loss_D, loss_G, r1) for one batch; the D terms see `fake` detached,
    the G term sees it with its graph."""
    loss_d, r1 = d_adversarial_loss(disc, real, fake, r1_gamma)
    loss_g = g_adversarial_loss(disc, fake)
    return loss_d, loss_g, r1


def generator_objective(seg, adv, lam):
    """Overall generator loss: seg + lambda * adv."""
    for v in (seg, adv):
        val = v.data if isinstance(v, Tensor) else v
        if not np.isfinite(val).all():
            raise FloatingPointError("non-finite loss term")
    return seg + lam * adv
