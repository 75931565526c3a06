"""Desk-scale evaluation: oracle mIoU and a radial spectrum discrepancy.

mIoU is computed from an aggregated confusion matrix against the input
masks, with predictions from an appearance oracle (nearest base color, or
a small UNet trained on paired synthetic data -- pairing is allowed here
because the oracle is evaluation-only).  The spectrum distance compares
radially averaged log power spectra and stands in for a learned
perceptual metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import generate_world, one_hot
from .models import UNet, sample_noise
from .tensor import Adam, Tensor

__all__ = [
    "ConfusionMatrix", "confusion_matrix", "miou", "nearest_color_segment",
    "train_oracle_unet", "oracle_segment", "spectrum_distance", "radial_profile",
    "generate_images", "evaluate_bundle",
]


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C,C) int64, rows = ground truth, cols = prediction

    @property
    def total(self):
        return int(self.counts.sum())


def confusion_matrix(pred, gt, num_classes):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    idx = gt.reshape(-1).astype(np.int64) * num_classes + pred.reshape(-1).astype(np.int64)
    counts = np.bincount(idx, minlength=num_classes * num_classes)
    return ConfusionMatrix(counts.reshape(num_classes, num_classes))


def miou(pred, gt, num_classes):
    """Mean IoU over the classes present in gt or pred, plus the matrix."""
    cm = confusion_matrix(pred, gt, num_classes)
    c = cm.counts
    inter = np.diag(c).astype(np.float64)
    union = c.sum(axis=0) + c.sum(axis=1) - np.diag(c)
    present = union > 0
    if not present.any():
        raise ValueError("no classes present in either map")
    score = float((inter[present] / union[present]).mean())
    return score, cm


def nearest_color_segment(image, spec):
    """Classify each pixel to the class with the closest base color."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    palette = spec.color_array()  # (C,3)
    # (N,H,W,C) squared distances via broadcasting
    diff = arr[:, None] - palette.T[None, :, :, None, None]  # (N,C,3,H,W)
    d2 = (diff ** 2).sum(axis=2)
    labels = d2.argmin(axis=1).astype(np.int32)
    return labels[0] if single else labels


def train_oracle_unet(spec, n_pairs=32, steps=300, seed=123, base=12, lr=2e-3):
    """Small UNet fitted on paired synthetic data (evaluation-only use)."""
    pairs = generate_world(spec, n_pairs)
    masks = np.stack([m for m, _ in pairs])
    images = np.stack([im for _, im in pairs])
    rng = np.random.default_rng(seed)
    net = UNet(spec.num_classes, base=base, depth=3, rng=rng)
    opt = Adam(net.params(), lr=lr)
    batch = 8
    for step in range(steps):
        idx = rng.integers(0, n_pairs, batch)
        x = Tensor(images[idx])
        target = one_hot(masks[idx], spec.num_classes)
        lp = T.log_softmax(net(x), axis=1)
        loss = -(T.tsum(lp * target.mask) / float(batch * spec.height * spec.width))
        opt.zero_grad()
        loss.backward()
        opt.step()
    return net


def oracle_segment(image, spec, mode="color", model=None):
    """LabelMap prediction for an image (or batch) via the chosen oracle."""
    if mode == "color":
        return nearest_color_segment(image, spec)
    if mode != "unet":
        raise ValueError(f"unknown oracle mode {mode!r}")
    if model is None:
        model = train_oracle_unet(spec)
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    with T.no_grad():
        logits = model(Tensor(arr))
    labels = logits.data.argmax(axis=1).astype(np.int32)
    return labels[0] if single else labels


# -- frequency-spectrum discrepancy -----------------------------------------------


def radial_profile(images, eps=1e-8):
    """Radially averaged log power spectrum of a set of images (N,3,H,W).

    Per image: 2-D FFT per channel, |.|^2, binned by integer frequency
    radius, averaged over channels.  The set profile is the bin-wise exact
    mean (math.fsum) of per-image profiles, so duplicating the set leaves
    it bitwise unchanged.
    """
    arr = np.asarray(images, np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValueError(f"expected (N,C,H,W) images, got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("empty image set")
    n, c, h, w = arr.shape
    fy = np.fft.fftfreq(h) * h
    fx = np.fft.fftfreq(w) * w
    radius = np.rint(np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)).astype(np.int64)
    n_bins = min(h, w) // 2 + 1
    keep = radius < n_bins
    flat_r = radius[keep]
    denom = np.bincount(flat_r, minlength=n_bins).astype(np.float64)
    per_image = []
    for i in range(n):
        psd = np.abs(np.fft.fft2(arr[i], axes=(-2, -1))) ** 2
        mean_c = psd.mean(axis=0)
        sums = np.bincount(flat_r, weights=mean_c[keep], minlength=n_bins)
        per_image.append(sums / denom)
    avg = np.array([math.fsum(p[b] for p in per_image) / n for b in range(n_bins)])
    return np.log10(avg + eps)


def spectrum_distance(set_a, set_b):
    """Mean squared difference of the radially averaged log spectra."""
    pa = radial_profile(set_a)
    pb = radial_profile(set_b)
    if pa.shape != pb.shape:
        raise ValueError("image sets must share a resolution")
    return float(((pa - pb) ** 2).mean())


# -- checkpoint evaluation ----------------------------------------------------------


def generate_images(bundle, label_maps, seed, batch=8):
    """One generated image per label map, with noise drawn from `seed`."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    h, w = bundle.image_size
    outs = []
    for i in range(0, len(label_maps), batch):
        chunk = np.asarray(label_maps[i:i + batch])
        layout = one_hot(chunk, bundle.num_classes)
        z = sample_noise(chunk.shape[0], bundle.cfg.z_dim, h, w, rng)
        with T.no_grad():
            img = bundle.generator(layout, z)
        outs.append(img.data)
    return np.concatenate(outs)


def evaluate_bundle(bundle, spec, masks, real_images, oracle="color", seed=0, oracle_model=None):
    """Oracle mIoU against the input masks plus spectrum distance to the
    real pool.  Returns (report dict, generated images)."""
    fakes = generate_images(bundle, masks, seed)
    if oracle == "unet" and oracle_model is None:
        oracle_model = train_oracle_unet(spec)
    preds = oracle_segment(fakes, spec, oracle, oracle_model)
    agg = np.zeros((spec.num_classes, spec.num_classes), np.int64)
    for p, gtm in zip(preds, masks):
        agg += confusion_matrix(p, gtm, spec.num_classes).counts
    c = agg.astype(np.float64)
    inter = np.diag(c)
    union = c.sum(axis=0) + c.sum(axis=1) - np.diag(c)
    present = union > 0
    score = float((inter[present] / union[present]).mean())
    report = {
        "miou": score,
        "spectrum_distance": spectrum_distance(fakes, real_images),
    }
    return report, fakes
