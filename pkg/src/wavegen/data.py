"""Synthetic textured-shapes world, mask/image IO, and unpaired sampling.

The world binds each foreground class to a shape type (rectangles, circles,
stripes) and to an appearance (base RGB color + a zero-mean sinusoidal
texture with a class-specific frequency).  The geometry/appearance binding
is what lets an unconditional discriminator pin down which class should
look like what, and the color/texture palette doubles as an appearance
oracle for evaluation.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .tensor import Tensor

__all__ = [
    "ShapesWorldSpec", "SemanticLayout", "one_hot", "generate_world",
    "render_sample", "UnpairedSampler", "write_image_png", "read_image_png",
    "write_label_png", "read_label_png", "write_dataset", "load_dataset",
    "worker_count",
]

SHAPE_TYPES = ("rectangle", "circle", "stripes")


def default_palette(num_classes):
    """Well-separated base colors: dark background plus saturated classes."""
    base = [(44, 44, 52), (204, 64, 52), (64, 176, 84), (72, 108, 220),
            (222, 188, 60), (170, 74, 200), (80, 200, 208)]
    if num_classes <= len(base):
        return base[:num_classes]
    rng = np.random.default_rng(7)
    extra = [tuple(int(v) for v in rng.integers(40, 221, 3)) for _ in range(num_classes - len(base))]
    return base + extra


@dataclass
class ShapesWorldSpec:
    """Recipe for the synthetic world; class 0 is the background."""

    num_classes: int = 4
    height: int = 64
    width: int = 64
    seed: int = 0
    shapes_min: int = 2
    shapes_max: int = 4
    colors: list = field(default_factory=list)          # per class, 0..255 RGB
    texture_freq: list = field(default_factory=list)    # cycles across the image
    texture_amp: list = field(default_factory=list)     # in [-1,1] units

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least background + one shape class")
        if self.height % 16 or self.width % 16:
            raise ValueError(f"world size must be divisible by 16, got {self.height}x{self.width}")
        if not (1 <= self.shapes_min <= self.shapes_max):
            raise ValueError("invalid shape count range")
        if not self.colors:
            self.colors = default_palette(self.num_classes)
        if not self.texture_freq:
            self.texture_freq = [2.0 + 4.0 * c for c in range(self.num_classes)]
        if not self.texture_amp:
            self.texture_amp = [0.06] + [0.12] * (self.num_classes - 1)

    def shape_type(self, cls):
        return SHAPE_TYPES[(cls - 1) % len(SHAPE_TYPES)]

    def color_array(self):
        return np.asarray(self.colors, np.float32) / 127.5 - 1.0  # (C,3) in [-1,1]


@dataclass
class SemanticLayout:
    """One-hot mask (N,C,H,W) with {0,1} entries summing to 1 per pixel."""

    mask: Tensor
    num_classes: int

    def __post_init__(self):
        d = self.mask.data
        if d.ndim != 4 or d.shape[1] != self.num_classes:
            raise ValueError(f"layout mask must be (N,{self.num_classes},H,W), got {d.shape}")
        if not np.isin(d, (0.0, 1.0)).all():
            raise ValueError("layout entries must be 0 or 1")
        if not (d.sum(axis=1) == 1.0).all():
            raise ValueError("layout channels must sum to 1 at every pixel")

    @property
    def shape(self):
        return self.mask.shape

    def label_map(self):
        return self.mask.data.argmax(axis=1).astype(np.int32)


def one_hot(label_map, num_classes):
    """Integer label map (H,W) or (N,H,W) -> SemanticLayout (N,C,H,W)."""
    lm = np.asarray(label_map)
    if lm.ndim == 2:
        lm = lm[None]
    if lm.min() < 0 or lm.max() >= num_classes:
        raise ValueError(f"label ids must be in [0,{num_classes}), got [{lm.min()},{lm.max()}]")
    n, h, w = lm.shape
    m = np.zeros((n, num_classes, h, w), np.float32)
    np.put_along_axis(m, lm[:, None].astype(np.int64), 1.0, axis=1)
    return SemanticLayout(Tensor(m), num_classes)


# -- world rendering ----------------------------------------------------------


def _draw_shape(mask, cls, kind, rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "rectangle":
        rh = int(rng.integers(h // 6, h // 2))
        rw = int(rng.integers(w // 6, w // 2))
        y0 = int(rng.integers(0, h - rh))
        x0 = int(rng.integers(0, w - rw))
        mask[y0:y0 + rh, x0:x0 + rw] = cls
    elif kind == "circle":
        r = int(rng.integers(h // 8, h // 3.2))
        cy = int(rng.integers(r, h - r))
        cx = int(rng.integers(r, w - r))
        mask[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = cls
    else:  # stripes: a horizontal band of parallel bars
        bar = int(rng.integers(2, 5))
        n_bars = int(rng.integers(2, 4))
        span = bar * (2 * n_bars - 1)
        y0 = int(rng.integers(0, max(1, h - span)))
        for b in range(n_bars):
            mask[y0 + 2 * b * bar: y0 + (2 * b + 1) * bar, :] = cls


def render_sample(spec, index):
    """Deterministic (label map, image) pair for one sample index."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))
    h, w = spec.height, spec.width
    mask = np.zeros((h, w), np.int32)
    n_shapes = int(rng.integers(spec.shapes_min, spec.shapes_max + 1))
    for _ in range(n_shapes):
        cls = int(rng.integers(1, spec.num_classes))
        _draw_shape(mask, cls, spec.shape_type(cls), rng, h, w)

    colors = spec.color_array()
    img = colors[mask].transpose(2, 0, 1).copy()  # (3,H,W)
    yy, xx = np.mgrid[0:h, 0:w]
    for cls in range(spec.num_classes):
        region = mask == cls
        if not region.any():
            continue
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        f = spec.texture_freq[cls]
        wave = np.sin(2 * np.pi * f * (np.cos(theta) * xx + np.sin(theta) * yy) / w + phase)
        img[:, region] += (spec.texture_amp[cls] * wave[region]).astype(np.float32)
    return mask, np.clip(img, -1.0, 1.0).astype(np.float32)


def worker_count():
    env = os.environ.get("WAVEGEN_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def generate_world(spec, n):
    """n (label map, image) pairs; per-index seeding keeps the output
    independent of worker parallelism."""
    if n < 1:
        raise ValueError("need n >= 1 samples")
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda i: render_sample(spec, i), range(n)))
    return [render_sample(spec, i) for i in range(n)]


# -- unpaired sampling ----------------------------------------------------------


class UnpairedSampler:
    """Independent shuffles of the mask pool and the image pool.

    Batches are addressable by global step so a resumed run replays the
    same stream.  Within an epoch the joint index sequence is re-drawn if
    it ever equals the identity pairing (pool size > 4).
    """

    def __init__(self, n_masks, n_images, batch, seed):
        if n_masks < 1 or n_images < 1:
            raise ValueError("both pools must be non-empty")
        if batch > n_masks or batch > n_images:
            raise ValueError(f"batch {batch} exceeds pool size {min(n_masks, n_images)}")
        self.n_masks = n_masks
        self.n_images = n_images
        self.batch = batch
        self.seed = seed
        self.batches_per_epoch = min(n_masks, n_images) // batch

    def _epoch_perms(self, epoch):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, epoch]))
        pm = rng.permutation(self.n_masks)
        pi = rng.permutation(self.n_images)
        if self.n_masks == self.n_images and self.n_masks > 4:
            while np.array_equal(pm, pi):
                pi = rng.permutation(self.n_images)
        return pm, pi

    def batch_at(self, step):
        epoch, pos = divmod(step, self.batches_per_epoch)
        pm, pi = self._epoch_perms(epoch)
        sl = slice(pos * self.batch, (pos + 1) * self.batch)
        return pm[sl], pi[sl]


# -- PNG IO ----------------------------------------------------------------------


def write_image_png(path, img):
    """RGB tensor/array (3,H,W) in [-1,1] -> 8-bit PNG; stored = round((v+1)*127.5)."""
    arr = img.data if isinstance(img, Tensor) else np.asarray(img)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected (3,H,W) image, got {arr.shape}")
    q = np.clip(np.round((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), "RGB").save(path)


def read_image_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), np.float32)
    return arr.transpose(2, 0, 1) / 127.5 - 1.0


def write_label_png(path, label_map, num_classes=None):
    lm = np.asarray(label_map)
    top = int(lm.max()) if lm.size else 0
    limit = num_classes if num_classes is not None else top + 1
    if limit > 256 or top > 255:
        raise ValueError(f"label ids exceed 8-bit grayscale (max {top}, classes {limit})")
    if lm.min() < 0:
        raise ValueError("label ids must be non-negative")
    Image.fromarray(lm.astype(np.uint8), "L").save(path)


def read_label_png(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), np.int32)


# -- dataset directory layout -----------------------------------------------------


def _spec_to_cfg(spec):
    lines = [
        f"num_classes = {spec.num_classes}",
        f"height = {spec.height}",
        f"width = {spec.width}",
        f"seed = {spec.seed}",
        f"shapes_min = {spec.shapes_min}",
        f"shapes_max = {spec.shapes_max}",
    ]
    for c in range(spec.num_classes):
        r, g, b = spec.colors[c]
        lines.append(f"class{c}_color = {r},{g},{b}")
        lines.append(f"class{c}_freq = {spec.texture_freq[c]}")
        lines.append(f"class{c}_amp = {spec.texture_amp[c]}")
    return "\n".join(lines) + "\n"


def parse_flat_config(text):
    """Flat `key = value` lines -> dict of strings; '#' starts a comment."""
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _spec_from_cfg(text):
    kv = parse_flat_config(text)
    n = int(kv["num_classes"])
    colors, freqs, amps = [], [], []
    for c in range(n):
        colors.append(tuple(int(v) for v in kv[f"class{c}_color"].split(",")))
        freqs.append(float(kv[f"class{c}_freq"]))
        amps.append(float(kv[f"class{c}_amp"]))
    return ShapesWorldSpec(
        num_classes=n, height=int(kv["height"]), width=int(kv["width"]),
        seed=int(kv["seed"]), shapes_min=int(kv["shapes_min"]),
        shapes_max=int(kv["shapes_max"]), colors=colors,
        texture_freq=freqs, texture_amp=amps)


def write_dataset(out_dir, spec, pairs):
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    for i, (mask, img) in enumerate(pairs):
        write_label_png(os.path.join(out_dir, "masks", f"{i:05d}.png"), mask, spec.num_classes)
        write_image_png(os.path.join(out_dir, "images", f"{i:05d}.png"), img)
    with open(os.path.join(out_dir, "world.cfg"), "w") as fh:
        fh.write(_spec_to_cfg(spec))


def load_dataset(data_dir):
    """Returns (spec, label maps (N,H,W) int32, images (N,3,H,W) float32)."""
    with open(os.path.join(data_dir, "world.cfg")) as fh:
        spec = _spec_from_cfg(fh.read())
    mask_dir = os.path.join(data_dir, "masks")
    img_dir = os.path.join(data_dir, "images")
    names = sorted(os.listdir(mask_dir))
    masks = np.stack([read_label_png(os.path.join(mask_dir, f)) for f in names])
    images = np.stack([read_image_png(os.path.join(img_dir, f)) for f in names])
    return spec, masks, images
