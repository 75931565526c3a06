"""Unpaired adversarial training: D vs G, plus cooperative G+S updates.

Each step runs (1) a discriminator update on real images (with R1) and
detached fakes, then (2) a joint generator+segmenter update minimizing
seg_loss(S(G(m)), m) + lambda * adv.  The segmenter only ever sees
generated images; real images are tagged and the UNet refuses them.

Checkpoints are a versioned container: magic "USIS", u32 format version,
u64 manifest length, a JSON manifest (per-tensor name/dtype/shape, global
step, optimizer step counters, RNG state), then the raw little-endian
float32 payloads in manifest order.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .data import SemanticLayout, UnpairedSampler, load_dataset, one_hot
from .losses import compute_class_weights, d_adversarial_loss, g_adversarial_loss, generator_objective, seg_loss
from .models import Discriminator, Generator, GeneratorConfig, UNet, sample_noise
from .tensor import Adam, Tensor
from .wavelet import CHANNELWISE

__all__ = [
    "TrainConfig", "ModelBundle", "TrainingDiverged", "train_step", "fit",
    "save_checkpoint", "load_checkpoint", "load_bundle", "METRIC_FIELDS",
]

CHECKPOINT_MAGIC = b"USIS"
CHECKPOINT_VERSION = 1
METRIC_FIELDS = ("step", "loss_seg", "loss_G_adv", "loss_D", "r1")


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the diagnostic record of the step."""

    def __init__(self, step, metrics):
        super().__init__(f"non-finite loss at step {step}: {metrics}")
        self.step = step
        self.metrics = metrics


@dataclass
class TrainConfig:
    lambda_adv: float = 1.0
    z_dim: int = 16
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    lr_s: float = 1e-4
    batch: int = 8
    steps: int = 3000
    r1_gamma: float = 1.0
    seed: int = 0
    checkpoint_every: int = 500
    # architecture
    g_channels: tuple = (128, 128, 64, 32)
    d_channels: tuple = (32, 64, 128, 256)
    use_wavelet_upsample: bool = True
    use_pixel_spade: bool = True
    arrangement: str = CHANNELWISE
    final_iwt: bool = True
    spade_hidden: int = 32
    spade_mode: str = "batch"
    unet_base: int = 16
    unet_depth: int = 3

    def validate(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if min(self.lr_g, self.lr_d, self.lr_s) < 0:
            raise ValueError("learning rates must be non-negative")

    def generator_config(self, num_classes, image_size):
        return GeneratorConfig(
            num_classes=num_classes, z_dim=self.z_dim, out_size=image_size,
            channels=self.g_channels, use_wavelet_upsample=self.use_wavelet_upsample,
            use_pixel_spade=self.use_pixel_spade, arrangement=self.arrangement,
            final_iwt=self.final_iwt, spade_hidden=self.spade_hidden,
            spade_mode=self.spade_mode)


class ModelBundle:
    """G, D, S with their optimizer states, the global step, and the RNG."""

    def __init__(self, cfg: TrainConfig, num_classes, image_size):
        cfg.validate()
        self.cfg = cfg
        self.num_classes = num_classes
        self.image_size = tuple(image_size)
        init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
        self.generator = Generator(cfg.generator_config(num_classes, self.image_size), init_rng)
        self.discriminator = Discriminator(self.image_size, cfg.d_channels, init_rng)
        self.segmenter = UNet(num_classes, base=cfg.unet_base, depth=cfg.unet_depth, rng=init_rng)
        # TTUR-ish defaults: momentum-free Adam for the adversarial pair
        self.opt_g = Adam(self.generator.params(), lr=cfg.lr_g, beta1=0.0, beta2=0.99)
        self.opt_d = Adam(self.discriminator.params(), lr=cfg.lr_d, beta1=0.0, beta2=0.99)
        self.opt_s = Adam(self.segmenter.params(), lr=cfg.lr_s, beta1=0.9, beta2=0.999)
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        self.step = 0

    def named_arrays(self):
        """Every persistent array, in a stable order."""
        out = {}
        for prefix, model in (("G", self.generator), ("D", self.discriminator), ("S", self.segmenter)):
            for name, p in model.named_params():
                out[f"{prefix}.{name}"] = p.data
        for prefix, opt in (("opt_G", self.opt_g), ("opt_D", self.opt_d), ("opt_S", self.opt_s)):
            for name in opt.m:
                out[f"{prefix}.m.{name}"] = opt.m[name]
            for name in opt.v:
                out[f"{prefix}.v.{name}"] = opt.v[name]
        return out

    def param_tensors(self):
        out = {}
        for prefix, model in (("G", self.generator), ("D", self.discriminator), ("S", self.segmenter)):
            for name, p in model.named_params():
                out[f"{prefix}.{name}"] = p
        return out


def train_step(bundle, masks, images, cfg, weights):
    """One ordered D-then-(G+S) update; returns the step's metric record."""
    if not isinstance(masks, SemanticLayout):
        raise ValueError("train_step expects a SemanticLayout mask batch")
    if images.shape[0] != masks.shape[0]:
        raise ValueError(f"batch mismatch: {masks.shape[0]} masks vs {images.shape[0]} images")
    images.tag_real_image = True
    g, d, s = bundle.generator, bundle.discriminator, bundle.segmenter
    n = masks.shape[0]
    h, w = bundle.image_size

    metrics = {"step": bundle.step, "loss_seg": np.nan, "loss_G_adv": np.nan,
               "loss_D": np.nan, "r1": np.nan}

    def check(name, value):
        metrics[name] = value
        if not np.isfinite(value):
            raise TrainingDiverged(bundle.step, metrics)

    # (1) discriminator on real (with R1) and detached fakes.  The update is
    # applied before the G graph is built: Adam mutates weights in place, so
    # a graph captured earlier would backprop through stale arrays.
    z1 = sample_noise(n, cfg.z_dim, h, w, bundle.rng)
    with T.no_grad():
        fake_for_d = g(masks, z1)
    bundle.opt_d.zero_grad()
    loss_d, r1 = d_adversarial_loss(d, images, fake_for_d, cfg.r1_gamma)
    check("loss_D", loss_d.item())
    check("r1", r1.item())
    loss_d.backward()
    bundle.opt_d.step()

    # (2) joint generator + segmenter; S grads flow only through G(m)
    z2 = sample_noise(n, cfg.z_dim, h, w, bundle.rng)
    fake = g(masks, z2)
    logits = s(fake)
    loss_seg = seg_loss(logits, masks, weights)
    loss_g_adv = g_adversarial_loss(d, fake)
    check("loss_seg", loss_seg.item())
    check("loss_G_adv", loss_g_adv.item())
    objective = generator_objective(loss_seg, loss_g_adv, cfg.lambda_adv)
    bundle.opt_g.zero_grad()
    bundle.opt_s.zero_grad()
    objective.backward()
    bundle.opt_g.step()
    bundle.opt_s.step()

    bundle.step += 1
    return metrics


def _write_metrics_csv(path, history):
    with open(path, "w") as fh:
        fh.write(",".join(METRIC_FIELDS) + "\n")
        for row in history:
            fh.write(",".join(repr(row[k]) if k != "step" else str(row[k]) for k in METRIC_FIELDS) + "\n")


def fit(cfg, dataset, out_dir=None, bundle=None, on_checkpoint=None):
    """Run cfg.steps of training over an unpaired dataset.

    `dataset` is a directory in the standard layout or a (spec, masks,
    images) triple.  Returns (bundle, metrics history).  With out_dir set,
    writes checkpoints on the configured schedule plus metrics.csv.
    """
    cfg.validate()
    if isinstance(dataset, (str, os.PathLike)):
        spec, masks, images = load_dataset(dataset)
    else:
        spec, masks, images = dataset
    num_classes = spec.num_classes
    weights = compute_class_weights(masks, num_classes)
    if bundle is None:
        bundle = ModelBundle(cfg, num_classes, (spec.height, spec.width))
    sampler = UnpairedSampler(len(masks), len(images), cfg.batch, cfg.seed)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    history = []
    try:
        while bundle.step < cfg.steps:
            mi, ii = sampler.batch_at(bundle.step)
            layout = one_hot(masks[mi], num_classes)
            image_batch = Tensor(images[ii])
            metrics = train_step(bundle, layout, image_batch, cfg, weights)
            history.append(metrics)
            done = bundle.step >= cfg.steps
            if out_dir and cfg.checkpoint_every and (bundle.step % cfg.checkpoint_every == 0 or done):
                save_checkpoint(os.path.join(out_dir, f"ckpt_{bundle.step:06d}.usis"), bundle)
                if on_checkpoint:
                    on_checkpoint(bundle)
    except TrainingDiverged as err:
        if out_dir:
            with open(os.path.join(out_dir, f"diverged_step_{err.step}.json"), "w") as fh:
                json.dump(err.metrics, fh, indent=2)
            _write_metrics_csv(os.path.join(out_dir, "metrics.csv"), history)
        raise
    if out_dir:
        _write_metrics_csv(os.path.join(out_dir, "metrics.csv"), history)
    return bundle, history


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(path, bundle):
    arrays = bundle.named_arrays()
    cfg_dict = asdict(bundle.cfg)
    cfg_dict["g_channels"] = list(cfg_dict["g_channels"])
    cfg_dict["d_channels"] = list(cfg_dict["d_channels"])
    manifest = {
        "tensors": [
            {"name": name, "dtype": "f32", "shape": list(arr.shape)}
            for name, arr in arrays.items()
        ],
        "step": bundle.step,
        "opt_steps": {"opt_G": bundle.opt_g.t, "opt_D": bundle.opt_d.t, "opt_S": bundle.opt_s.t},
        "rng_state": bundle.rng.bit_generator.state,
        "config": cfg_dict,
        "num_classes": bundle.num_classes,
        "image_size": list(bundle.image_size),
    }
    blob = json.dumps(manifest).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, bundle):
    """Restore a bundle in place; shapes are validated against its config."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a USIS checkpoint")
    version = struct.unpack("<I", data[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    mlen = struct.unpack("<Q", data[8:16])[0]
    if len(data) < 16 + mlen:
        raise ValueError(f"{path}: truncated manifest")
    manifest = json.loads(data[16:16 + mlen])
    arrays = bundle.named_arrays()
    entries = manifest["tensors"]
    names_here = set(arrays)
    names_there = {e["name"] for e in entries}
    if names_here != names_there:
        missing = sorted(names_here ^ names_there)
        raise ValueError(f"{path}: tensor set mismatch, first offender {missing[0]!r}")
    offset = 16 + mlen
    loaded = {}
    for entry in entries:
        name, shape = entry["name"], tuple(entry["shape"])
        if arrays[name].shape != shape:
            raise ValueError(f"{path}: tensor {name!r} has shape {shape}, expected {arrays[name].shape}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 4
        if offset + nbytes > len(data):
            raise ValueError(f"{path}: truncated payload at tensor {name!r}")
        loaded[name] = np.frombuffer(data[offset:offset + nbytes], dtype="<f4").reshape(shape)
        offset += nbytes
    # nothing is written until the whole file has validated
    for name, arr in loaded.items():
        np.copyto(arrays[name], arr.astype(arrays[name].dtype))
    bundle.step = manifest["step"]
    bundle.opt_g.t = manifest["opt_steps"]["opt_G"]
    bundle.opt_d.t = manifest["opt_steps"]["opt_D"]
    bundle.opt_s.t = manifest["opt_steps"]["opt_S"]
    bundle.rng.bit_generator.state = manifest["rng_state"]
    return bundle


def load_bundle(path):
    """Rebuild a ModelBundle from a checkpoint's embedded configuration."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16 or head[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a USIS checkpoint")
        mlen = struct.unpack("<Q", head[8:16])[0]
        manifest = json.loads(fh.read(mlen))
    cfg_dict = dict(manifest["config"])
    cfg_dict["g_channels"] = tuple(cfg_dict["g_channels"])
    cfg_dict["d_channels"] = tuple(cfg_dict["d_channels"])
    cfg = TrainConfig(**cfg_dict)
    bundle = ModelBundle(cfg, manifest["num_classes"], tuple(manifest["image_size"]))
    return load_checkpoint(path, bundle)
