"""Command line entry point: dataset generation, training, evaluation,
subband visualization, and sampling.

Every command is deterministic under a fixed --seed.  A flat `key = value`
file given via --config can stand in for flags; explicit flags win.  The
env var WAVEGEN_THREADS caps worker parallelism for dataset generation.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import tensor as T
from .data import (ShapesWorldSpec, default_palette, generate_world, load_dataset,
                   one_hot, parse_flat_config, read_image_png, read_label_png,
                   write_dataset, write_image_png)
from .evaluate import evaluate_bundle
from .models import sample_noise
from .train import TrainConfig, fit, load_bundle
from .wavelet import CHANNELWISE, SPATIAL, dwt


def _parse_size(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ValueError(f"size must look like 64x64, got {text!r}")


def _merge_config(args, parser, argv):
    """Fill unset flags from a flat key=value file; explicit flags win."""
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        kv = parse_flat_config(fh.read())
    explicit = {tok.split("=", 1)[0][2:].replace("-", "_")
                for tok in argv if tok.startswith("--")}
    for action in parser._actions:
        dest = action.dest
        if dest in ("help", "config") or dest not in kv or dest in explicit:
            continue
        raw = kv[dest]
        if isinstance(action, argparse._StoreTrueAction):
            setattr(args, dest, raw.lower() in ("1", "true", "yes", "on"))
        elif action.type is not None:
            setattr(args, dest, action.type(raw))
        else:
            setattr(args, dest, raw)
    return args


def _tile(images, cols):
    """Stack (3,H,W) arrays into one grid image."""
    images = [np.asarray(im) for im in images]
    rows = (len(images) + cols - 1) // cols
    _, h, w = images[0].shape
    grid = np.full((3, rows * h, cols * w), 1.0, np.float32)
    for i, im in enumerate(images):
        r, c = divmod(i, cols)
        grid[:, r * h:(r + 1) * h, c * w:(c + 1) * w] = im
    return grid


def _colorize_mask(label_map, palette):
    pal = np.asarray(palette, np.float32) / 127.5 - 1.0
    return pal[label_map].transpose(2, 0, 1)


# -- generate-data ---------------------------------------------------------------


def cmd_generate_data(args):
    h, w = _parse_size(args.size)
    spec = ShapesWorldSpec(num_classes=args.classes, height=h, width=w, seed=args.seed)
    pairs = generate_world(spec, args.count)
    write_dataset(args.out, spec, pairs)
    masks = np.stack([m for m, _ in pairs])
    freqs = np.bincount(masks.reshape(-1), minlength=args.classes) / masks.size
    print(f"wrote {args.count} mask/image pairs to {args.out}")
    for c, f in enumerate(freqs):
        print(f"  class {c}: {f:.3f} of pixels")
    return 0


# -- train -----------------------------------------------------------------------


def _sample_grid(bundle, spec, label_map, seed):
    layout = one_hot(np.repeat(label_map[None], 3, axis=0), bundle.num_classes)
    rng = np.random.default_rng(np.random.SeedSequence([seed, bundle.step, 2]))
    z = sample_noise(3, bundle.cfg.z_dim, spec.height, spec.width, rng)
    with T.no_grad():
        fakes = bundle.generator(layout, z)
    tiles = [_colorize_mask(label_map, spec.colors)] + [fakes.data[i] for i in range(3)]
    return _tile(tiles, cols=4)


def cmd_train(args):
    cfg = TrainConfig(
        lambda_adv=args.lambda_adv, z_dim=args.z_dim, batch=args.batch,
        steps=args.steps, seed=args.seed, lr_g=args.lr_g, lr_d=args.lr_d,
        lr_s=args.lr_s, r1_gamma=args.r1_gamma, checkpoint_every=args.checkpoint_every,
        use_wavelet_upsample=not (args.no_wu or args.final_iwt_only),
        use_pixel_spade=not (args.no_ps or args.final_iwt_only),
        arrangement=SPATIAL if args.spatial else CHANNELWISE,
    )
    spec, masks, images = load_dataset(args.data)

    def on_checkpoint(bundle):
        grid = _sample_grid(bundle, spec, masks[0], cfg.seed)
        write_image_png(os.path.join(args.out, f"samples_{bundle.step:06d}.png"), grid)

    bundle, history = fit(cfg, (spec, masks, images), out_dir=args.out,
                          on_checkpoint=on_checkpoint)
    last = history[-1] if history else {}
    print(f"trained {bundle.step} steps; final losses: " +
          ", ".join(f"{k}={v:.4f}" for k, v in last.items() if k != "step"))
    return 0


# -- eval ------------------------------------------------------------------------


def cmd_eval(args):
    bundle = load_bundle(args.ckpt)
    spec, masks, images = load_dataset(args.data)
    if spec.num_classes != bundle.num_classes:
        raise ValueError(f"checkpoint has {bundle.num_classes} classes, dataset {spec.num_classes}")
    report, fakes = evaluate_bundle(bundle, spec, masks, images,
                                    oracle=args.oracle, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.csv"), "w") as fh:
        fh.write("metric,value\n")
        fh.write(f"miou,{report['miou']!r}\n")
        fh.write(f"spectrum_distance,{report['spectrum_distance']!r}\n")
    n_show = min(8, len(masks))
    tiles = []
    for i in range(n_show):
        tiles.append(_colorize_mask(masks[i], spec.colors))
        tiles.append(fakes[i])
    write_image_png(os.path.join(args.out, "eval_samples.png"), _tile(tiles, cols=4))
    print(f"miou={report['miou']:.4f} spectrum_distance={report['spectrum_distance']:.6f}")
    return 0


# -- dwt -------------------------------------------------------------------------


def _render_detail(coef):
    scale = max(float(np.abs(coef).max()), 1e-12)
    return coef / scale  # [-1,1]; zeros land on mid-gray


def cmd_dwt(args):
    img = read_image_png(args.input)
    if img.shape[1] % 2 or img.shape[2] % 2:
        raise ValueError(f"image extents must be even, got {img.shape[1]}x{img.shape[2]}")
    os.makedirs(args.out, exist_ok=True)
    current = T.Tensor(img[None])
    if args.spatial:
        canvas = _spatial_pyramid(current, args.levels)
        path = os.path.join(args.out, "pyramid.png")
        write_image_png(path, canvas)
        print(f"wrote {path}")
        return 0
    written = []
    for level in range(1, args.levels + 1):
        if current.shape[2] % 2 or current.shape[3] % 2:
            raise ValueError(f"level {level}: extents {current.shape[2:]} not even")
        wf = dwt(current, CHANNELWISE)
        ll, lh, hl, hh = (wf.tensor.data[0, 3 * i:3 * (i + 1)] for i in range(4))
        for name, coef in (("LH", lh), ("HL", hl), ("HH", hh)):
            path = os.path.join(args.out, f"level{level}_{name}.png")
            write_image_png(path, _render_detail(coef))
            written.append(path)
        if level == args.levels:
            path = os.path.join(args.out, f"level{level}_LL.png")
            write_image_png(path, np.clip(ll / 2.0 ** level, -1, 1))
            written.append(path)
        current = T.Tensor(ll[None])
    print(f"wrote {len(written)} subband files to {args.out}")
    return 0


def _spatial_pyramid(x, levels):
    """Nested quadrant mosaic: details contrast-scaled, LL recursed."""
    wf = dwt(x, CHANNELWISE)
    ll, lh, hl, hh = (wf.tensor.data[0, 3 * i:3 * (i + 1)] for i in range(4))
    if levels > 1 and ll.shape[1] % 2 == 0 and ll.shape[2] % 2 == 0:
        top_left = _spatial_pyramid(T.Tensor(ll[None]), levels - 1)
    else:
        top_left = np.clip(ll / 2.0, -1, 1)
    top = np.concatenate([top_left, _render_detail(lh)], axis=2)
    bot = np.concatenate([_render_detail(hl), _render_detail(hh)], axis=2)
    return np.concatenate([top, bot], axis=1)


# -- sample ------------------------------------------------------------------------


def cmd_sample(args):
    bundle = load_bundle(args.ckpt)
    lm = read_label_png(args.mask)
    if lm.max() >= bundle.num_classes:
        raise ValueError(f"mask contains class id {lm.max()}, model has {bundle.num_classes} classes")
    h, w = bundle.image_size
    if lm.shape != (h, w):
        raise ValueError(f"mask is {lm.shape[0]}x{lm.shape[1]}, model generates {h}x{w}")
    layout = one_hot(np.repeat(lm[None], args.count, axis=0), bundle.num_classes)
    rng = np.random.default_rng(args.seed)
    z = sample_noise(args.count, bundle.cfg.z_dim, h, w, rng)
    with T.no_grad():
        fakes = bundle.generator(layout, z)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        write_image_png(os.path.join(args.out, f"sample_{i:03d}.png"), fakes.data[i])
    tiles = [_colorize_mask(lm, default_palette(bundle.num_classes))]
    tiles += [fakes.data[i] for i in range(args.count)]
    write_image_png(os.path.join(args.out, "grid.png"), _tile(tiles, cols=min(4, args.count + 1)))
    print(f"wrote {args.count} samples to {args.out}")
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="wavegen",
                                description="Unpaired semantic image synthesis in the wavelet domain")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="render a synthetic shapes dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--size", default="64x64")
    g.add_argument("--count", type=int, default=512)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config")
    g.set_defaults(func=cmd_generate_data, parser=g)

    t = sub.add_parser("train", help="run unpaired adversarial training")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, default=3000)
    t.add_argument("--lambda", dest="lambda_adv", type=float, default=1.0)
    t.add_argument("--z-dim", type=int, default=16)
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lr-g", type=float, default=1e-4)
    t.add_argument("--lr-d", type=float, default=4e-4)
    t.add_argument("--lr-s", type=float, default=1e-4)
    t.add_argument("--r1-gamma", type=float, default=1.0)
    t.add_argument("--checkpoint-every", type=int, default=500)
    t.add_argument("--no-wu", action="store_true", help="nearest upsampling on both branches")
    t.add_argument("--no-ps", action="store_true", help="plain SPADE on the coefficients")
    t.add_argument("--spatial", action="store_true", help="spatial subband arrangement")
    t.add_argument("--final-iwt-only", action="store_true",
                   help="disable WU and pixelSPADE, keep only the output IWT")
    t.add_argument("--config")
    t.set_defaults(func=cmd_train, parser=t)

    e = sub.add_parser("eval", help="oracle mIoU + spectrum distance for a checkpoint")
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--oracle", choices=["color", "unet"], default="color")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval, parser=e)

    d = sub.add_parser("dwt", help="write Haar subband visualizations of an image")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--levels", type=int, default=1)
    d.add_argument("--spatial", action="store_true", help="one nested quadrant mosaic")
    d.add_argument("--config")
    d.set_defaults(func=cmd_dwt, parser=d)

    s = sub.add_parser("sample", help="draw several generations from one mask")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--count", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_sample, parser=s)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args, args.parser, argv)
        return args.func(args)
    except Exception as err:  # one-line cause, nonzero exit
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
