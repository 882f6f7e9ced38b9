"""Command-line front end.

Subcommands: synth | train | eval | stylize | probe-bias | gradcheck.
Common flags: --config PATH, --seed N, --out DIR. Every run validates its
configuration completely before touching the filesystem and writes a
manifest of produced artifacts under --out. Exit codes: 0 success,
2 usage/configuration, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .biasprobe import FeaturePair, estimate_dimensionality
from .config import RunConfig, load_config
from .errors import (ConfigError, ContractError, DataError,
                     DegenerateInputError, HybridDepthError, NumericError)
from .imgio import load_png, save_png
from .metrics import CSV_HEADER, aggregate, evaluate
from .model import HybridDepthNet
from .numerics import Tensor, grad_check, no_grad, save_tensor, scale_with_wrong_grad
from .scenes import load_dataset, save_dataset
from .selfsup import MomentumSGD, train_step, warp, photometric_loss, smoothness_loss
from .stylize import (SketchParams, WatercolorParams, patch_shuffle,
                      pencil_sketch, watercolor)


def _write_manifest(out: Path, entries: list[str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"artifact {name}" for name in sorted(entries)]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _model_from(config: RunConfig) -> HybridDepthNet:
    return HybridDepthNet(config.model_config())


# ------------------------------------------------------------------ commands

def cmd_synth(args, config: RunConfig) -> int:
    out = Path(args.out)
    dataset_dir = out / "dataset"
    written = save_dataset(dataset_dir, config.scene_spec(), config.synth.scenes)
    _write_manifest(out, [str(p.relative_to(out)) for p in written])
    print(f"wrote {len(written)} scenes to {dataset_dir}")
    return 0


def cmd_train(args, config: RunConfig) -> int:
    samples, cam = load_dataset(Path(args.dataset))
    model = _model_from(config)
    optimizer = MomentumSGD(lr=config.train.lr, momentum=config.train.momentum)
    steps = config.train.steps if args.steps is None else args.steps

    rows = ["step,photometric,smoothness,total"]
    last = None
    for step in range(steps):
        sample = samples[step % len(samples)]
        try:
            last = train_step(model, sample, optimizer, cam,
                              smoothness_weight=config.train.smoothness_weight)
        except NumericError as err:
            raise NumericError(f"step {step}: {err}") from err
        rows.append(f"{step},{last.photometric:.9f},{last.smoothness:.9f},{last.total:.9f}")
        if config.train.log_every and step % config.train.log_every == 0:
            print(f"step {step}: photometric {last.photometric:.5f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "loss.csv").write_text("\n".join(rows) + "\n")
    model.save(out / "checkpoint.mfc")
    _write_manifest(out, ["loss.csv", "checkpoint.mfc"])
    if last is not None:
        print(f"final photometric {last.photometric:.5f} after {steps} steps")
    return 0


def cmd_eval(args, config: RunConfig) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    samples, _ = load_dataset(Path(args.dataset))
    model = _model_from(config)
    model.load(ckpt)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [f"sample,{CSV_HEADER}"]
    pairs = []
    artifacts = []
    for i, sample in enumerate(samples):
        pred = model.predict_depth(sample.target)
        report = evaluate(pred, sample.gt_depth, cap=config.eval.cap,
                          median_scale=config.eval.median_scale)
        rows.append(f"sample_{i:03d},{report.csv_row()}")
        pairs.append((pred, sample.gt_depth))
        png = f"depth_{i:03d}.png"
        save_png(out / png, pred / config.model.d_max, bits=16)
        save_tensor(out / f"depth_{i:03d}.mft", pred)
        artifacts.extend([png, f"depth_{i:03d}.mft"])
    agg = aggregate(pairs, cap=config.eval.cap, median_scale=config.eval.median_scale)
    rows.append(f"aggregate,{agg.csv_row()}")
    (out / "metrics.csv").write_text("\n".join(rows) + "\n")
    _write_manifest(out, artifacts + ["metrics.csv"])
    print(f"aggregate abs_rel {agg.abs_rel:.4f} over {len(samples)} samples")
    return 0


def _stylizer(config: RunConfig, style: str):
    s = config.stylize
    if style == "pencil":
        return lambda img, k: pencil_sketch(img, SketchParams(blur_sigma=s.sketch_blur_sigma))
    if style == "watercolor":
        params = WatercolorParams(iterations=s.watercolor_iterations,
                                  sigma_spatial=s.watercolor_sigma_spatial,
                                  sigma_range=s.watercolor_sigma_range)
        return lambda img, k: watercolor(img, params)
    if style == "shuffle":
        return lambda img, k: patch_shuffle(img, s.shuffle_patch, seed=k)
    raise ConfigError(f"unknown style {style!r}; valid: pencil, watercolor, shuffle")


def cmd_stylize(args, config: RunConfig) -> int:
    style = args.style or config.stylize.style
    apply = _stylizer(config, style)
    src = Path(args.input)
    images = sorted(src.rglob("*.png"))
    if not images:
        raise ConfigError(f"no PNG images under {src}")
    out = Path(args.out)
    target = out / style
    target.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for k, path in enumerate(images):
        result = apply(load_png(path), k)
        save_png(target / path.name, result)
        artifacts.append(f"{style}/{path.name}")
    _write_manifest(out, artifacts)
    print(f"stylized {len(images)} images -> {target}")
    return 0


def _load_corpus(folder: Path) -> dict[str, np.ndarray]:
    return {p.name: load_png(p) for p in sorted(folder.glob("*.png"))}


def cmd_probe_bias(args, config: RunConfig) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    originals = _load_corpus(Path(args.original))
    shape_shift = _load_corpus(Path(args.shape_dir))
    texture_shift = _load_corpus(Path(args.texture_dir))
    if not originals:
        raise ConfigError(f"no PNG images under {args.original}")
    if set(originals) != set(shape_shift) or set(originals) != set(texture_shift):
        raise ConfigError("corpora are not paired: file names must match across the three folders")

    model = _model_from(config)
    model.load(ckpt)
    tap = (model.token_features if config.probe.tap == "transformer"
           else model.stem_features)

    pairs = []
    for name in sorted(originals):
        pairs.append(FeaturePair(tap(originals[name]), tap(shape_shift[name]), "shape"))
        pairs.append(FeaturePair(tap(originals[name]), tap(texture_shift[name]), "texture"))
    report = estimate_dimensionality(pairs, threshold=config.probe.threshold)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bias.csv").write_text("\n".join(report.csv_rows()) + "\n")
    _write_manifest(out, ["bias.csv"])
    print(f"tap={config.probe.tap} shape={report.shape_count} texture={report.texture_count} "
          f"of {report.dimensionality} dimensions")
    return 0


def _gradcheck_blocks(config: RunConfig, corrupt: bool):
    """Named (callable, inputs, tol) triples covering every trainable block."""
    model = _model_from(config)
    rng = np.random.default_rng(config.seed + 7)
    h, w = config.synth.height, config.synth.width
    image = Tensor(rng.uniform(0.1, 0.9, (3, h, w)))
    with no_grad():
        tokens = model.backbone.forward(Tensor(image.data.copy()))
    n_tokens = tokens.z.shape[0]
    grid_hw = tokens.grid_hw
    c = config.model.embed_dim
    z_tokens = Tensor(rng.normal(size=(n_tokens, c)))
    patch = Tensor(rng.normal(size=(n_tokens - 1, c)))
    layer0 = model.encoder.layers_[0]
    stage0 = model.decoder.stages[0]
    skip0 = model.skips.layers_[0]

    from .attention_skip import AttentionPair, gram_attention

    def fusion(t):
        pair = AttentionPair(position=Tensor(rng.normal(size=t.shape)),
                             channel=Tensor(rng.normal(size=t.shape)))
        prev = Tensor(np.zeros(t.shape))
        return (stage0.forward(t, pair, prev, grid_hw) ** 2).sum()

    cam = config.scene_spec().camera()
    from .selfsup import Pose
    a = np.deg2rad(0.4)
    rot = np.array([[np.cos(a), 0, np.sin(a)], [0, 1, 0], [-np.sin(a), 0, np.cos(a)]])
    pose = Pose(rot, [0.05, 0.03, 0.02])
    src_img = rng.uniform(0.2, 0.8, (h, w, 3))
    tgt_img = rng.uniform(0.2, 0.8, (h, w, 3))
    smooth_target = 0.5 + 0.1 * np.sin(np.linspace(0, 6, h))[:, None] * np.cos(np.linspace(0, 6, w))[None, :]
    depth0 = Tensor(4.0 + smooth_target)

    def warp_photometric(d):
        wimg, m = warp(src_img, d, pose, cam)
        return photometric_loss(tgt_img, wimg, m)

    small = min(32, h)
    small_model = _model_from(config)
    small_image = Tensor(rng.uniform(0.2, 0.8, (3, small, small)))

    blocks = [
        ("stem", lambda t: (model.backbone.stem_forward(t) ** 2).mean(), image, 1e-4),
        ("encoder_layer", lambda t: (layer0.forward(t)[0] ** 2).mean(), z_tokens, 1e-4),
        ("token_attention", lambda t: (skip0.forward(t) ** 2).mean(), patch, 1e-4),
        ("gram_attention", lambda t: (gram_attention(t) ** 2).mean(), patch, 1e-4),
        ("fusion_stage", fusion, Tensor(patch.data.copy()), 1e-4),
        ("full_model", lambda t: small_model.forward(t).mean(), small_image, 1e-4),
        ("warp_photometric", warp_photometric, depth0, 1e-3),
        ("smoothness_loss", lambda d: smoothness_loss(d, tgt_img), Tensor(depth0.data.copy()), 1e-4),
    ]
    if corrupt:
        blocks.append(("corrupted_control",
                       lambda t: scale_with_wrong_grad(t).sum(),
                       Tensor(rng.normal(size=8)), 1e-4))
    return blocks


def cmd_gradcheck(args, config: RunConfig) -> int:
    rng = np.random.default_rng(config.seed)
    failed = []
    for name, fn, x, tol in _gradcheck_blocks(config, args.corrupt):
        report = grad_check(fn, x, tol=tol, max_coords_per_input=48, rng=rng)
        status = "pass" if report.passed else "FAIL"
        print(f"{name:20s} {status}  rel_error={report.rel_error:.3e}  tol={tol:.0e}")
        if not report.passed:
            failed.append(name)
    if failed:
        raise NumericError(f"gradient check failed for: {', '.join(failed)}")
    print("all gradient checks passed")
    return 0


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybriddepth",
        description="Desk-scale hybrid depth network: synthesize, train, evaluate, probe.")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the full default configuration and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", default=None, help="key-value config file")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic multi-view dataset")
    common(p)

    p = sub.add_parser("train", help="train the depth network")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("stylize", help="apply a texture-shift generator to a corpus")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--style", default=None, choices=["pencil", "watercolor", "shuffle"])

    p = sub.add_parser("probe-bias", help="shape/texture dimensionality of encoder features")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--shape-dir", required=True, help="shape-preserving counterparts")
    p.add_argument("--texture-dir", required=True, help="texture-preserving counterparts")

    p = sub.add_parser("gradcheck", help="finite-difference check of every block")
    common(p)
    p.add_argument("--corrupt", action="store_true",
                   help="add a deliberately wrong-gradient block (must fail)")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "stylize": cmd_stylize,
    "probe-bias": cmd_probe_bias,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_config:
        print(RunConfig().dump(), end="")
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        config.validate()
        return COMMANDS[args.command](args, config)
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3
    except (ConfigError, ContractError, DataError, DegenerateInputError,
            HybridDepthError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
