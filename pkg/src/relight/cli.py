"""Command-line entry point.

Every command is non-interactive and exits nonzero on failure. Training
commands accept a JSON config file with flat dotted keys (e.g.
``{"train.epochs": 50}``); explicit flags win over file values, and the
fully resolved config is written next to the produced checkpoint. Set the
RELIGHT_LOG environment variable (DEBUG/INFO/WARNING) to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import ablation, data, metrics, training
from .decomposition import (
    DecompNet,
    DecompTrainConfig,
    decompose,
    train_decomposition,
)
from .enhancement import UNetSpec
from .errors import ConfigError, RelightError
from .imaging import load_image, resize_image, save_image
from . import checkpoint as ckpt_io
from . import netops

log = logging.getLogger("relight")


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from exc


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object with dotted keys")
    return cfg


def _resolve(file_cfg: dict, overrides: dict) -> dict:
    resolved = dict(file_cfg)
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    return resolved


def _write_resolved(resolved: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    serializable = {
        k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(resolved.items())
    }
    with open(out_dir / "config.resolved.json", "w") as fh:
        json.dump(serializable, fh, indent=2, sort_keys=True)


def _decomp_config(resolved: dict) -> DecompTrainConfig:
    return DecompTrainConfig(
        lr=float(resolved.get("decomp.lr", 0.001)),
        decay=float(resolved.get("decomp.decay", 0.9)),
        decay_every=int(resolved.get("decomp.decay_every", 20)),
        iterations=int(resolved.get("decomp.iterations", 100)),
        patch_count=int(resolved.get("decomp.patch_count", 16)),
        patch_size=int(resolved.get("decomp.patch_size", 64)),
        width=int(resolved.get("decomp.width", 64)),
        seed=int(resolved.get("decomp.seed", 0)),
    )


def _gan_config(resolved: dict) -> training.TrainConfig:
    plan = tuple(resolved.get("model.unet_channel_plan", UNetSpec().channel_plan))
    unet = UNetSpec(
        input_size=int(resolved.get("model.input_size", 256)),
        num_down=len(plan) - 1,
        num_up=len(plan) - 1,
        channel_plan=plan,
    )
    return training.TrainConfig(
        lr_gen=float(resolved.get("train.lr_gen", 0.0002)),
        lr_disc=float(resolved.get("train.lr_disc", 0.0002)),
        decay=float(resolved.get("train.decay", 0.5)),
        epochs=int(resolved.get("train.epochs", 500)),
        batch_size=int(resolved.get("train.batch_size", 8)),
        seed=int(resolved.get("train.seed", 0)),
        freeze_decomp=bool(resolved.get("train.freeze_decomp", True)),
        checkpoint_every=int(resolved.get("train.checkpoint_every", 100)),
        unet=unet,
        disc_widths=tuple(resolved.get("model.disc_widths", (64, 128, 256, 512))),
    )


def _cmd_make_synthetic(args) -> int:
    out = Path(args.out)
    if args.mode == "paired":
        data.make_paired_corpus(out, args.n, args.seed, size=args.size)
    else:
        data.make_unpaired_corpus(out, args.n, args.seed, size=args.size)
    log.info("wrote %s corpus of %d images to %s", args.mode, args.n, out)
    return 0


def _cmd_train_decomp(args) -> int:
    resolved = _resolve(
        _load_config_file(args.config),
        {
            "decomp.iterations": args.iterations,
            "decomp.seed": args.seed,
            "decomp.width": args.width,
            "decomp.lr": args.lr,
            "data.paired_dir": str(args.paired_dir),
        },
    )
    config = _decomp_config(resolved)
    paired = data.load_paired_dir(args.paired_dir)
    out_dir = Path(args.out)
    _write_resolved(resolved, out_dir)
    train_decomposition(config, paired, out_dir)
    log.info("decomposition checkpoint written to %s", out_dir / "decomp.ckpt")
    return 0


def _cmd_train_gan(args) -> int:
    resolved = _resolve(
        _load_config_file(args.config),
        {
            "train.epochs": args.epochs,
            "train.batch_size": args.batch_size,
            "train.seed": args.seed,
            "train.lr_gen": args.lr_gen,
            "train.lr_disc": args.lr_disc,
            "train.checkpoint_every": args.checkpoint_every,
            "train.freeze_decomp": None if args.finetune_decomp is None else not args.finetune_decomp,
            "model.input_size": args.input_size,
            "model.unet_channel_plan": args.unet_channels,
            "model.disc_widths": args.disc_channels,
            "data.low_dir": str(args.low_dir),
            "data.high_dir": str(args.high_dir),
        },
    )
    config = _gan_config(resolved)
    dataset = data.load_unpaired_dirs(args.low_dir, args.high_dir)
    out_dir = Path(args.out)
    _write_resolved(resolved, out_dir)
    training.train_gan(config, dataset, args.decomp_ckpt, out_dir)
    log.info("GAN checkpoint written to %s", out_dir / "gan.ckpt")
    return 0


def _enhance_one(enhance_fn, input_size: int, src: Path, dst: Path) -> None:
    img = load_image(src)
    h, w = img.shape[:2]
    out = enhance_fn(resize_image(img, input_size, input_size))
    save_image(np.clip(resize_image(out, h, w), 0.0, 1.0), dst)


def _cmd_enhance(args) -> int:
    enhance_fn, meta = ablation.load_enhancer(args.ckpt)
    input_size = int(meta["unet"]["input_size"])
    src = Path(args.input)
    dst = Path(args.out)
    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        for path in sorted(src.glob("*.png")):
            _enhance_one(enhance_fn, input_size, path, dst / path.name)
    else:
        if dst.suffix.lower() != ".png":
            dst.mkdir(parents=True, exist_ok=True)
            dst = dst / src.name
        _enhance_one(enhance_fn, input_size, src, dst)
    if args.dump_intermediates:
        bundle = getattr(enhance_fn, "bundle", None)
        if bundle is None:
            raise ConfigError("--dump-intermediates needs a retinex checkpoint")
        first = src if src.is_file() else sorted(src.glob("*.png"))[0]
        img = resize_image(load_image(first), input_size, input_size)
        ablation.dump_intermediates(bundle, img, args.dump_intermediates)
    return 0


def _load_decomp_any(path) -> DecompNet:
    tensors, meta = ckpt_io.load_tensors(path)
    width = int(meta.get("width", meta.get("decomp_width", 64)))
    net = DecompNet(width=width, seed=0)
    netops.load_state(net, tensors, "decomp")
    return net


def _cmd_decompose(args) -> int:
    net = _load_decomp_any(args.ckpt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = decompose(net, load_image(args.input))
    save_image(result.R, out_dir / "r.png")
    save_image(result.I, out_dir / "i.png")
    return 0


def _cmd_evaluate(args) -> int:
    model = metrics.load_niqe_model(args.niqe_model)
    report = metrics.evaluate(
        args.pred_dir, args.gt_dir,
        out_csv=args.out_csv, out_json=args.out_json, niqe_model=model,
    )
    mean = report["mean"]
    print(
        f"mse {mean['mse']:.4f}  ssim {mean['ssim']:.4f}  "
        f"niqe_ratio {mean['niqe_ratio']:.4f}  ({len(report['per_image'])} images)"
    )
    return 0


def _parse_external(items) -> dict:
    external = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--external expects NAME=DIR, got {item!r}")
        name, _, path = item.partition("=")
        external[name] = path
    return external


def _cmd_ablate(args) -> int:
    resolved = _resolve(
        _load_config_file(args.config),
        {
            "train.epochs": args.epochs,
            "train.batch_size": args.batch_size,
            "train.seed": args.seed,
            "model.input_size": args.input_size,
            "model.unet_channel_plan": args.unet_channels,
            "model.disc_widths": args.disc_channels,
            "variant.ids": ",".join(args.variants),
        },
    )
    config = _gan_config(resolved)
    dataset = data.load_unpaired_dirs(args.low_dir, args.high_dir)
    out_dir = Path(args.out)
    _write_resolved(resolved, out_dir)
    csv_path = ablation.run_ablation(
        args.variants,
        config,
        dataset,
        args.decomp_ckpt,
        args.eval_low_dir,
        args.eval_gt_dir,
        out_dir,
        external=_parse_external(args.external),
    )
    print(csv_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relight",
        description="Retinex-decomposition + cycle-consistent adversarial low-light enhancement",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("paired", "unpaired"), default="paired")
    p.add_argument("--size", type=int, default=256)
    p.set_defaults(func=_cmd_make_synthetic)

    p = sub.add_parser("train-decomp", help="train the decomposition net on paired data")
    p.add_argument("--paired-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=_cmd_train_decomp)

    p = sub.add_parser("train-gan", help="adversarial training on unpaired data")
    p.add_argument("--low-dir", required=True)
    p.add_argument("--high-dir", required=True)
    p.add_argument("--decomp-ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr-gen", type=float)
    p.add_argument("--lr-disc", type=float)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--finetune-decomp", action="store_true", default=None,
                   help="also fine-tune the decomposition weights")
    p.add_argument("--input-size", type=int)
    p.add_argument("--unet-channels", type=_int_tuple)
    p.add_argument("--disc-channels", type=_int_tuple)
    p.set_defaults(func=_cmd_train_gan)

    p = sub.add_parser("enhance", help="enhance an image or directory")
    p.add_argument("--input", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-intermediates", metavar="DIR")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("decompose", help="write the R/I decomposition of an image")
    p.add_argument("--input", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("evaluate", help="metric report over matching prediction/GT dirs")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.add_argument("--niqe-model")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="train and compare pipeline variants")
    p.add_argument("--variants", type=lambda s: s.split(","), required=True)
    p.add_argument("--low-dir", required=True)
    p.add_argument("--high-dir", required=True)
    p.add_argument("--eval-low-dir", required=True)
    p.add_argument("--eval-gt-dir", required=True)
    p.add_argument("--decomp-ckpt")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--input-size", type=int)
    p.add_argument("--unet-channels", type=_int_tuple)
    p.add_argument("--disc-channels", type=_int_tuple)
    p.add_argument("--external", action="append", metavar="NAME=DIR")
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RELIGHT_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RelightError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
