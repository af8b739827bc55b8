"""Comparison variants sharing one training harness.

Three trainable variants: a plain image-to-image GAN, a retinex-aware GAN
with the decomposition front end but only the forward chain, and the full
cycle model. All variants share optimizer settings, seeds, and schedules
(the schedule hash is recorded in every checkpoint); they differ only in
loss composition and network input/output widths.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np
import torch

from . import checkpoint, metrics, netops
from .adversarial import PatchDiscriminator, bce
from .data import UnpairedDataset, load_image_dir
from .decomposition import DecompNet, decompose, load_decomp_checkpoint
from .enhancement import EnhanceNet, GeneratorBundle, UNetSpec, build_unet, generate, generate_t
from .errors import ConfigError, FormatError
from .imaging import resize_image, save_image
from .training import (
    TrainConfig,
    lr_at_epoch,
    schedule_hash,
    train_gan,
    _set_lr,
    _set_requires_grad,
)

VARIANT_IDS = ("plain_gan", "retinex_gan", "retinex_cyclegan")

STAGE_FILES = ("s_low.png", "r_low.png", "i_low.png", "i_high_prime.png", "s_high_prime.png")


@dataclass(frozen=True)
class VariantSpec:
    id: str
    use_decomposition: bool
    use_cycle: bool

    def __post_init__(self):
        if self.id not in VARIANT_IDS:
            raise ConfigError(f"unknown variant {self.id!r}, expected one of {VARIANT_IDS}")
        expected = {
            "plain_gan": (False, False),
            "retinex_gan": (True, False),
            "retinex_cyclegan": (True, True),
        }[self.id]
        if (self.use_decomposition, self.use_cycle) != expected:
            raise ConfigError(
                f"variant {self.id} requires toggles {expected}, "
                f"got ({self.use_decomposition}, {self.use_cycle})"
            )

    @classmethod
    def from_id(cls, variant_id: str) -> "VariantSpec":
        toggles = {
            "plain_gan": (False, False),
            "retinex_gan": (True, False),
            "retinex_cyclegan": (True, True),
        }
        if variant_id not in toggles:
            raise ConfigError(f"unknown variant {variant_id!r}, expected one of {VARIANT_IDS}")
        return cls(variant_id, *toggles[variant_id])


def _plain_spec(unet: UNetSpec) -> UNetSpec:
    # same geometry, but a direct 3-channel image-to-image mapping
    return replace(unet, channel_plan=(3,) + unet.channel_plan[1:], out_channels=3)


def _epoch_batches(rng, dataset: UnpairedDataset, batch_size: int):
    n = min(len(dataset.lows), len(dataset.highs))
    order_low = rng.permutation(len(dataset.lows))
    order_high = rng.permutation(len(dataset.highs))
    for step in range(n // batch_size):
        sel_l = order_low[step * batch_size : (step + 1) * batch_size]
        sel_h = order_high[step * batch_size : (step + 1) * batch_size]
        yield (
            step,
            netops.stack_to_batch([dataset.lows[i] for i in sel_l]),
            netops.stack_to_batch([dataset.highs[i] for i in sel_h]),
        )


def _train_plain_gan(config: TrainConfig, dataset: UnpairedDataset, out_dir: Path) -> Path:
    gen = build_unet(_plain_spec(config.unet), seed=config.seed + 101, direction="g2")
    disc = PatchDiscriminator(config.disc_widths, seed=config.seed + 103, direction="d_high")
    opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr_gen, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr_disc, betas=(0.5, 0.999))
    rng = np.random.default_rng(config.seed)

    with open(out_dir / "plain_gan_loss.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "step", "gen_G", "disc_high", "lr"))
        for epoch in range(config.epochs):
            lr_g = lr_at_epoch(config.lr_gen, config.decay, epoch, config.epochs)
            _set_lr(opt_g, lr_g)
            _set_lr(opt_d, lr_at_epoch(config.lr_disc, config.decay, epoch, config.epochs))
            for step, x_low, x_high in _epoch_batches(rng, dataset, config.batch_size):
                _set_requires_grad(disc, False)
                fake = gen(x_low)
                loss_g = bce(disc(fake), 1.0)
                opt_g.zero_grad(set_to_none=True)
                loss_g.backward()
                opt_g.step()
                _set_requires_grad(disc, True)

                loss_d = bce(disc(fake.detach()), 0.0) + bce(disc(x_high), 1.0)
                opt_d.zero_grad(set_to_none=True)
                loss_d.backward()
                opt_d.step()
                writer.writerow(
                    [epoch, step, f"{loss_g.item():.8f}", f"{loss_d.item():.8f}", f"{lr_g:.8f}"]
                )

    ckpt = out_dir / "plain_gan.ckpt"
    tensors = {**netops.collect_state(gen, "g2"), **netops.collect_state(disc, "d_high")}
    checkpoint.save_tensors(
        ckpt,
        tensors,
        {
            "kind": "plain_gan",
            "unet": asdict(gen.spec),
            "disc_widths": list(disc.widths),
            "seed": config.seed,
            "epochs": config.epochs,
            "schedule_hash": schedule_hash(config),
        },
    )
    return ckpt


def _train_retinex_gan(
    config: TrainConfig, dataset: UnpairedDataset, decomp_ckpt, out_dir: Path
) -> Path:
    decomp, _ = load_decomp_checkpoint(decomp_ckpt)
    _set_requires_grad(decomp, False)
    g2 = build_unet(config.unet, seed=config.seed + 101, direction="g2")
    f2 = build_unet(config.unet, seed=config.seed + 102, direction="f2")
    disc = PatchDiscriminator(config.disc_widths, seed=config.seed + 103, direction="d_high")
    opt_g = torch.optim.Adam(
        list(g2.parameters()) + list(f2.parameters()), lr=config.lr_gen, betas=(0.5, 0.999)
    )
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr_disc, betas=(0.5, 0.999))
    rng = np.random.default_rng(config.seed)
    g = GeneratorBundle(decomp, g2)
    f = GeneratorBundle(decomp, f2)

    with open(out_dir / "retinex_gan_loss.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "step", "cyc_S", "cyc_total", "gen_G", "disc_high", "lr"))
        for epoch in range(config.epochs):
            lr_g = lr_at_epoch(config.lr_gen, config.decay, epoch, config.epochs)
            _set_lr(opt_g, lr_g)
            _set_lr(opt_d, lr_at_epoch(config.lr_disc, config.decay, epoch, config.epochs))
            for step, x_low, x_high in _epoch_batches(rng, dataset, config.batch_size):
                # forward chain only: low -> high' -> low''
                _set_requires_grad(disc, False)
                s_high_p, _ = generate_t(g, x_low)
                s_low_pp, _ = generate_t(f, s_high_p, graph_decomp_input=True)
                cyc_s = (s_low_pp - x_low).abs().mean()
                loss_g = cyc_s + bce(disc(s_high_p), 1.0)
                opt_g.zero_grad(set_to_none=True)
                loss_g.backward()
                opt_g.step()
                _set_requires_grad(disc, True)

                loss_d = bce(disc(s_high_p.detach()), 0.0) + bce(disc(x_high), 1.0)
                opt_d.zero_grad(set_to_none=True)
                loss_d.backward()
                opt_d.step()
                writer.writerow(
                    [
                        epoch,
                        step,
                        f"{cyc_s.item():.8f}",
                        f"{cyc_s.item():.8f}",
                        f"{loss_g.item():.8f}",
                        f"{loss_d.item():.8f}",
                        f"{lr_g:.8f}",
                    ]
                )

    ckpt = out_dir / "retinex_gan.ckpt"
    tensors = {
        **netops.collect_state(decomp, "decomp"),
        **netops.collect_state(g2, "g2"),
        **netops.collect_state(f2, "f2"),
        **netops.collect_state(disc, "d_high"),
    }
    checkpoint.save_tensors(
        ckpt,
        tensors,
        {
            "kind": "retinex_gan",
            "decomp_width": decomp.width,
            "unet": asdict(g2.spec),
            "disc_widths": list(disc.widths),
            "seed": config.seed,
            "epochs": config.epochs,
            "schedule_hash": schedule_hash(config),
        },
    )
    return ckpt


def train_variant(
    spec: VariantSpec, config: TrainConfig, dataset: UnpairedDataset, decomp_ckpt, out_dir
) -> Path:
    """Train one variant; returns the checkpoint path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.id == "retinex_cyclegan":
        train_gan(config, dataset, decomp_ckpt, out_dir)
        return out_dir / "gan.ckpt"
    if spec.id == "retinex_gan":
        if decomp_ckpt is None:
            raise ConfigError("retinex_gan variant needs a decomposition checkpoint")
        return _train_retinex_gan(config, dataset, decomp_ckpt, out_dir)
    return _train_plain_gan(config, dataset, out_dir)


def load_enhancer(ckpt_path):
    """Build the low->high mapping stored in any variant checkpoint.

    Returns ``(enhance_fn, meta)`` where ``enhance_fn(image)`` maps one
    (H, W, 3) image at the network input size to its enhanced version.
    """
    tensors, meta = checkpoint.load_tensors(ckpt_path)
    kind = meta.get("kind")
    if kind not in ("gan", "retinex_gan", "plain_gan"):
        raise FormatError(f"{ckpt_path}: checkpoint kind {kind!r} has no enhancer")
    unet_kwargs = dict(meta["unet"])
    unet_kwargs["channel_plan"] = tuple(unet_kwargs["channel_plan"])
    spec = UNetSpec(**unet_kwargs)
    g2 = EnhanceNet(spec, seed=0, direction="g2")
    netops.load_state(g2, tensors, "g2")

    if kind == "plain_gan":
        def enhance_fn(image):
            with torch.no_grad():
                out = g2(netops.hwc_to_batch(image))
            return netops.batch_to_hwc(out)[0]

        return enhance_fn, meta

    decomp = DecompNet(width=int(meta["decomp_width"]), seed=0)
    netops.load_state(decomp, tensors, "decomp")
    bundle = GeneratorBundle(decomp, g2)

    def enhance_fn(image):
        return generate(bundle, image)[0]

    enhance_fn.bundle = bundle
    return enhance_fn, meta


def dump_intermediates(bundle: GeneratorBundle, s_low: np.ndarray, out_dir, second_hop: bool = True) -> list[Path]:
    """Write the pipeline-stage images of one generator application as PNGs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    s_high_p, frag = generate(bundle, s_low)
    stages = {
        "s_low.png": s_low,
        "r_low.png": frag.R,
        "i_low.png": frag.I,
        "i_high_prime.png": frag.I_enhanced,
        "s_high_prime.png": s_high_p,
    }
    if second_hop:
        stages["r_high_prime.png"] = decompose(bundle.decomp, s_high_p).R
    paths = []
    for name, img in stages.items():
        path = out_dir / name
        save_image(np.clip(img, 0.0, 1.0), path)
        paths.append(path)
    return paths


def _enhance_dir(enhance_fn, input_size: int, low_dir, pred_dir) -> None:
    pred_dir = Path(pred_dir)
    pred_dir.mkdir(parents=True, exist_ok=True)
    images, names = load_image_dir(low_dir)
    for img, name in zip(images, names):
        h, w = img.shape[:2]
        out = enhance_fn(resize_image(img, input_size, input_size))
        save_image(np.clip(resize_image(out, h, w), 0.0, 1.0), pred_dir / name)


def run_ablation(
    variant_ids,
    config: TrainConfig,
    dataset: UnpairedDataset,
    decomp_ckpt,
    eval_low_dir,
    eval_gt_dir,
    out_dir,
    external: dict | None = None,
    niqe_model: dict | None = None,
) -> Path:
    """Train each variant, enhance the eval set, and emit one combined CSV
    with columns: algorithm, mse, niqe_ratio, ssim."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if niqe_model is None:
        niqe_model = metrics.load_niqe_model()

    rows = []
    for variant_id in variant_ids:
        spec = VariantSpec.from_id(variant_id)
        variant_dir = out_dir / variant_id
        ckpt = train_variant(spec, config, dataset, decomp_ckpt, variant_dir)
        enhance_fn, meta = load_enhancer(ckpt)
        _enhance_dir(enhance_fn, int(meta["unet"]["input_size"]), eval_low_dir, variant_dir / "pred")
        report = metrics.evaluate(variant_dir / "pred", eval_gt_dir, niqe_model=niqe_model)
        rows.append((variant_id, report["mean"]))

    for name, pred_dir in (external or {}).items():
        report = metrics.evaluate(pred_dir, eval_gt_dir, niqe_model=niqe_model)
        rows.append((name, report["mean"]))

    csv_path = out_dir / "ablation.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("algorithm", "mse", "niqe_ratio", "ssim"))
        for name, mean in rows:
            writer.writerow(
                [name, f"{mean['mse']:.6f}", f"{mean['niqe_ratio']:.6f}", f"{mean['ssim']:.6f}"]
            )
    return csv_path
