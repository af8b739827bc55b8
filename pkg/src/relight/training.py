"""Unpaired adversarial training of the full cycle pipeline.

One step runs the forward (low -> high' -> low'') and backward
(high -> low' -> high'') chains, updates both enhancers jointly on the sum of
their total losses, then updates each discriminator on detached fakes. The
decomposition weights stay frozen unless joint fine-tuning is requested.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint, netops
from .adversarial import (
    CycleState,
    PatchDiscriminator,
    cycle_loss_R,
    cycle_loss_S,
    discriminator_losses,
    generator_losses,
)
from .data import UnpairedDataset
from .decomposition import DecompNet, load_decomp_checkpoint
from .enhancement import EnhanceNet, GeneratorBundle, UNetSpec, build_unet, generate_t
from .errors import ConfigError, TrainingDiverged

GAN_LOG_COLUMNS = (
    "epoch", "step", "cyc_S", "cyc_R", "cyc_total",
    "gen_G", "gen_F", "disc_high", "disc_low", "lr",
)


@dataclass(frozen=True)
class TrainConfig:
    lr_gen: float = 0.0002
    lr_disc: float = 0.0002
    decay: float = 0.5
    epochs: int = 500
    batch_size: int = 8
    seed: int = 0
    freeze_decomp: bool = True
    checkpoint_every: int = 100
    unet: UNetSpec = field(default_factory=UNetSpec)
    disc_widths: tuple[int, ...] = (64, 128, 256, 512)

    def __post_init__(self):
        if self.lr_gen <= 0 or self.lr_disc <= 0:
            raise ConfigError("learning rates must be positive")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")


def schedule_hash(config: TrainConfig) -> str:
    """Hash of the optimizer/schedule-relevant fields; ablation variants must
    share this so comparisons differ only in loss composition."""
    key = json.dumps(
        {
            "lr_gen": config.lr_gen,
            "lr_disc": config.lr_disc,
            "decay": config.decay,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "seed": config.seed,
        },
        sort_keys=True,
    )
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def lr_at_epoch(base: float, decay: float, epoch: int, total_epochs: int) -> float:
    """Step schedule: multiply by decay once per half-life (epochs // 2)."""
    half_life = max(1, total_epochs // 2)
    return base * decay ** (epoch // half_life)


@dataclass
class GanNets:
    decomp: DecompNet
    g2: EnhanceNet
    f2: EnhanceNet
    d_high: PatchDiscriminator
    d_low: PatchDiscriminator

    def g_bundle(self) -> GeneratorBundle:
        return GeneratorBundle(self.decomp, self.g2)

    def f_bundle(self) -> GeneratorBundle:
        return GeneratorBundle(self.decomp, self.f2)


@dataclass
class Optimizers:
    gen: torch.optim.Optimizer
    d_high: torch.optim.Optimizer
    d_low: torch.optim.Optimizer


def init_gan_nets(config: TrainConfig, decomp: DecompNet) -> GanNets:
    """Fresh enhancers and discriminators with seeds derived from the config."""
    return GanNets(
        decomp=decomp,
        g2=build_unet(config.unet, seed=config.seed + 101, direction="g2"),
        f2=build_unet(config.unet, seed=config.seed + 102, direction="f2"),
        d_high=PatchDiscriminator(config.disc_widths, seed=config.seed + 103, direction="d_high"),
        d_low=PatchDiscriminator(config.disc_widths, seed=config.seed + 104, direction="d_low"),
    )


def make_optimizers(nets: GanNets, config: TrainConfig) -> Optimizers:
    gen_params = list(nets.g2.parameters()) + list(nets.f2.parameters())
    if not config.freeze_decomp:
        gen_params += list(nets.decomp.parameters())
    return Optimizers(
        gen=torch.optim.Adam(gen_params, lr=config.lr_gen, betas=(0.5, 0.999)),
        d_high=torch.optim.Adam(nets.d_high.parameters(), lr=config.lr_disc, betas=(0.5, 0.999)),
        d_low=torch.optim.Adam(nets.d_low.parameters(), lr=config.lr_disc, betas=(0.5, 0.999)),
    )


def run_cycle(
    nets: GanNets, x_low: torch.Tensor, x_high: torch.Tensor, frozen_decomp: bool = True
) -> CycleState:
    """Execute both translation chains and collect every intermediate."""
    g, f = nets.g_bundle(), nets.f_bundle()
    s_high_p, fwd1 = generate_t(g, x_low, graph_decomp_input=not frozen_decomp)
    s_low_pp, fwd2 = generate_t(f, s_high_p, graph_decomp_input=True)
    s_low_p, bwd1 = generate_t(f, x_high, graph_decomp_input=not frozen_decomp)
    s_high_pp, bwd2 = generate_t(g, s_low_p, graph_decomp_input=True)
    return CycleState(
        s_low=x_low,
        r_low=fwd1.R,
        i_low=fwd1.I,
        i_high_p=fwd1.I_enhanced,
        s_high_p=s_high_p,
        r_high_p=fwd2.R,
        i_low_pp=fwd2.I_enhanced,
        s_low_pp=s_low_pp,
        s_high=x_high,
        r_high=bwd1.R,
        i_high=bwd1.I,
        i_low_p=bwd1.I_enhanced,
        s_low_p=s_low_p,
        r_low_p=bwd2.R,
        i_high_pp=bwd2.I_enhanced,
        s_high_pp=s_high_pp,
    )


def _dump_state(state: CycleState, report: dict, dump_dir) -> Path:
    dump_dir = Path(dump_dir)
    dump_dir.mkdir(parents=True, exist_ok=True)
    path = dump_dir / "diverged_state.npz"
    arrays = {k: v.detach().cpu().numpy() for k, v in state.tensors().items()}
    arrays["losses"] = np.array(
        [[float(report.get(k, math.nan)) for k in sorted(report)]]
    )
    np.savez(path, **arrays)
    return path


def train_step(
    nets: GanNets,
    x_low: torch.Tensor,
    x_high: torch.Tensor,
    opts: Optimizers,
    frozen_decomp: bool = True,
    dump_dir=None,
) -> dict[str, float]:
    """One optimization step over one low batch and one high batch."""
    if x_low.shape != x_high.shape:
        raise ConfigError(
            f"batch shapes differ: {tuple(x_low.shape)} vs {tuple(x_high.shape)}"
        )

    # generators: discriminators participate in the graph but take no update
    _set_requires_grad(nets.d_high, False)
    _set_requires_grad(nets.d_low, False)
    state = run_cycle(nets, x_low, x_high, frozen_decomp=frozen_decomp)
    loss_g, loss_f = generator_losses(state, nets.d_high, nets.d_low)
    opts.gen.zero_grad(set_to_none=True)
    (loss_g + loss_f).backward()
    opts.gen.step()
    _set_requires_grad(nets.d_high, True)
    _set_requires_grad(nets.d_low, True)

    # discriminators: fakes detached, one update each
    loss_d_high, loss_d_low = discriminator_losses(
        state, nets.d_high, nets.d_low, x_high, x_low
    )
    opts.d_high.zero_grad(set_to_none=True)
    loss_d_high.backward()
    opts.d_high.step()
    opts.d_low.zero_grad(set_to_none=True)
    loss_d_low.backward()
    opts.d_low.step()

    with torch.no_grad():
        cyc_s = float(cycle_loss_S(state).item())
        cyc_r = float(cycle_loss_R(state).item())
    report = {
        "cyc_S": cyc_s,
        "cyc_R": cyc_r,
        "cyc_total": cyc_s + cyc_r,
        "gen_G": float(loss_g.item()),
        "gen_F": float(loss_f.item()),
        "disc_high": float(loss_d_high.item()),
        "disc_low": float(loss_d_low.item()),
    }
    bad = [k for k, v in report.items() if not math.isfinite(v)]
    if bad:
        path = _dump_state(state, report, dump_dir) if dump_dir else None
        raise TrainingDiverged(
            f"non-finite losses {', '.join(bad)}"
            + (f"; state dumped to {path}" if path else ""),
            dump_path=path,
        )
    return report


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for group in opt.param_groups:
        group["lr"] = lr


def train_gan(
    config: TrainConfig, dataset: UnpairedDataset, decomp_ckpt, out_dir
) -> GanNets:
    """Full unpaired training run; writes gan_loss.csv and checkpoints.

    Batch order is a pure function of the seed; with epochs=0 the final
    checkpoint holds untouched seeded initializations.
    """
    decomp_ckpt = Path(decomp_ckpt)
    if not decomp_ckpt.is_file():
        raise ConfigError(f"decomposition checkpoint not found: {decomp_ckpt}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    decomp, _ = load_decomp_checkpoint(decomp_ckpt)
    if config.freeze_decomp:
        _set_requires_grad(decomp, False)
    nets = init_gan_nets(config, decomp)
    opts = make_optimizers(nets, config)

    n = min(len(dataset.lows), len(dataset.highs))
    steps_per_epoch = n // config.batch_size
    if config.epochs > 0 and steps_per_epoch == 0:
        raise ConfigError(
            f"batch_size {config.batch_size} exceeds dataset size {n}"
        )

    rng = np.random.default_rng(config.seed)
    log_path = out_dir / "gan_loss.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GAN_LOG_COLUMNS)
        for epoch in range(config.epochs):
            lr_g = lr_at_epoch(config.lr_gen, config.decay, epoch, config.epochs)
            lr_d = lr_at_epoch(config.lr_disc, config.decay, epoch, config.epochs)
            _set_lr(opts.gen, lr_g)
            _set_lr(opts.d_high, lr_d)
            _set_lr(opts.d_low, lr_d)
            order_low = rng.permutation(len(dataset.lows))
            order_high = rng.permutation(len(dataset.highs))
            for step in range(steps_per_epoch):
                sel_low = order_low[step * config.batch_size : (step + 1) * config.batch_size]
                sel_high = order_high[step * config.batch_size : (step + 1) * config.batch_size]
                x_low = netops.stack_to_batch([dataset.lows[i] for i in sel_low])
                x_high = netops.stack_to_batch([dataset.highs[i] for i in sel_high])
                report = train_step(
                    nets, x_low, x_high, opts,
                    frozen_decomp=config.freeze_decomp, dump_dir=out_dir,
                )
                writer.writerow(
                    [epoch, step]
                    + [f"{report[k]:.10f}" for k in GAN_LOG_COLUMNS[2:-1]]
                    + [f"{lr_g:.10f}"]
                )
            fh.flush()
            if (epoch + 1) % config.checkpoint_every == 0 and (epoch + 1) < config.epochs:
                save_gan_checkpoint(out_dir / f"gan_epoch{epoch + 1:05d}.ckpt", nets, config, epoch + 1)
    save_gan_checkpoint(out_dir / "gan.ckpt", nets, config, config.epochs)
    return nets


def save_gan_checkpoint(path, nets: GanNets, config: TrainConfig, epochs_done: int, kind: str = "gan") -> None:
    tensors: dict[str, np.ndarray] = {}
    tensors.update(netops.collect_state(nets.decomp, "decomp"))
    tensors.update(netops.collect_state(nets.g2, "g2"))
    tensors.update(netops.collect_state(nets.f2, "f2"))
    tensors.update(netops.collect_state(nets.d_high, "d_high"))
    tensors.update(netops.collect_state(nets.d_low, "d_low"))
    meta = {
        "kind": kind,
        "decomp_width": nets.decomp.width,
        "unet": asdict(nets.g2.spec),
        "disc_widths": list(nets.d_high.widths),
        "seed": config.seed,
        "epochs": epochs_done,
        "schedule_hash": schedule_hash(config),
    }
    checkpoint.save_tensors(path, tensors, meta)


def load_gan_checkpoint(path) -> tuple[GanNets, dict]:
    tensors, meta = checkpoint.load_tensors(path)
    unet_kwargs = dict(meta["unet"])
    unet_kwargs["channel_plan"] = tuple(unet_kwargs["channel_plan"])
    spec = UNetSpec(**unet_kwargs)
    nets = GanNets(
        decomp=DecompNet(width=int(meta["decomp_width"]), seed=0),
        g2=EnhanceNet(spec, seed=0, direction="g2"),
        f2=EnhanceNet(spec, seed=0, direction="f2"),
        d_high=PatchDiscriminator(tuple(meta["disc_widths"]), seed=0, direction="d_high"),
        d_low=PatchDiscriminator(tuple(meta["disc_widths"]), seed=0, direction="d_low"),
    )
    netops.load_state(nets.decomp, tensors, "decomp")
    netops.load_state(nets.g2, tensors, "g2")
    netops.load_state(nets.f2, tensors, "f2")
    netops.load_state(nets.d_high, tensors, "d_high")
    netops.load_state(nets.d_low, tensors, "d_low")
    return nets, meta
