"""Retinex decomposition network (shared weights for low and high inputs).

One parameter set maps any scene image to a 3-channel reflectance and a
1-channel illumination, both sigmoid-squashed into [0, 1]. The paired
training recipe optimizes reconstruction, reflectance invariance across
lighting, and edge-aware illumination smoothness.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import checkpoint, netops
from .errors import ConfigError
from .imaging import validate_image

ARCH_ID = "retinex-decomp-v1"


@dataclass(frozen=True)
class DecompositionResult:
    """Reflectance (H, W, 3) and illumination (H, W, 1) for one image."""

    R: np.ndarray
    I: np.ndarray


@dataclass(frozen=True)
class DecompLossWeights:
    w_recon: float = 1.0
    w_invariant_reflectance: float = 0.01
    w_illum_smoothness: float = 0.1
    cross_weight: float = 0.001

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")


class DecompNet(nn.Module):
    """9x9 conv stem, five 3x3 conv+ReLU blocks, 3x3 conv to 4 channels,
    sigmoid split into R (3ch) and I (1ch). Fully convolutional."""

    def __init__(self, width: int = 64, seed: int = 0):
        super().__init__()
        self.width = width
        self.stem = nn.Conv2d(3, width, 9, padding=4, padding_mode="replicate")
        self.body = nn.Sequential(
            *[
                layer
                for _ in range(5)
                for layer in (
                    nn.Conv2d(width, width, 3, padding=1, padding_mode="replicate"),
                    nn.ReLU(),
                )
            ]
        )
        self.head = nn.Conv2d(width, 4, 3, padding=1, padding_mode="replicate")
        netops.seeded_init_(self, seed)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = torch.sigmoid(self.head(self.body(self.stem(x))))
        return out[:, 0:3], out[:, 3:4]


def decompose(net: DecompNet, image: np.ndarray) -> DecompositionResult:
    """Decompose one (H, W, 3) image into (R, I); deterministic given weights."""
    validate_image(image, channels=3)
    net.eval()
    with torch.no_grad():
        r, i = net(netops.hwc_to_batch(image).to(next(net.parameters()).dtype))
    return DecompositionResult(R=netops.batch_to_hwc(r)[0], I=netops.batch_to_hwc(i)[0])


def _forward_grads(t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    # forward differences, zero at the right/bottom border
    gx = torch.zeros_like(t)
    gx[..., :, :-1] = t[..., :, 1:] - t[..., :, :-1]
    gy = torch.zeros_like(t)
    gy[..., :-1, :] = t[..., 1:, :] - t[..., :-1, :]
    return gx, gy


def _smoothness(illum: torch.Tensor, refl: torch.Tensor) -> torch.Tensor:
    """Edge-aware TV: |grad I| damped where the reflectance has edges."""
    ix, iy = _forward_grads(illum)
    rx, ry = _forward_grads(refl)
    rx = rx.abs().mean(dim=1, keepdim=True)
    ry = ry.abs().mean(dim=1, keepdim=True)
    return (ix.abs() * torch.exp(-10.0 * rx) + iy.abs() * torch.exp(-10.0 * ry)).mean()


def decomp_loss_t(
    r_low: torch.Tensor,
    i_low: torch.Tensor,
    r_high: torch.Tensor,
    i_high: torch.Tensor,
    s_low: torch.Tensor,
    s_high: torch.Tensor,
    weights: DecompLossWeights = DecompLossWeights(),
) -> dict[str, torch.Tensor]:
    """Differentiable decomposition loss terms on (N, C, H, W) tensors.

    recon pairs each reflectance with each illumination and compares against
    the illumination's source image; the mismatched pairs are down-weighted.
    """
    recon = (
        (r_low * i_low - s_low).abs().mean()
        + (r_high * i_high - s_high).abs().mean()
        + weights.cross_weight * (r_high * i_low - s_low).abs().mean()
        + weights.cross_weight * (r_low * i_high - s_high).abs().mean()
    )
    invariant = (r_low - r_high).abs().mean()
    smooth = _smoothness(i_low, r_low) + _smoothness(i_high, r_high)
    total = (
        weights.w_recon * recon
        + weights.w_invariant_reflectance * invariant
        + weights.w_illum_smoothness * smooth
    )
    return {
        "recon": recon,
        "invariant_reflectance": invariant,
        "illum_smooth": smooth,
        "total": total,
    }


def decomp_loss(
    low: DecompositionResult,
    high: DecompositionResult,
    s_low: np.ndarray,
    s_high: np.ndarray,
    weights: DecompLossWeights = DecompLossWeights(),
) -> dict[str, float]:
    """Loss report for already-computed decompositions of an image pair."""
    for res in (low, high):
        validate_image(res.R, channels=3)
        validate_image(res.I, channels=1)
    tensors = [
        netops.hwc_to_batch(a, dtype=torch.float64)
        for a in (low.R, low.I, high.R, high.I, s_low, s_high)
    ]
    terms = decomp_loss_t(*tensors, weights=weights)
    return {k: float(v.item()) for k, v in terms.items()}


@dataclass(frozen=True)
class DecompTrainConfig:
    """Paired training recipe: Adam steps on random patch batches."""

    lr: float = 0.001
    decay: float = 0.9
    decay_every: int = 20
    iterations: int = 100
    patch_count: int = 16
    patch_size: int = 64
    width: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.patch_count < 1 or self.patch_size < 1:
            raise ConfigError("patch_count and patch_size must be positive")
        if self.decay_every < 1:
            raise ConfigError("decay_every must be >= 1")


def decomp_lr_at(config: DecompTrainConfig, iteration: int) -> float:
    """Learning rate for a 1-based iteration index."""
    return config.lr * config.decay ** ((iteration - 1) // config.decay_every)


def _aligned_patches(low: np.ndarray, high: np.ndarray, count: int, size: int, rng):
    h, w = low.shape[:2]
    tops = rng.integers(0, h - size + 1, size=count)
    lefts = rng.integers(0, w - size + 1, size=count)
    lows = [low[t : t + size, l : l + size] for t, l in zip(tops, lefts)]
    highs = [high[t : t + size, l : l + size] for t, l in zip(tops, lefts)]
    return lows, highs


def train_decomposition(config: DecompTrainConfig, paired, out_dir) -> DecompNet:
    """Train the shared decomposition net on paired low/high images.

    Writes ``decomp.ckpt`` and ``decomp_loss.csv`` under ``out_dir``; the run
    is deterministic for a fixed config. With ``iterations=0`` the checkpoint
    holds the seeded initialization untouched.
    """
    if len(paired) == 0:
        raise ConfigError("paired dataset is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    net = DecompNet(width=config.width, seed=config.seed)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)

    log_path = out_dir / "decomp_loss.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration", "recon", "invariant_reflectance", "illum_smooth", "total", "lr"]
        )
        for it in range(1, config.iterations + 1):
            lr = decomp_lr_at(config, it)
            for group in optimizer.param_groups:
                group["lr"] = lr
            low, high = paired[int(rng.integers(len(paired)))]
            size = min(config.patch_size, low.shape[0], low.shape[1])
            lows, highs = _aligned_patches(low, high, config.patch_count, size, rng)
            x_low = netops.stack_to_batch(lows)
            x_high = netops.stack_to_batch(highs)

            net.train()
            r_low, i_low = net(x_low)
            r_high, i_high = net(x_high)
            terms = decomp_loss_t(r_low, i_low, r_high, i_high, x_low, x_high)
            optimizer.zero_grad(set_to_none=True)
            terms["total"].backward()
            optimizer.step()

            writer.writerow(
                [it]
                + [
                    f"{terms[k].item():.8f}"
                    for k in ("recon", "invariant_reflectance", "illum_smooth", "total")
                ]
                + [f"{lr:.8f}"]
            )

    save_decomp_checkpoint(out_dir / "decomp.ckpt", net, iterations=config.iterations)
    return net


def save_decomp_checkpoint(path, net: DecompNet, iterations: int = 0, seed: int | None = None) -> None:
    meta = {
        "kind": "decomp",
        "architecture": ARCH_ID,
        "width": net.width,
        "iterations": iterations,
    }
    if seed is not None:
        meta["seed"] = seed
    checkpoint.save_tensors(path, netops.collect_state(net, "decomp"), meta)


def load_decomp_checkpoint(path) -> tuple[DecompNet, dict]:
    tensors, meta = checkpoint.load_tensors(path)
    net = DecompNet(width=int(meta.get("width", 64)), seed=0)
    netops.load_state(net, tensors, "decomp")
    return net, meta
