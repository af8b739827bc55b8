"""Patched discriminators and the cycle/adversarial losses.

All loss functions operate on torch tensors so they can sit inside the
training graph; each returns a 0-dim tensor. L1 terms are means over
elements, L2 terms are root-mean-squares, so magnitudes do not scale with
resolution or batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import torch
from torch import nn

from . import netops
from .errors import ShapeError, StateError
from .imaging import validate_image

BCE_EPS = 1e-7
DEFAULT_DISC_WIDTHS = (64, 128, 256, 512)


class PatchDiscriminator(nn.Module):
    """Fully convolutional realness scorer: five stride-2 3x3 convs ending in
    a 1-channel sigmoid map. Each output cell scores one ~63x63 receptive
    patch; the image score is the mean over the grid."""

    def __init__(self, widths=DEFAULT_DISC_WIDTHS, seed: int = 0, direction: str = "d_high"):
        super().__init__()
        self.widths = tuple(widths)
        self.direction = direction
        layers = []
        in_ch = 3
        for w in self.widths:
            layers += [nn.Conv2d(in_ch, w, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            in_ch = w
        layers += [nn.Conv2d(in_ch, 1, 3, stride=2, padding=1), nn.Sigmoid()]
        self.net = nn.Sequential(*layers)
        netops.seeded_init_(self, seed)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def discriminate(disc: PatchDiscriminator, image: np.ndarray) -> tuple[np.ndarray, float]:
    """Score one (H, W, 3) image: per-patch grid in (0, 1) plus its mean."""
    validate_image(image, channels=3)
    disc.eval()
    with torch.no_grad():
        grid = disc(netops.hwc_to_batch(image).to(next(disc.parameters()).dtype))
    grid_np = grid[0, 0].cpu().numpy()
    return grid_np, float(grid_np.mean())


def bce(pred: torch.Tensor, target) -> torch.Tensor:
    """Mean binary cross-entropy with predictions clamped to [eps, 1-eps]."""
    if not isinstance(target, torch.Tensor):
        target = torch.full_like(pred, float(target))
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {tuple(pred.shape)} != target shape {tuple(target.shape)}")
    p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p)).mean()


@dataclass
class CycleState:
    """All intermediates of one forward (low->high'->low'') and backward
    (high->low'->high'') pass. Primed tensors are produced, never loaded."""

    # forward chain
    s_low: torch.Tensor | None = None
    r_low: torch.Tensor | None = None
    i_low: torch.Tensor | None = None
    i_high_p: torch.Tensor | None = None
    s_high_p: torch.Tensor | None = None
    r_high_p: torch.Tensor | None = None
    i_low_pp: torch.Tensor | None = None
    s_low_pp: torch.Tensor | None = None
    # backward chain
    s_high: torch.Tensor | None = None
    r_high: torch.Tensor | None = None
    i_high: torch.Tensor | None = None
    i_low_p: torch.Tensor | None = None
    s_low_p: torch.Tensor | None = None
    r_low_p: torch.Tensor | None = None
    i_high_pp: torch.Tensor | None = None
    s_high_pp: torch.Tensor | None = None

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise StateError(f"cycle state missing tensors: {', '.join(missing)}")

    def tensors(self) -> dict[str, torch.Tensor]:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if getattr(self, f.name) is not None
        }


def _rms(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.sqrt(torch.mean((a - b) ** 2))


def cycle_loss_S(state: CycleState) -> torch.Tensor:
    """Scene cycle consistency: mean-L1 of both round trips."""
    state.require("s_low", "s_low_pp", "s_high", "s_high_pp")
    return (state.s_low_pp - state.s_low).abs().mean() + (
        state.s_high_pp - state.s_high
    ).abs().mean()


def cycle_loss_R(state: CycleState) -> torch.Tensor:
    """Reflectance consistency: RMS distance between same-scene reflectances."""
    state.require("r_low", "r_high_p", "r_high", "r_low_p")
    return _rms(state.r_low, state.r_high_p) + _rms(state.r_high, state.r_low_p)


def generator_losses(
    state: CycleState, d_high: PatchDiscriminator, d_low: PatchDiscriminator
) -> tuple[torch.Tensor, torch.Tensor]:
    """Total enhancement losses: shared cycle term plus each adversarial term."""
    state.require("s_high_p", "s_low_p")
    cyc = cycle_loss_S(state) + cycle_loss_R(state)
    loss_g = cyc + bce(d_high(state.s_high_p), 1.0)
    loss_f = cyc + bce(d_low(state.s_low_p), 1.0)
    return loss_g, loss_f


def discriminator_losses(
    state: CycleState,
    d_high: PatchDiscriminator,
    d_low: PatchDiscriminator,
    s_high_real: torch.Tensor,
    s_low_real: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Realness losses; generated inputs are detached so no gradient reaches
    the generators through a discriminator update."""
    state.require("s_high_p", "s_low_p")
    loss_d_high = bce(d_high(state.s_high_p.detach()), 0.0) + bce(d_high(s_high_real), 1.0)
    loss_d_low = bce(d_low(state.s_low_p.detach()), 0.0) + bce(d_low(s_low_real), 1.0)
    return loss_d_high, loss_d_low
