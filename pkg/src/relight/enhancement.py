"""Illumination enhancement U-Net and the composite generator chain.

The enhancer consumes the concatenated (reflectance, illumination) planes and
emits a 1-channel enhanced illumination. A generator bundle wires the shared
decomposition net, one enhancer, and the deterministic recomposition step
into the full image-to-image mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import netops
from .decomposition import DecompNet
from .errors import ConfigError, ShapeError
from .imaging import validate_image

TABLE1_CHANNEL_PLAN = (4, 128, 256, 512, 512, 512, 512, 512)


@dataclass(frozen=True)
class UNetSpec:
    """Encoder/decoder geometry: stride-2 halvings down, factor-2 resizes up."""

    input_size: int = 256
    num_down: int = 7
    num_up: int = 7
    channel_plan: tuple[int, ...] = TABLE1_CHANNEL_PLAN
    kernel_size: int = 3
    out_channels: int = 1

    def validate(self) -> None:
        if self.num_down != self.num_up:
            raise ConfigError(
                f"num_down ({self.num_down}) must equal num_up ({self.num_up})"
            )
        if len(self.channel_plan) != self.num_down + 1:
            raise ConfigError(
                f"channel_plan needs {self.num_down + 1} entries "
                f"(input + one per stage), got {len(self.channel_plan)}"
            )
        if self.input_size % (1 << self.num_down) != 0:
            raise ConfigError(
                f"input_size {self.input_size} not divisible by 2^{self.num_down}"
            )

    @property
    def bottleneck_size(self) -> int:
        return self.input_size >> self.num_down


class EnhanceNet(nn.Module):
    """U-Net variant: stride-2 conv encoder, nearest-resize + conv decoder,
    skip connections pairing decoder stage k with encoder stage (n - k),
    where stage 0 is the raw input. Sigmoid head keeps outputs in [0, 1]."""

    def __init__(self, spec: UNetSpec, seed: int = 0, direction: str = "g2"):
        super().__init__()
        spec.validate()
        self.spec = spec
        self.direction = direction
        plan = spec.channel_plan
        n = spec.num_down
        k = spec.kernel_size
        pad = k // 2

        self.encoders = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(plan[j - 1], plan[j], k, stride=2, padding=pad),
                nn.InstanceNorm2d(plan[j]),
                nn.LeakyReLU(0.2),
            )
            for j in range(1, n + 1)
        )
        # decoder stage j consumes the upsampled previous output concatenated
        # with encoder stage (n - j); widths mirror the encoder plan
        self.skip_sources = [n - j for j in range(1, n + 1)]
        self.decoders = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(plan[n + 1 - j] + plan[n - j], plan[n - j], k, padding=pad),
                nn.InstanceNorm2d(plan[n - j]),
                nn.ReLU(),
            )
            for j in range(1, n + 1)
        )
        self.upsample = nn.Upsample(scale_factor=2, mode="nearest")
        self.head = nn.Conv2d(plan[0], spec.out_channels, k, padding=pad)
        netops.seeded_init_(self, seed)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        stage_outputs = [x]
        h = x
        for enc in self.encoders:
            h = enc(h)
            stage_outputs.append(h)
        for j, dec in enumerate(self.decoders):
            h = self.upsample(h)
            h = dec(torch.cat([h, stage_outputs[self.skip_sources[j]]], dim=1))
        return torch.sigmoid(self.head(h))


def build_unet(spec: UNetSpec, seed: int, direction: str = "g2") -> EnhanceNet:
    """Construct an enhancer with a seeded deterministic initialization."""
    return EnhanceNet(spec, seed=seed, direction=direction)


def enhance_illumination(net: EnhanceNet, reflectance: np.ndarray, illumination: np.ndarray) -> np.ndarray:
    """Map one (R, I) pair to the enhanced 1-channel illumination."""
    validate_image(reflectance, channels=3)
    validate_image(illumination, channels=1)
    size = net.spec.input_size
    if reflectance.shape[:2] != (size, size) or illumination.shape[:2] != (size, size):
        raise ShapeError(
            f"expected {size}x{size} inputs, got R {reflectance.shape[:2]} "
            f"I {illumination.shape[:2]}"
        )
    net.eval()
    with torch.no_grad():
        x = torch.cat(
            [netops.hwc_to_batch(reflectance), netops.hwc_to_batch(illumination)], dim=1
        ).to(next(net.parameters()).dtype)
        out = net(x)
    return netops.batch_to_hwc(out)[0]


@dataclass(frozen=True)
class CycleFragment:
    """Inspectable intermediates of one generator application."""

    R: object
    I: object
    I_enhanced: object


@dataclass(frozen=True)
class GeneratorBundle:
    """Composite generator: decompose, enhance illumination, recompose."""

    decomp: DecompNet
    enhance: EnhanceNet
    direction: str = field(default="")

    def __post_init__(self):
        if not self.direction:
            object.__setattr__(self, "direction", self.enhance.direction)


def generate_t(
    bundle: GeneratorBundle, x: torch.Tensor, graph_decomp_input: bool = False
) -> tuple[torch.Tensor, CycleFragment]:
    """Differentiable generator application on an (N, 3, H, W) batch.

    With ``graph_decomp_input`` False the input decomposition runs without
    autograd tracking (the decomposition weights are frozen and the input is
    a leaf); pass True when gradients must flow through the input itself.
    """
    if graph_decomp_input:
        r, i = bundle.decomp(x)
    else:
        with torch.no_grad():
            r, i = bundle.decomp(x)
    i_enh = bundle.enhance(torch.cat([r, i], dim=1))
    s_out = r * i_enh
    return s_out, CycleFragment(R=r, I=i, I_enhanced=i_enh)


def generate(bundle: GeneratorBundle, image: np.ndarray) -> tuple[np.ndarray, CycleFragment]:
    """Apply the composite generator to one (H, W, 3) image."""
    validate_image(image, channels=3)
    size = bundle.enhance.spec.input_size
    if image.shape[:2] != (size, size):
        raise ShapeError(f"expected {size}x{size} input, got {image.shape[:2]}")
    bundle.decomp.eval()
    bundle.enhance.eval()
    with torch.no_grad():
        s_out, frag = generate_t(bundle, netops.hwc_to_batch(image))
    return (
        netops.batch_to_hwc(s_out)[0],
        CycleFragment(
            R=netops.batch_to_hwc(frag.R)[0],
            I=netops.batch_to_hwc(frag.I)[0],
            I_enhanced=netops.batch_to_hwc(frag.I_enhanced)[0],
        ),
    )
