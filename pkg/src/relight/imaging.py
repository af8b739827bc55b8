"""Image tensors, PNG I/O, patch sampling, degradation, and recomposition.

Images are numpy arrays of shape (H, W, C) with C in {1, 3} and values in
[0, 1]. Illumination maps are 1-channel, reflectance and scene images are
3-channel. 8-bit conversion happens only at file boundaries.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import FormatError, ShapeError

_SUPPORTED_MODES = {"L": 1, "RGB": 3}


@dataclass(frozen=True)
class PatchSpec:
    """Square patch sampling request: `count` patches of `size` pixels."""

    count: int
    size: int
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"patch count must be >= 0, got {self.count}")
        if self.size <= 0:
            raise ValueError(f"patch size must be positive, got {self.size}")


@dataclass(frozen=True)
class DegradationParams:
    """Synthetic low-light recipe: clamp(gain * x**gamma + N(0, sigma), 0, 1).

    gamma=1, gain=1, noise_sigma=0 is the identity.
    """

    gamma: float = 1.0
    gain: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.gain <= 1:
            raise ValueError(f"gain must be in (0, 1], got {self.gain}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def validate_image(img: np.ndarray, channels: int | None = None) -> None:
    """Check the (H, W, C) layout, channel count, and [0, 1] range."""
    if not isinstance(img, np.ndarray):
        raise ShapeError(f"expected numpy array, got {type(img).__name__}")
    if img.ndim != 3:
        raise ShapeError(f"expected (H, W, C) array, got shape {img.shape}")
    if img.shape[2] not in (1, 3):
        raise ShapeError(f"channel count must be 1 or 3, got {img.shape[2]}")
    if channels is not None and img.shape[2] != channels:
        raise ShapeError(f"expected {channels}-channel image, got {img.shape[2]}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError(
            f"image values outside [0, 1]: min={img.min():.4g} max={img.max():.4g}"
        )


def load_image(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB PNG as float32 in [0, 1], shape (H, W, C)."""
    with open(path, "rb") as fh:
        try:
            pil = Image.open(fh)
            pil.load()
        except Exception as exc:
            raise FormatError(f"{path}: not a readable image ({exc})") from exc
    if pil.format != "PNG":
        raise FormatError(f"{path}: unsupported format {pil.format!r}, expected PNG")
    if pil.mode not in _SUPPORTED_MODES:
        raise FormatError(
            f"{path}: unsupported PNG mode {pil.mode!r}, expected 8-bit L or RGB"
        )
    arr = np.asarray(pil, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_image(img: np.ndarray, path) -> None:
    """Write an image as an 8-bit PNG; round-trip error is at most 1/510."""
    validate_image(img)
    quant = np.rint(img * 255.0).astype(np.uint8)
    if img.shape[2] == 1:
        pil = Image.fromarray(quant[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(quant, mode="RGB")
    pil.save(os.fspath(path), format="PNG")


def sample_patches(img: np.ndarray, spec: PatchSpec) -> list[np.ndarray]:
    """Sample axis-aligned square patches with uniform random top-left offsets.

    Sampling is with replacement and deterministic for a fixed seed.
    """
    validate_image(img)
    h, w = img.shape[:2]
    if spec.size > min(h, w):
        raise ShapeError(
            f"patch size {spec.size} exceeds image extent {h}x{w}"
        )
    rng = np.random.default_rng(spec.seed)
    tops = rng.integers(0, h - spec.size + 1, size=spec.count)
    lefts = rng.integers(0, w - spec.size + 1, size=spec.count)
    return [
        img[t : t + spec.size, l : l + spec.size].copy()
        for t, l in zip(tops, lefts)
    ]


def recompose(reflectance: np.ndarray, illumination: np.ndarray) -> np.ndarray:
    """Element-wise product S = R * I with I broadcast across the 3 channels."""
    validate_image(reflectance, channels=3)
    validate_image(illumination, channels=1)
    if reflectance.shape[:2] != illumination.shape[:2]:
        raise ShapeError(
            f"spatial dims differ: R {reflectance.shape[:2]} vs I {illumination.shape[:2]}"
        )
    return reflectance * illumination


def degrade(image: np.ndarray, params: DegradationParams) -> np.ndarray:
    """Apply the seeded gamma/gain/noise degradation to a well-lit image.

    Identity parameters return the input bit-for-bit.
    """
    validate_image(image, channels=3)
    out = image if params.gamma == 1.0 else np.power(image, params.gamma)
    if params.gain != 1.0:
        out = params.gain * out
    if params.noise_sigma > 0.0:
        rng = np.random.default_rng(params.seed)
        out = out + rng.normal(0.0, params.noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(image.dtype, copy=False)


def resize_image(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize; used only at CLI boundaries for non-native input sizes."""
    validate_image(img)
    if img.shape[0] == height and img.shape[1] == width:
        return img.copy()
    channels = img.shape[2]
    src = img.astype(np.float32, copy=False)
    planes = []
    for c in range(channels):
        pil = Image.fromarray(src[:, :, c], mode="F")
        pil = pil.resize((width, height), resample=Image.BILINEAR)
        planes.append(np.asarray(pil, dtype=np.float32))
    out = np.stack(planes, axis=2)
    return np.clip(out, 0.0, 1.0)
