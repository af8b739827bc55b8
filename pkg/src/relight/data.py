"""Dataset containers, directory loaders, and the synthetic desk-scale corpus.

Well-lit images come from a seeded procedural texture generator (multi-octave
value noise plus soft colored shapes); low-light counterparts are produced by
the degradation operator. The unpaired corpus degrades a disjoint set of base
images so that no low/high pair depicts the same scene.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .imaging import DegradationParams, degrade, load_image, save_image


@dataclass
class PairedDataset:
    """Aligned low/high captures of the same scenes."""

    lows: list
    highs: list
    names: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.lows) != len(self.highs):
            raise ConfigError(
                f"paired dataset lists differ: {len(self.lows)} lows vs {len(self.highs)} highs"
            )

    def __len__(self) -> int:
        return len(self.lows)

    def __getitem__(self, idx: int):
        return self.lows[idx], self.highs[idx]


@dataclass
class UnpairedDataset:
    """Independent pools of low-light and well-lit images; no correspondence."""

    lows: list
    highs: list

    def __post_init__(self):
        if not self.lows or not self.highs:
            raise ConfigError("unpaired dataset needs non-empty low and high pools")


def _value_noise(rng: np.random.Generator, cells: int, size: int) -> np.ndarray:
    """Bilinearly interpolated random lattice, (size, size, 3) in [0, 1]."""
    grid = rng.uniform(0.0, 1.0, (cells + 1, cells + 1, 3))
    t = np.linspace(0.0, cells, size)
    i = np.minimum(t.astype(np.int64), cells - 1)
    f = (t - i)[:, None, None]
    rows = grid[i] * (1.0 - f) + grid[i + 1] * f
    f_col = (t - i)[None, :, None]
    return rows[:, i] * (1.0 - f_col) + rows[:, i + 1] * f_col


def synthesize_image(seed, size: int = 256) -> np.ndarray:
    """Deterministic procedural 'well-lit' image, (size, size, 3) float32."""
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size, 3), dtype=np.float64)
    amp = 1.0
    for cells in (2, 4, 8, 16, 32):
        img += amp * _value_noise(rng, cells, size)
        amp *= 0.55
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        ry, rx = rng.uniform(0.08, 0.35, size=2)
        dist = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        mask = np.clip(1.0 - dist, 0.0, 1.0)[:, :, None] ** 2
        color = rng.uniform(0.2, 1.0, size=3)
        alpha = float(rng.uniform(0.3, 0.8))
        img = img * (1.0 - alpha * mask) + color * (alpha * mask)
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return (0.3 + 0.65 * img).astype(np.float32)


def _degradation_for(seed: int, idx: int) -> DegradationParams:
    rng = np.random.default_rng([seed, idx, 1])
    return DegradationParams(
        gamma=float(rng.uniform(1.6, 2.4)),
        gain=float(rng.uniform(0.25, 0.5)),
        noise_sigma=float(rng.uniform(0.0, 0.015)),
        seed=int(rng.integers(0, 2**31)),
    )


def make_paired_corpus(out_dir, count: int, seed: int, size: int = 256) -> Path:
    """Write count paired PNGs under out_dir/{low,high}; deterministic per seed."""
    out_dir = Path(out_dir)
    (out_dir / "low").mkdir(parents=True, exist_ok=True)
    (out_dir / "high").mkdir(parents=True, exist_ok=True)
    for idx in range(count):
        high = synthesize_image([seed, idx], size=size)
        low = degrade(high, _degradation_for(seed, idx))
        name = f"img_{idx:03d}.png"
        save_image(high, out_dir / "high" / name)
        save_image(low, out_dir / "low" / name)
    return out_dir


def make_unpaired_corpus(out_dir, count: int, seed: int, size: int = 256) -> Path:
    """Write count well-lit and count low-light PNGs from disjoint base scenes."""
    out_dir = Path(out_dir)
    (out_dir / "low").mkdir(parents=True, exist_ok=True)
    (out_dir / "high").mkdir(parents=True, exist_ok=True)
    for idx in range(count):
        high = synthesize_image([seed, idx], size=size)
        save_image(high, out_dir / "high" / f"img_{idx:03d}.png")
    for idx in range(count):
        base = synthesize_image([seed, count + idx], size=size)
        low = degrade(base, _degradation_for(seed, count + idx))
        save_image(low, out_dir / "low" / f"img_{idx:03d}.png")
    return out_dir


def load_image_dir(path) -> tuple[list[np.ndarray], list[str]]:
    """Load every PNG in a directory, sorted by filename."""
    path = Path(path)
    if not path.is_dir():
        raise ConfigError(f"{path}: not a directory")
    names = sorted(p.name for p in path.glob("*.png"))
    if not names:
        raise ConfigError(f"{path}: contains no .png files")
    return [load_image(path / n) for n in names], names


def load_paired_dir(path) -> PairedDataset:
    """Load a paired corpus laid out as path/low/*.png + path/high/*.png."""
    path = Path(path)
    lows, low_names = load_image_dir(path / "low")
    highs, high_names = load_image_dir(path / "high")
    if low_names != high_names:
        orphans = sorted(set(low_names) ^ set(high_names))
        raise ConfigError(f"{path}: unmatched pair filenames: {', '.join(orphans)}")
    return PairedDataset(lows=lows, highs=highs, names=low_names)


def load_unpaired_dirs(low_dir, high_dir) -> UnpairedDataset:
    lows, _ = load_image_dir(low_dir)
    highs, _ = load_image_dir(high_dir)
    return UnpairedDataset(lows=lows, highs=highs)
