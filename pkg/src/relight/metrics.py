"""Evaluation metrics: MSE, SSIM, NIQE, NIQE ratio, and corpus reports.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5) with C1=0.01^2,
C2=0.03^2 on [0, 1] luma. NIQE fits an asymmetric generalized Gaussian to
mean-subtracted contrast-normalized coefficients per patch at two scales and
measures the Mahalanobis-style distance to a pristine multivariate Gaussian
loaded from a JSON model file (mu vector, covariance matrix, patch size).
The reported ratio is NIQE(prediction) / NIQE(ground truth).
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate
from scipy.special import gamma as gamma_fn

from .errors import ConfigError, ShapeError
from .imaging import load_image, validate_image

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
NIQE_PATCH = 96

REPORT_FIELDS = ("mse", "ssim", "niqe_pred", "niqe_gt", "niqe_ratio")


def rgb_to_luma(img: np.ndarray) -> np.ndarray:
    """(H, W, C) image -> (H, W) Rec. 601 luma (identity for grayscale)."""
    validate_image(img)
    if img.shape[2] == 1:
        return img[:, :, 0].astype(np.float64)
    return img.astype(np.float64) @ LUMA_WEIGHTS


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Pixel-wise mean squared error over all elements."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(diff * diff))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over all fully-interior 11x11 Gaussian windows of the luma."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    x = rgb_to_luma(a)
    y = rgb_to_luma(b)
    if min(x.shape) < SSIM_WINDOW:
        raise ShapeError(
            f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    pad = SSIM_WINDOW // 2

    def filt(img):
        return correlate(img, kernel, mode="constant")[pad:-pad, pad:-pad]

    mu_x = filt(x)
    mu_y = filt(y)
    sig_x = filt(x * x) - mu_x * mu_x
    sig_y = filt(y * y) - mu_y * mu_y
    sig_xy = filt(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sig_xy + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (sig_x + sig_y + SSIM_C2)
    return float(np.mean(num / den))


# --- NIQE ---------------------------------------------------------------

_AGGD_GAMMAS = np.arange(0.2, 10.001, 0.001)
_AGGD_RATIO = (gamma_fn(2.0 / _AGGD_GAMMAS) ** 2) / (
    gamma_fn(1.0 / _AGGD_GAMMAS) * gamma_fn(3.0 / _AGGD_GAMMAS)
)


def _aggd_params(vec: np.ndarray) -> tuple[float, float, float]:
    """Moment-matched asymmetric generalized Gaussian (shape, left/right scale)."""
    vec = vec.ravel()
    left = vec[vec < 0]
    right = vec[vec > 0]
    left_std = np.sqrt(np.mean(left**2)) if left.size else 1e-6
    right_std = np.sqrt(np.mean(right**2)) if right.size else 1e-6
    gamma_hat = left_std / right_std
    mean_abs = np.mean(np.abs(vec))
    r_hat = mean_abs**2 / max(np.mean(vec**2), 1e-12)
    r_norm = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2
    alpha = _AGGD_GAMMAS[np.argmin((_AGGD_RATIO - r_norm) ** 2)]
    ratio = np.sqrt(gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha))
    return float(alpha), float(left_std * ratio), float(right_std * ratio)


def _mscn(gray: np.ndarray) -> np.ndarray:
    """Mean-subtracted contrast-normalized coefficients (7x7 Gaussian, C=1)."""
    kernel = _gaussian_kernel(7, 7.0 / 6.0)
    mu = correlate(gray, kernel, mode="nearest")
    sigma = np.sqrt(np.abs(correlate(gray * gray, kernel, mode="nearest") - mu * mu))
    return (gray - mu) / (sigma + 1.0)


def _patch_features(mscn: np.ndarray) -> list[float]:
    """18 AGGD features: the coefficients plus 4 pairwise-product orientations."""
    alpha, beta_l, beta_r = _aggd_params(mscn)
    feats = [alpha, (beta_l + beta_r) / 2.0]
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        shifted = np.roll(np.roll(mscn, dy, axis=0), dx, axis=1)
        alpha, beta_l, beta_r = _aggd_params(mscn * shifted)
        eta = (beta_r - beta_l) * (gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha))
        feats.extend([alpha, eta, beta_l, beta_r])
    return feats


def _half_scale(gray: np.ndarray) -> np.ndarray:
    h, w = gray.shape[0] // 2 * 2, gray.shape[1] // 2 * 2
    g = gray[:h, :w]
    return 0.25 * (g[0::2, 0::2] + g[1::2, 0::2] + g[0::2, 1::2] + g[1::2, 1::2])


def niqe_features(img: np.ndarray, patch_size: int = NIQE_PATCH) -> np.ndarray:
    """Per-patch 36-dim feature matrix (two scales, 18 features per scale)."""
    gray = rgb_to_luma(img) * 255.0
    if min(gray.shape) < patch_size:
        raise ConfigError(
            f"image {gray.shape} smaller than the NIQE patch size {patch_size}"
        )
    rows = gray.shape[0] // patch_size
    cols = gray.shape[1] // patch_size
    per_scale = []
    for scale, block in ((1, patch_size), (2, patch_size // 2)):
        plane = gray if scale == 1 else _half_scale(gray)
        coeffs = _mscn(plane)
        feats = [
            _patch_features(coeffs[r * block : (r + 1) * block, c * block : (c + 1) * block])
            for r in range(rows)
            for c in range(cols)
        ]
        per_scale.append(np.asarray(feats))
    return np.hstack(per_scale)


def fit_niqe_model(images, patch_size: int = NIQE_PATCH) -> dict:
    """Fit the pristine multivariate Gaussian over a corpus of clean images."""
    feats = np.vstack([niqe_features(img, patch_size) for img in images])
    return {
        "mu": np.mean(feats, axis=0).tolist(),
        "cov": np.cov(feats, rowvar=False).tolist(),
        "patch_size": patch_size,
    }


def save_niqe_model(model: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(model, fh)


def load_niqe_model(path=None) -> dict:
    """Load a NIQE model file; defaults to the packaged pristine model."""
    if path is None:
        ref = resources.files("relight").joinpath("assets/niqe_pristine.json")
        with ref.open("r") as fh:
            model = json.load(fh)
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"NIQE model file not found: {path}")
        with open(path) as fh:
            model = json.load(fh)
    missing = {"mu", "cov", "patch_size"} - set(model)
    if missing:
        raise ConfigError(f"NIQE model missing keys: {sorted(missing)}")
    return model


def niqe(img: np.ndarray, model: dict | None = None) -> float:
    """Distance between the image's feature Gaussian and the pristine one."""
    if model is None:
        model = load_niqe_model()
    feats = niqe_features(img, int(model["patch_size"]))
    mu_img = np.mean(feats, axis=0)
    cov_img = np.cov(feats, rowvar=False) if feats.shape[0] > 1 else np.zeros(
        (feats.shape[1], feats.shape[1])
    )
    mu_model = np.asarray(model["mu"], dtype=np.float64)
    cov_model = np.asarray(model["cov"], dtype=np.float64)
    diff = mu_model - mu_img
    pooled = np.linalg.pinv((cov_model + cov_img) / 2.0)
    return float(np.sqrt(max(diff @ pooled @ diff, 0.0)))


# --- corpus evaluation ---------------------------------------------------


def evaluate(pred_dir, gt_dir, out_csv=None, out_json=None, niqe_model: dict | None = None) -> dict:
    """Per-image metrics plus corpus means for matching filenames.

    Returns ``{"per_image": [row, ...], "mean": {...}}`` and optionally writes
    the CSV/JSON mirrors. Rows are sorted by filename.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_names = {p.name for p in pred_dir.glob("*.png")}
    gt_names = {p.name for p in gt_dir.glob("*.png")}
    common = sorted(pred_names & gt_names)
    if not common:
        raise ConfigError(f"no matching filenames between {pred_dir} and {gt_dir}")
    orphans = sorted(pred_names ^ gt_names)
    if orphans:
        raise ConfigError(f"unmatched filenames: {', '.join(orphans)}")
    if niqe_model is None:
        niqe_model = load_niqe_model()

    rows = []
    for name in common:
        pred = load_image(pred_dir / name)
        gt = load_image(gt_dir / name)
        n_pred = niqe(pred, niqe_model)
        n_gt = niqe(gt, niqe_model)
        rows.append(
            {
                "filename": name,
                "mse": mse(pred, gt),
                "ssim": ssim(pred, gt),
                "niqe_pred": n_pred,
                "niqe_gt": n_gt,
                "niqe_ratio": n_pred / n_gt,
            }
        )
    means = {k: float(np.mean([r[k] for r in rows])) for k in REPORT_FIELDS}
    report = {"per_image": rows, "mean": means}
    if out_csv:
        write_report_csv(report, out_csv)
    if out_json:
        with open(out_json, "w") as fh:
            json.dump(report, fh, indent=2)
    return report


def write_report_csv(report: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("filename",) + REPORT_FIELDS)
        for row in report["per_image"]:
            writer.writerow([row["filename"]] + [f"{row[k]:.6f}" for k in REPORT_FIELDS])
        writer.writerow(["mean"] + [f"{report['mean'][k]:.6f}" for k in REPORT_FIELDS])
