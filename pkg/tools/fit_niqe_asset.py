#!/usr/bin/env python3
"""Regenerate src/relight/assets/niqe_pristine.json.

The pristine corpus is 40 clean procedural images with exposure and softness
variety. The fitted covariance gets a small ridge so the shipped model stays
well conditioned under the pooled-covariance inverse.
"""

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from relight.data import synthesize_image
from relight.metrics import fit_niqe_model, save_niqe_model

ASSET = Path(__file__).resolve().parent.parent / "src" / "relight" / "assets" / "niqe_pristine.json"


def main() -> None:
    pristine = []
    for size in (288, 384):
        for i in range(20):
            img = synthesize_image([9000, size, i], size=size).astype(np.float64)
            rng = np.random.default_rng([9000, size, i, 77])
            img = img ** rng.uniform(0.8, 1.25)
            if i % 3 == 0:
                img = gaussian_filter(img, (0.6, 0.6, 0))
            pristine.append(np.clip(img, 0.0, 1.0).astype(np.float32))
    model = fit_niqe_model(pristine)
    cov = np.array(model["cov"])
    ridge = 1e-4 * np.trace(cov) / cov.shape[0]
    model["cov"] = (cov + ridge * np.eye(cov.shape[0])).tolist()
    save_niqe_model(model, ASSET)
    print(f"wrote {ASSET}")


if __name__ == "__main__":
    main()
