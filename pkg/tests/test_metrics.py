import csv
import json

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from relight.data import synthesize_image
from relight.errors import ConfigError, ShapeError
from relight.imaging import DegradationParams, degrade, save_image
from relight.metrics import (
    SSIM_C1,
    evaluate,
    fit_niqe_model,
    load_niqe_model,
    mse,
    niqe,
    rgb_to_luma,
    save_niqe_model,
    ssim,
)


class TestMse:
    def test_identical_images_zero(self, rand_image):
        assert mse(rand_image, rand_image) == 0.0

    def test_ones_vs_zeros(self):
        a = np.ones((4, 4, 3))
        b = np.zeros((4, 4, 3))
        assert mse(a, b) == 1.0

    def test_hand_fixture(self):
        a = np.zeros((2, 2, 1))
        b = np.zeros((2, 2, 1))
        b[0, 0, 0] = 0.1
        b[0, 1, 0] = 0.2
        expected = (0.1**2 + 0.2**2) / 4.0
        assert mse(a, b) == pytest.approx(expected, abs=1e-9)

    def test_symmetry(self, rng):
        a = rng.uniform(0, 1, (5, 6, 3))
        b = rng.uniform(0, 1, (5, 6, 3))
        assert mse(a, b) == mse(b, a)

    def test_translation_sensitivity(self, rng):
        a = rng.uniform(0.2, 0.6, (5, 5, 3))
        delta = 0.25
        assert mse(a, a + delta) == pytest.approx(delta**2, rel=1e-9)

    def test_shape_mismatch(self, rand_image):
        with pytest.raises(ShapeError):
            mse(rand_image, rand_image[:8])


class TestSsim:
    def test_self_similarity_is_one(self, natural_image):
        assert ssim(natural_image, natural_image) == pytest.approx(1.0, abs=1e-6)

    def test_constant_pair_closed_form(self):
        mu1, mu2 = 0.3, 0.6
        a = np.full((32, 32, 3), mu1)
        b = np.full((32, 32, 3), mu2)
        # zero variances: structure term is C2/C2 = 1, luminance term remains
        expected = (2 * mu1 * mu2 + SSIM_C1) / (mu1**2 + mu2**2 + SSIM_C1)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-9)

    def test_cross_implementation_agreement(self, rng):
        for _ in range(3):
            a = rng.uniform(0, 1, (48, 40, 3))
            b = np.clip(a + rng.normal(0, 0.08, a.shape), 0, 1)
            reference = structural_similarity(
                rgb_to_luma(a),
                rgb_to_luma(b),
                data_range=1.0,
                win_size=11,
                gaussian_weights=True,
                sigma=1.5,
                use_sample_covariance=False,
            )
            assert ssim(a, b) == pytest.approx(reference, abs=1e-4)

    def test_symmetry(self, rng):
        a = rng.uniform(0, 1, (24, 24, 3))
        b = rng.uniform(0, 1, (24, 24, 3))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_image_smaller_than_window_rejected(self, rng):
        small = rng.uniform(0, 1, (8, 8, 3))
        with pytest.raises(ShapeError):
            ssim(small, small)


class TestNiqe:
    def test_deterministic(self, natural_image):
        model = load_niqe_model()
        assert niqe(natural_image, model) == niqe(natural_image, model)

    def test_self_ratio_exactly_one(self, natural_image):
        model = load_niqe_model()
        value = niqe(natural_image, model)
        assert value / value == 1.0

    def test_noise_scores_worse_than_natural(self, natural_image, rng):
        model = load_niqe_model()
        noise = np.clip(rng.normal(0.5, 0.15, (256, 256, 3)), 0, 1).astype(np.float32)
        assert niqe(noise, model) > niqe(natural_image, model)

    def test_nonnegative(self, rng):
        model = load_niqe_model()
        img = rng.uniform(0, 1, (128, 128, 3))
        assert niqe(img, model) >= 0.0

    def test_missing_model_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_niqe_model(tmp_path / "absent.json")

    def test_model_missing_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mu": [0.0]}))
        with pytest.raises(ConfigError):
            load_niqe_model(path)

    def test_fit_and_reload(self, tmp_path):
        images = [synthesize_image([5, i], size=192) for i in range(3)]
        model = fit_niqe_model(images, patch_size=96)
        assert len(model["mu"]) == 36
        path = tmp_path / "model.json"
        save_niqe_model(model, path)
        reloaded = load_niqe_model(path)
        assert reloaded["patch_size"] == 96
        value = niqe(images[0], reloaded)
        assert np.isfinite(value) and value >= 0.0

    def test_too_small_image_rejected(self, rng):
        model = load_niqe_model()
        with pytest.raises(ConfigError):
            niqe(rng.uniform(0, 1, (64, 64, 3)), model)


class TestEvaluate:
    @pytest.fixture
    def dirs(self, tmp_path):
        pred = tmp_path / "pred"
        gt = tmp_path / "gt"
        pred.mkdir()
        gt.mkdir()
        for i in range(3):
            img = synthesize_image([30, i], size=128)
            save_image(img, gt / f"im_{i}.png")
            degraded = degrade(img, DegradationParams(gamma=1.5, gain=0.7, seed=i))
            save_image(degraded, pred / f"im_{i}.png")
        return pred, gt

    def test_identical_dirs_ground_truth_row(self, dirs):
        _, gt = dirs
        report = evaluate(gt, gt)
        assert report["mean"]["mse"] == 0.0
        assert report["mean"]["ssim"] == pytest.approx(1.0, abs=1e-6)
        assert report["mean"]["niqe_ratio"] == 1.0

    def test_corpus_mean_equals_mean_of_rows(self, dirs):
        pred, gt = dirs
        report = evaluate(pred, gt)
        assert len(report["per_image"]) == 3
        for key in ("mse", "ssim", "niqe_ratio"):
            values = [row[key] for row in report["per_image"]]
            assert report["mean"][key] == pytest.approx(float(np.mean(values)), rel=1e-12)

    def test_outputs_written(self, dirs, tmp_path):
        pred, gt = dirs
        out_csv = tmp_path / "report.csv"
        out_json = tmp_path / "report.json"
        evaluate(pred, gt, out_csv=out_csv, out_json=out_json)
        with open(out_csv) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["filename", "mse", "ssim", "niqe_pred", "niqe_gt", "niqe_ratio"]
        assert len(rows) == 1 + 3 + 1  # header + per-image + mean
        parsed = json.loads(out_json.read_text())
        assert set(parsed) == {"per_image", "mean"}

    def test_empty_intersection_rejected(self, tmp_path, rand_image):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        save_image(rand_image, a / "x.png")
        save_image(rand_image, b / "y.png")
        with pytest.raises(ConfigError):
            evaluate(a, b)

    def test_orphans_listed(self, dirs):
        pred, gt = dirs
        extra = pred / "only_here.png"
        save_image(synthesize_image([31, 0], size=128), extra)
        with pytest.raises(ConfigError, match="only_here.png"):
            evaluate(pred, gt)
