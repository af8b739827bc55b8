import math

import numpy as np
import pytest
import torch

from helpers import finite_diff_check
from relight.data import UnpairedDataset, synthesize_image
from relight.decomposition import DecompNet, save_decomp_checkpoint
from relight.enhancement import UNetSpec
from relight.errors import ConfigError, TrainingDiverged
from relight.netops import param_checksum, stack_to_batch
from relight.training import (
    Optimizers,
    TrainConfig,
    generator_losses,
    init_gan_nets,
    load_gan_checkpoint,
    lr_at_epoch,
    make_optimizers,
    run_cycle,
    save_gan_checkpoint,
    schedule_hash,
    train_gan,
    train_step,
)

TOY_UNET = UNetSpec(input_size=64, num_down=5, num_up=5, channel_plan=(4, 8, 16, 16, 16, 16))
TOY_DISC = (4, 8, 8, 8)


def toy_config(**overrides):
    defaults = dict(
        lr_gen=2e-4, lr_disc=2e-4, decay=0.5, epochs=2, batch_size=4, seed=3,
        unet=TOY_UNET, disc_widths=TOY_DISC, checkpoint_every=100,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


def toy_nets(config):
    return init_gan_nets(config, DecompNet(width=8, seed=config.seed))


def toy_batches(seed=0, count=8, size=64):
    images = [synthesize_image([seed, i], size=size) for i in range(count)]
    lows = [(im * 0.35).astype(np.float32) for im in images[: count // 2]]
    highs = images[count // 2 :]
    return stack_to_batch(lows[:4]), stack_to_batch(highs[:4])


@pytest.fixture(scope="module")
def toy_dataset():
    highs = [synthesize_image([50, i], size=64) for i in range(4)]
    lows = [
        (synthesize_image([60, i], size=64) * 0.3).astype(np.float32) for i in range(4)
    ]
    return UnpairedDataset(lows=lows, highs=highs)


class TestRunCycle:
    def test_forward_chain_recomposition_invariant(self):
        config = toy_config()
        nets = toy_nets(config)
        x_low, x_high = toy_batches()
        state = run_cycle(nets, x_low, x_high)
        # S_high' must be exactly R_low * I_high' (broadcast over channels)
        assert torch.equal(state.s_high_p, state.r_low * state.i_high_p)
        assert torch.equal(state.s_low_p, state.r_high * state.i_low_p)
        assert torch.equal(state.s_low_pp, state.r_high_p * state.i_low_pp)

    def test_all_sixteen_tensors_populated(self):
        config = toy_config()
        state = run_cycle(toy_nets(config), *toy_batches())
        assert len(state.tensors()) == 16
        for name, tensor in state.tensors().items():
            expected_ch = 1 if name.startswith("i_") else 3
            assert tensor.shape[1] == expected_ch, name

    def test_full_pipeline_gradients(self, rng):
        """Autograd through decompose -> enhance -> recompose -> losses."""
        spec = UNetSpec(input_size=16, num_down=2, num_up=2, channel_plan=(4, 4, 4))
        config = toy_config(unet=spec, disc_widths=(4, 4))
        nets = toy_nets(config)
        for module in (nets.decomp, nets.g2, nets.f2, nets.d_high, nets.d_low):
            module.double()
        x_low = torch.rand(1, 3, 16, 16, dtype=torch.float64)
        x_high = torch.rand(1, 3, 16, 16, dtype=torch.float64)

        def loss_fn():
            state = run_cycle(nets, x_low, x_high)
            loss_g, loss_f = generator_losses(state, nets.d_high, nets.d_low)
            return loss_g + loss_f

        params = list(nets.g2.parameters()) + list(nets.f2.parameters())
        checked = finite_diff_check(loss_fn, params, rng, n_checks=24, step=1e-5, rtol=1e-4)
        assert checked >= 20


class TestTrainStep:
    def test_reports_all_losses_finite_and_additive(self):
        config = toy_config()
        nets = toy_nets(config)
        report = train_step(nets, *toy_batches(), make_optimizers(nets, config))
        expected_keys = {"cyc_S", "cyc_R", "cyc_total", "gen_G", "gen_F", "disc_high", "disc_low"}
        assert set(report) == expected_keys
        for value in report.values():
            assert math.isfinite(value) and value >= 0.0
        assert abs(report["cyc_total"] - (report["cyc_S"] + report["cyc_R"])) <= 1e-9

    def test_zero_lr_leaves_parameters_unchanged(self):
        config = toy_config()
        nets = toy_nets(config)
        opts = Optimizers(
            gen=torch.optim.Adam(
                list(nets.g2.parameters()) + list(nets.f2.parameters()), lr=0.0
            ),
            d_high=torch.optim.Adam(nets.d_high.parameters(), lr=0.0),
            d_low=torch.optim.Adam(nets.d_low.parameters(), lr=0.0),
        )
        before = {
            name: param_checksum(net)
            for name, net in (("g2", nets.g2), ("f2", nets.f2),
                              ("dh", nets.d_high), ("dl", nets.d_low))
        }
        report = train_step(nets, *toy_batches(), opts)
        assert all(math.isfinite(v) for v in report.values())
        assert param_checksum(nets.g2) == before["g2"]
        assert param_checksum(nets.f2) == before["f2"]
        assert param_checksum(nets.d_high) == before["dh"]
        assert param_checksum(nets.d_low) == before["dl"]

    def test_update_isolation(self):
        # generator step must not move discriminators, and vice versa
        config = toy_config()
        nets = toy_nets(config)
        opts = Optimizers(
            gen=torch.optim.Adam(
                list(nets.g2.parameters()) + list(nets.f2.parameters()), lr=1e-3
            ),
            d_high=torch.optim.Adam(nets.d_high.parameters(), lr=0.0),
            d_low=torch.optim.Adam(nets.d_low.parameters(), lr=0.0),
        )
        d_before = (param_checksum(nets.d_high), param_checksum(nets.d_low))
        g_before = (param_checksum(nets.g2), param_checksum(nets.f2))
        train_step(nets, *toy_batches(), opts)
        assert (param_checksum(nets.d_high), param_checksum(nets.d_low)) == d_before
        assert (param_checksum(nets.g2), param_checksum(nets.f2)) != g_before

        opts = Optimizers(
            gen=torch.optim.Adam(
                list(nets.g2.parameters()) + list(nets.f2.parameters()), lr=0.0
            ),
            d_high=torch.optim.Adam(nets.d_high.parameters(), lr=1e-3),
            d_low=torch.optim.Adam(nets.d_low.parameters(), lr=1e-3),
        )
        g_before = (param_checksum(nets.g2), param_checksum(nets.f2))
        train_step(nets, *toy_batches(), opts)
        assert (param_checksum(nets.g2), param_checksum(nets.f2)) == g_before
        assert param_checksum(nets.d_high) != d_before[0]

    def test_frozen_decomp_untouched(self):
        config = toy_config()
        nets = toy_nets(config)
        for p in nets.decomp.parameters():
            p.requires_grad_(False)
        before = param_checksum(nets.decomp)
        train_step(nets, *toy_batches(), make_optimizers(nets, config))
        assert param_checksum(nets.decomp) == before

    def test_deterministic_report(self):
        config = toy_config()
        reports = []
        for _ in range(2):
            nets = toy_nets(config)
            reports.append(train_step(nets, *toy_batches(), make_optimizers(nets, config)))
        assert reports[0] == reports[1]

    def test_nan_aborts_with_dump(self, tmp_path):
        config = toy_config()
        nets = toy_nets(config)
        with torch.no_grad():
            next(nets.g2.parameters())[0] = float("nan")
        with pytest.raises(TrainingDiverged) as excinfo:
            train_step(nets, *toy_batches(), make_optimizers(nets, config), dump_dir=tmp_path)
        assert excinfo.value.dump_path is not None
        assert excinfo.value.dump_path.exists()

    def test_mismatched_batches_rejected(self):
        config = toy_config()
        nets = toy_nets(config)
        x_low, x_high = toy_batches()
        with pytest.raises(ConfigError):
            train_step(nets, x_low[:2], x_high, make_optimizers(nets, config))


class TestLrSchedule:
    def test_halving_at_midpoint(self):
        assert lr_at_epoch(2e-4, 0.5, 0, 500) == pytest.approx(2e-4)
        assert lr_at_epoch(2e-4, 0.5, 249, 500) == pytest.approx(2e-4)
        assert lr_at_epoch(2e-4, 0.5, 250, 500) == pytest.approx(1e-4)
        assert lr_at_epoch(2e-4, 0.5, 499, 500) == pytest.approx(1e-4)

    def test_short_run_scaling(self):
        assert lr_at_epoch(1e-3, 0.5, 24, 50) == pytest.approx(1e-3)
        assert lr_at_epoch(1e-3, 0.5, 25, 50) == pytest.approx(5e-4)

    def test_single_epoch(self):
        assert lr_at_epoch(1e-3, 0.5, 0, 1) == pytest.approx(1e-3)


class TestTrainGan:
    def _decomp_ckpt(self, tmp_path, seed=3):
        path = tmp_path / "decomp.ckpt"
        save_decomp_checkpoint(path, DecompNet(width=8, seed=seed), iterations=0)
        return path

    def test_missing_decomp_checkpoint_rejected(self, tmp_path, toy_dataset):
        with pytest.raises(ConfigError):
            train_gan(toy_config(), toy_dataset, tmp_path / "missing.ckpt", tmp_path / "out")

    def test_zero_epochs_equals_initialization(self, tmp_path, toy_dataset):
        config = toy_config(epochs=0)
        ckpt = self._decomp_ckpt(tmp_path)
        nets = train_gan(config, toy_dataset, ckpt, tmp_path / "out")
        fresh = init_gan_nets(config, DecompNet(width=8, seed=3))
        assert param_checksum(nets.g2) == param_checksum(fresh.g2)
        assert param_checksum(nets.f2) == param_checksum(fresh.f2)
        assert param_checksum(nets.d_high) == param_checksum(fresh.d_high)
        assert param_checksum(nets.d_low) == param_checksum(fresh.d_low)
        loaded, meta = load_gan_checkpoint(tmp_path / "out" / "gan.ckpt")
        assert param_checksum(loaded.g2) == param_checksum(fresh.g2)
        assert meta["kind"] == "gan"

    def test_freeze_decomp_checksums_stable(self, tmp_path, toy_dataset):
        config = toy_config(epochs=1)
        ckpt = self._decomp_ckpt(tmp_path)
        before = param_checksum(DecompNet(width=8, seed=3))
        nets = train_gan(config, toy_dataset, ckpt, tmp_path / "out")
        assert param_checksum(nets.decomp) == before

    def test_deterministic_log_for_ten_steps(self, tmp_path, toy_dataset):
        config = toy_config(epochs=5, batch_size=2)  # 2 steps per epoch -> 10 lines
        ckpt = self._decomp_ckpt(tmp_path)
        train_gan(config, toy_dataset, ckpt, tmp_path / "a")
        train_gan(config, toy_dataset, ckpt, tmp_path / "b")
        lines_a = (tmp_path / "a" / "gan_loss.csv").read_text().splitlines()
        lines_b = (tmp_path / "b" / "gan_loss.csv").read_text().splitlines()
        assert len(lines_a) == 1 + 10
        assert lines_a == lines_b

    def test_log_lr_column_matches_schedule(self, tmp_path, toy_dataset):
        config = toy_config(epochs=4, batch_size=2)
        ckpt = self._decomp_ckpt(tmp_path)
        train_gan(config, toy_dataset, ckpt, tmp_path / "out")
        lines = (tmp_path / "out" / "gan_loss.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        for line in lines[1:]:
            cells = line.split(",")
            epoch = int(cells[header.index("epoch")])
            lr = float(cells[header.index("lr")])
            assert lr == pytest.approx(lr_at_epoch(config.lr_gen, config.decay, epoch, config.epochs))

    def test_cyc_total_additivity_on_every_step(self, tmp_path, toy_dataset):
        config = toy_config(epochs=3, batch_size=2)
        ckpt = self._decomp_ckpt(tmp_path)
        train_gan(config, toy_dataset, ckpt, tmp_path / "out")
        lines = (tmp_path / "out" / "gan_loss.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        for line in lines[1:]:
            cells = [float(c) for c in line.split(",")]
            cyc_s = cells[header.index("cyc_S")]
            cyc_r = cells[header.index("cyc_R")]
            cyc_total = cells[header.index("cyc_total")]
            assert abs(cyc_total - (cyc_s + cyc_r)) <= 1e-9

    def test_batch_size_larger_than_dataset_rejected(self, tmp_path, toy_dataset):
        ckpt = self._decomp_ckpt(tmp_path)
        with pytest.raises(ConfigError):
            train_gan(toy_config(batch_size=64), toy_dataset, ckpt, tmp_path / "out")


class TestGanCheckpoint:
    def test_roundtrip_bit_exact_all_tensors(self, tmp_path):
        config = toy_config()
        nets = toy_nets(config)
        save_gan_checkpoint(tmp_path / "g.ckpt", nets, config, epochs_done=2)
        loaded, meta = load_gan_checkpoint(tmp_path / "g.ckpt")
        for attr in ("decomp", "g2", "f2", "d_high", "d_low"):
            assert param_checksum(getattr(loaded, attr)) == param_checksum(getattr(nets, attr))
        assert meta["epochs"] == 2
        assert meta["schedule_hash"] == schedule_hash(config)

    def test_schedule_hash_ignores_architecture(self):
        a = toy_config()
        b = toy_config(unet=UNetSpec(input_size=64, num_down=5, num_up=5,
                                     channel_plan=(4, 4, 4, 4, 4, 4)))
        c = toy_config(seed=99)
        assert schedule_hash(a) == schedule_hash(b)
        assert schedule_hash(a) != schedule_hash(c)
