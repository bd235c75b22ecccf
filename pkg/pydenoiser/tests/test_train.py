import numpy as np
import pytest
import torch

from pydenoiser.data import PatchDataset
from pydenoiser.train import Checkpoint, TrainConfig, train


def toy_dataset(n=64, seed=0) -> PatchDataset:
    """Blocky piecewise-constant patches (cheap stand-in for grain data)."""
    rng = np.random.default_rng(seed)
    patches = np.empty((n, 32, 32, 32), dtype=np.float32)
    for i in range(n):
        levels = rng.integers(0, 8, size=(4, 4, 4))
        coarse = (levels / 7 * 2 - 1).astype(np.float32)
        patches[i] = np.kron(coarse, np.ones((8, 8, 8), dtype=np.float32))
    return PatchDataset(patches=patches, max_id=7)


FAST = TrainConfig(steps=50, epochs=2, batch_size=16, base_channels=4, seed=0)


class TestTraining:
    def test_loss_decreases(self):
        ckpt = train(toy_dataset(), FAST)
        assert len(ckpt.epoch_losses) == 2
        assert ckpt.epoch_losses[-1] < ckpt.epoch_losses[0]

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(PatchDataset(patches=np.empty((0, 32, 32, 32), np.float32), max_id=1), FAST)

    def test_reproducible(self):
        a = train(toy_dataset(), FAST)
        b = train(toy_dataset(), FAST)
        assert a.epoch_losses == pytest.approx(b.epoch_losses, rel=1e-5)

    def test_beats_zero_predictor_at_terminal_step(self):
        # MSE of predicting zero noise on pure-noise inputs is ~1; even a
        # briefly trained model must do better at t = T
        ckpt = train(toy_dataset(), FAST)
        betas = torch.from_numpy(FAST.schedule()).float()
        abar_T = float(torch.cumprod(1 - betas, 0)[-1])
        x0 = torch.from_numpy(toy_dataset(seed=99).patches[:16])[:, None]
        torch.manual_seed(1)
        noise = torch.randn_like(x0)
        x_t = np.sqrt(abar_T) * x0 + np.sqrt(1 - abar_T) * noise
        with torch.inference_mode():
            pred = ckpt.model(x_t, FAST.steps)
        model_mse = float(torch.mean((pred - noise) ** 2))
        zero_mse = float(torch.mean(noise**2))
        assert model_mse < zero_mse


class TestCheckpoint:
    def test_save_load_round_trip(self, tmp_path):
        ckpt = train(toy_dataset(), FAST)
        ckpt.save(tmp_path / "ckpt")
        loaded = Checkpoint.load(tmp_path / "ckpt")
        assert loaded.max_id == ckpt.max_id
        assert loaded.config == ckpt.config
        assert loaded.epoch_losses == pytest.approx(ckpt.epoch_losses)
        x = torch.randn(2, 1, 32, 32, 32)
        with torch.inference_mode():
            a = ckpt.model(x, 10)
            b = loaded.model(x, 10)
        assert torch.equal(a, b)
