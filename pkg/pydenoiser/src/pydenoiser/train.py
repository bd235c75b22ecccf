"""Noise-prediction training: MSE between predicted and actual noise.

The schedule here must match the sampler that will drive the model; its
parameters are stored in the checkpoint and advertised by the server.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import PatchDataset
from .model import UNet3d


@dataclass
class TrainConfig:
    steps: int = 250
    beta_start: float = 1e-4
    beta_end: float = 0.02
    epochs: int = 10
    batch_size: int = 16
    lr: float = 2e-3
    base_channels: int = 8
    seed: int = 0

    def schedule(self) -> np.ndarray:
        return np.linspace(self.beta_start, self.beta_end, self.steps)


@dataclass
class Checkpoint:
    model: UNet3d
    config: TrainConfig
    max_id: int
    epoch_losses: list[float] = field(default_factory=list)

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        torch.save(self.model.state_dict(), out / "model.pt")
        meta = {
            "max_id": self.max_id,
            "epoch_losses": self.epoch_losses,
            "steps": self.config.steps,
            "beta_start": self.config.beta_start,
            "beta_end": self.config.beta_end,
            "base_channels": self.config.base_channels,
            "epochs": self.config.epochs,
            "batch_size": self.config.batch_size,
            "lr": self.config.lr,
            "seed": self.config.seed,
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=1))
        return out

    @classmethod
    def load(cls, ckpt_dir) -> "Checkpoint":
        ckpt_dir = Path(ckpt_dir)
        meta = json.loads((ckpt_dir / "meta.json").read_text())
        config = TrainConfig(
            steps=meta["steps"],
            beta_start=meta["beta_start"],
            beta_end=meta["beta_end"],
            epochs=meta["epochs"],
            batch_size=meta["batch_size"],
            lr=meta["lr"],
            base_channels=meta["base_channels"],
            seed=meta["seed"],
        )
        model = UNet3d(base=config.base_channels)
        model.load_state_dict(torch.load(ckpt_dir / "model.pt", weights_only=True))
        model.eval()
        return cls(
            model=model,
            config=config,
            max_id=meta["max_id"],
            epoch_losses=meta["epoch_losses"],
        )


def train(dataset: PatchDataset, config: TrainConfig | None = None,
          log=None) -> Checkpoint:
    """Train the noise predictor; returns the checkpoint in memory."""
    config = config or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    torch.manual_seed(config.seed)

    betas = torch.from_numpy(config.schedule()).float()
    alpha_bars = torch.cumprod(1.0 - betas, dim=0)

    model = UNet3d(base=config.base_channels)
    model.train()
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr)
    patches = torch.from_numpy(dataset.patches)[:, None]  # (n, 1, 32, 32, 32)
    n = len(dataset)
    rng = np.random.default_rng(config.seed)

    epoch_losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        t0 = time.time()
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x0 = patches[idx]
            t = torch.from_numpy(rng.integers(1, config.steps + 1, len(idx)))
            abar = alpha_bars[t - 1][:, None, None, None, None]
            noise = torch.randn_like(x0)
            x_t = torch.sqrt(abar) * x0 + torch.sqrt(1 - abar) * noise
            pred = model(x_t, t)
            loss = torch.mean((pred - noise) ** 2)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        epoch_losses.append(float(np.mean(losses)))
        if log:
            log(f"epoch {epoch + 1}/{config.epochs}: loss {epoch_losses[-1]:.4f} "
                f"({time.time() - t0:.1f}s)")
    model.eval()
    return Checkpoint(model=model, config=config, max_id=dataset.max_id,
                      epoch_losses=epoch_losses)
