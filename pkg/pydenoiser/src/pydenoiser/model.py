"""Small 3-D U-Net noise predictor with sinusoidal step conditioning.

Two down/up levels; the full-resolution path is kept to single convolutions
so CPU inference stays fast, with FiLM-conditioned residual blocks at the
coarser levels carrying the step information.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(
        -math.log(10_000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half
    )
    angles = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class FilmResBlock(nn.Module):
    def __init__(self, channels: int, t_dim: int):
        super().__init__()
        groups = max(1, channels // 4)
        self.norm1 = nn.GroupNorm(groups, channels)
        self.conv1 = nn.Conv3d(channels, channels, 3, padding=1)
        self.film = nn.Linear(t_dim, 2 * channels)
        self.norm2 = nn.GroupNorm(groups, channels)
        self.conv2 = nn.Conv3d(channels, channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x, t_emb):
        h = self.conv1(self.act(self.norm1(x)))
        scale, shift = self.film(t_emb)[:, :, None, None, None].chunk(2, dim=1)
        h = h * (1 + scale) + shift
        h = self.conv2(self.act(self.norm2(h)))
        return x + h


class UNet3d(nn.Module):
    def __init__(self, base: int = 8, t_dim: int = 32):
        super().__init__()
        self.t_dim = t_dim
        c1, c2, c3 = base, base * 2, base * 4
        self.t_mlp = nn.Sequential(nn.Linear(t_dim, t_dim), nn.SiLU(), nn.Linear(t_dim, t_dim))

        self.stem = nn.Conv3d(1, c1, 3, padding=1)
        self.enc1 = nn.Conv3d(c1, c1, 3, padding=1)
        self.down1 = nn.Conv3d(c1, c2, 4, stride=2, padding=1)
        self.enc2 = FilmResBlock(c2, t_dim)
        self.down2 = nn.Conv3d(c2, c3, 4, stride=2, padding=1)
        self.mid = FilmResBlock(c3, t_dim)
        self.up2 = nn.ConvTranspose3d(c3, c2, 4, stride=2, padding=1)
        self.dec2 = FilmResBlock(c2, t_dim)
        self.fuse2 = nn.Conv3d(c2 * 2, c2, 1)
        self.up1 = nn.ConvTranspose3d(c2, c1, 4, stride=2, padding=1)
        self.fuse1 = nn.Conv3d(c1 * 2, c1, 3, padding=1)
        self.act = nn.SiLU()
        self.out = nn.Conv3d(c1, 1, 3, padding=1)

    def forward(self, x, t):
        if not torch.is_tensor(t):
            t = torch.full((x.shape[0],), float(t), device=x.device)
        t_emb = self.t_mlp(sinusoidal_embedding(t, self.t_dim))

        h1 = self.act(self.enc1(self.act(self.stem(x))))
        h2 = self.enc2(self.act(self.down1(h1)), t_emb)
        h3 = self.mid(self.act(self.down2(h2)), t_emb)
        u2 = self.fuse2(torch.cat([self.act(self.up2(h3)), h2], dim=1))
        u2 = self.dec2(u2, t_emb)
        u1 = self.act(self.fuse1(torch.cat([self.act(self.up1(u2)), h1], dim=1)))
        return self.out(u1)
