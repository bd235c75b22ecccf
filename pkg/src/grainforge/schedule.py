"""Noise schedule for the denoising diffusion sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, InvalidStep

DEFAULT_T = 250
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and their cumulative products.

    ``betas[i]`` is beta at step ``t = i + 1``; accessors take 1-based step
    indices. The reverse-process noise convention is ``sigma_t^2 = beta_t``.
    """

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise InvalidConfig("betas must be a non-empty 1-D array")
        if not (betas > 0).all() or not (betas < 1).all():
            raise InvalidConfig("betas must lie strictly inside (0, 1)")
        if not (np.diff(betas) >= 0).all():
            raise InvalidConfig("betas must be non-decreasing")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def _check_step(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise InvalidStep(f"step {t} outside [1, {self.T}]")
        return t

    def beta(self, t: int) -> float:
        return float(self.betas[self._check_step(t) - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._check_step(t) - 1])

    def alpha_bar(self, t: int) -> float:
        """Cumulative product; ``alpha_bar(0) = 1`` by convention."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[self._check_step(t) - 1])

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "beta_start": float(self.betas[0]),
            "beta_end": float(self.betas[-1]),
            "kind": "linear",
        }


def build_linear_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear variance ramp, endpoints included."""
    if T < 1:
        raise InvalidConfig(f"T must be >= 1, got {T}")
    if not (0 < beta_start <= beta_end < 1):
        raise InvalidConfig(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))
