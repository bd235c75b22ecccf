"""Noise-predictor interface and in-process denoisers.

A denoiser maps a float32 batch ``x_t`` of shape (B, nx, ny, nz) and a step
index ``t`` to the predicted noise of the same shape. The analytic Gaussian
denoiser is exact for Gaussian data and serves as the sampler's oracle: for
x0 ~ N(mu, Sigma) and x_t = sqrt(abar)*x0 + sqrt(1-abar)*z,

    E[x0 | x_t] = mu + sqrt(abar) * Sigma (abar*Sigma + (1-abar) I)^-1 (x_t - sqrt(abar)*mu)
    eps_hat     = (x_t - sqrt(abar) * E[x0 | x_t]) / sqrt(1 - abar)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import InvalidConfig
from .schedule import NoiseSchedule


@runtime_checkable
class Denoiser(Protocol):
    def predict_noise(self, x_t: np.ndarray, t: int) -> np.ndarray: ...


class ZeroDenoiser:
    """Predicts zero noise everywhere; useful for plumbing tests."""

    def predict_noise(self, x_t: np.ndarray, t: int) -> np.ndarray:
        return np.zeros_like(x_t, dtype=np.float32)


class RandomDenoiser:
    """Deterministic pseudo-random predictions (a stress-test double)."""

    def __init__(self, seed: int = 0, scale: float = 1.0):
        self.seed = int(seed)
        self.scale = float(scale)

    def predict_noise(self, x_t: np.ndarray, t: int) -> np.ndarray:
        rng = np.random.default_rng((self.seed, int(t)))
        return rng.standard_normal(x_t.shape, dtype=np.float32) * np.float32(self.scale)


@dataclass(frozen=True)
class IsotropicCovariance:
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise InvalidConfig(f"variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class DiagonalCovariance:
    variances: np.ndarray  # shape (nx, ny, nz)

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=np.float64)
        if (v <= 0).any():
            raise InvalidConfig("all variances must be positive")
        object.__setattr__(self, "variances", v)


@dataclass(frozen=True)
class Ar1Covariance:
    """Stationary AR(1) covariance sigma^2 * rho^|i-j| along one axis,
    independent across the other two axes."""

    rho: float
    variance: float
    axis: int = 0

    def __post_init__(self):
        if not -1 < self.rho < 1:
            raise InvalidConfig(f"|rho| must be < 1, got {self.rho}")
        if self.variance <= 0:
            raise InvalidConfig(f"variance must be positive, got {self.variance}")
        if self.axis not in (0, 1, 2):
            raise InvalidConfig(f"axis must be 0, 1, or 2, got {self.axis}")

    def matrix(self, n: int) -> np.ndarray:
        i = np.arange(n)
        return self.variance * self.rho ** np.abs(i[:, None] - i[None, :])


CovarianceSpec = IsotropicCovariance | DiagonalCovariance | Ar1Covariance


class AnalyticGaussianDenoiser:
    """Exact posterior-mean noise prediction for Gaussian data.

    Inputs and outputs are float32 (the wire dtype); internal math runs in
    float64 so in-process and remote use produce identical bits.
    """

    def __init__(self, mean: float, covariance: CovarianceSpec, schedule: NoiseSchedule):
        self.mean = float(mean)
        self.covariance = covariance
        self.schedule = schedule
        self._ar1_cache: dict[tuple[int, int], np.ndarray] = {}

    def _posterior_x0(self, x: np.ndarray, t: int) -> np.ndarray:
        abar = self.schedule.alpha_bar(t)
        sq = np.sqrt(abar)
        centered = x - sq * self.mean
        cov = self.covariance
        if isinstance(cov, IsotropicCovariance):
            gain = sq * cov.variance / (abar * cov.variance + 1.0 - abar)
            return self.mean + gain * centered
        if isinstance(cov, DiagonalCovariance):
            v = cov.variances
            if v.shape != x.shape[1:]:
                raise InvalidConfig(
                    f"diagonal covariance shape {v.shape} does not match volume {x.shape[1:]}"
                )
            gain = sq * v / (abar * v + 1.0 - abar)
            return self.mean + gain[None] * centered
        # AR(1): solve per line along the correlated axis
        n = x.shape[1 + cov.axis]
        key = (t, n)
        if key not in self._ar1_cache:
            c = cov.matrix(n)
            a = abar * c + (1.0 - abar) * np.eye(n)
            self._ar1_cache[key] = sq * c @ np.linalg.inv(a)
        b = self._ar1_cache[key]
        moved = np.moveaxis(centered, 1 + cov.axis, -1)
        solved = moved @ b.T
        return self.mean + np.moveaxis(solved, -1, 1 + cov.axis)

    def predict_noise(self, x_t: np.ndarray, t: int) -> np.ndarray:
        abar = self.schedule.alpha_bar(t)
        x = np.asarray(x_t, dtype=np.float64)
        if x.ndim != 4:
            raise InvalidConfig("expected a batched volume of shape (B, nx, ny, nz)")
        x0_hat = self._posterior_x0(x, t)
        eps = (x - np.sqrt(abar) * x0_hat) / np.sqrt(1.0 - abar)
        return eps.astype(np.float32)


def make_denoiser(spec: str, schedule: NoiseSchedule) -> Denoiser:
    """Build an in-process denoiser from a CLI spec string.

    Formats: ``zero``, ``random:<seed>``,
    ``analytic:iso:mu=<f>,var=<f>``,
    ``analytic:ar1:mu=<f>,var=<f>,rho=<f>,axis=<i>``.
    """
    parts = spec.split(":")
    if parts[0] == "zero":
        return ZeroDenoiser()
    if parts[0] == "random":
        seed = int(parts[1]) if len(parts) > 1 else 0
        return RandomDenoiser(seed)
    if parts[0] == "analytic":
        if len(parts) != 3:
            raise InvalidConfig(f"malformed analytic denoiser spec {spec!r}")
        kind = parts[1]
        kv = {}
        for item in parts[2].split(","):
            key, _, value = item.partition("=")
            if not _:
                raise InvalidConfig(f"malformed parameter {item!r} in {spec!r}")
            kv[key.strip()] = float(value)
        mu = kv.pop("mu", 0.0)
        if kind == "iso":
            cov = IsotropicCovariance(kv.pop("var", 1.0))
        elif kind == "ar1":
            cov = Ar1Covariance(
                rho=kv.pop("rho", 0.9),
                variance=kv.pop("var", 1.0),
                axis=int(kv.pop("axis", 0)),
            )
        else:
            raise InvalidConfig(f"unknown analytic covariance kind {kind!r}")
        if kv:
            raise InvalidConfig(f"unknown parameters {sorted(kv)} in {spec!r}")
        return AnalyticGaussianDenoiser(mu, cov, schedule)
    raise InvalidConfig(f"unknown denoiser spec {spec!r}")
