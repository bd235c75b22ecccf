"""Forward/reverse diffusion and the resampled inpainting loop.

All sampler state is float32 (matching the wire dtype exactly, so remote and
in-process denoisers are interchangeable bit-for-bit); schedule coefficients
enter as Python floats, which numpy's promotion rules keep in float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .denoisers import Denoiser
from .errors import BackendError, InvalidConfig, InvalidMask, ShapeMismatch
from .schedule import NoiseSchedule
from .volume import ScalarVolume, VolumeMeta, VoxelMask


@dataclass
class RepaintConfig:
    """Resampling configuration.

    One resample is one (forward one step, redo the reverse step) pair at a
    fixed t, so ``resamples = n`` costs n extra denoiser evaluations per
    step. The last ``no_resample_tail`` steps run without resampling.
    ``jump_size`` exists for forward compatibility; only 1 is supported.
    """

    resamples: int = 10
    jump_size: int = 1
    no_resample_tail: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.resamples < 0:
            raise InvalidConfig(f"resamples must be >= 0, got {self.resamples}")
        if self.jump_size != 1:
            raise InvalidConfig("only jump_size == 1 is supported")
        if self.no_resample_tail < 0:
            raise InvalidConfig(
                f"no_resample_tail must be >= 0, got {self.no_resample_tail}"
            )


@dataclass
class InpaintProblem:
    """A fixed-size window with known voxels marked by a binary mask."""

    known: ScalarVolume
    mask: np.ndarray
    config: RepaintConfig = field(default_factory=RepaintConfig)

    def __post_init__(self):
        if isinstance(self.mask, VoxelMask):
            self.mask = self.mask.data
        self.mask = np.asarray(self.mask)
        if self.mask.shape != self.known.data.shape:
            raise ShapeMismatch(
                f"mask shape {self.mask.shape} does not match known {self.known.data.shape}"
            )
        if not np.isin(self.mask, (0, 1)).all():
            raise InvalidMask("mask values must be 0 or 1")
        self.mask = self.mask.astype(np.uint8)


def _check_eps(eps: np.ndarray, x: np.ndarray) -> np.ndarray:
    eps = np.asarray(eps)
    if eps.shape != x.shape:
        raise BackendError(
            f"denoiser returned shape {eps.shape}, expected {x.shape}"
        )
    if not np.isfinite(eps).all():
        raise BackendError("denoiser returned non-finite values")
    return eps.astype(np.float32, copy=False)


def _forward_to(x0: np.ndarray, t: int, schedule: NoiseSchedule, z: np.ndarray) -> np.ndarray:
    abar = schedule.alpha_bar(t)
    return x0 * math.sqrt(abar) + z * math.sqrt(1.0 - abar)


def _forward_one(x_prev: np.ndarray, t: int, schedule: NoiseSchedule, z: np.ndarray) -> np.ndarray:
    alpha = schedule.alpha(t)
    return x_prev * math.sqrt(alpha) + z * math.sqrt(1.0 - alpha)


def _reverse_one(
    denoiser: Denoiser,
    x: np.ndarray,
    t: int,
    schedule: NoiseSchedule,
    z: np.ndarray | None,
) -> np.ndarray:
    eps = _check_eps(denoiser.predict_noise(x, t), x)
    beta = schedule.beta(t)
    abar = schedule.alpha_bar(t)
    mean = (x - eps * (beta / math.sqrt(1.0 - abar))) * (1.0 / math.sqrt(schedule.alpha(t)))
    if t > 1:
        assert z is not None
        return mean + z * math.sqrt(beta)
    return mean


def _noise_like(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape, dtype=np.float32)


def forward_diffuse(
    x0: ScalarVolume, t: int, schedule: NoiseSchedule, rng: np.random.Generator
) -> ScalarVolume:
    """Jump straight to x_t ~ N(sqrt(abar_t) x0, (1 - abar_t) I)."""
    schedule._check_step(t)
    z = _noise_like(rng, x0.data.shape)
    return ScalarVolume(_forward_to(x0.data, t, schedule, z), x0.meta.copy())


def single_step_forward(
    x_prev: ScalarVolume, t: int, schedule: NoiseSchedule, rng: np.random.Generator
) -> ScalarVolume:
    """One noising step: x_t ~ N(sqrt(alpha_t) x_{t-1}, (1 - alpha_t) I)."""
    schedule._check_step(t)
    z = _noise_like(rng, x_prev.data.shape)
    return ScalarVolume(_forward_one(x_prev.data, t, schedule, z), x_prev.meta.copy())


def reverse_step(
    denoiser: Denoiser,
    x_t: ScalarVolume,
    t: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> ScalarVolume:
    """One denoising step with sigma_t^2 = beta_t (no noise at t = 1)."""
    schedule._check_step(t)
    x = x_t.data[None]
    z = _noise_like(rng, x.shape) if t > 1 else None
    out = _reverse_one(denoiser, x, t, schedule, z)
    return ScalarVolume(out[0], x_t.meta.copy())


def sample_unconditional_batch(
    denoiser: Denoiser,
    dims,
    schedule: NoiseSchedule,
    seed: int,
    n: int = 1,
) -> np.ndarray:
    """Run the full reverse chain from pure noise for a batch of volumes."""
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    x = _noise_like(rng, (n, *dims))
    for t in range(schedule.T, 0, -1):
        z = _noise_like(rng, x.shape) if t > 1 else None
        x = _reverse_one(denoiser, x, t, schedule, z)
    return x


def sample_unconditional(
    denoiser: Denoiser, dims, schedule: NoiseSchedule, seed: int
) -> ScalarVolume:
    x = sample_unconditional_batch(denoiser, dims, schedule, seed, n=1)[0]
    return ScalarVolume(x, VolumeMeta(provenance="diffusion", seed=int(seed)))


def repaint_batch(
    denoiser: Denoiser,
    problems: Sequence[InpaintProblem],
    schedule: NoiseSchedule,
    rngs: Sequence[np.random.Generator],
) -> list[np.ndarray]:
    """Inpaint several same-shape windows in lockstep.

    Each problem draws from its own generator, so results are independent of
    how problems are grouped into batches. Per step (T down to 1) the known
    part is re-noised to t-1, the unknown part comes from the reverse step,
    the two are composed through the mask, and (outside the no-resample
    tail) the composite is pushed forward one step and the step redone
    ``resamples`` times. The final composition at t = 1 uses the clean known
    data, so masked voxels of the result equal the input exactly.
    """
    if len(problems) == 0:
        return []
    if len(rngs) != len(problems):
        raise InvalidConfig("need exactly one RNG per problem")
    shape = problems[0].known.data.shape
    cfg = problems[0].config
    for p in problems:
        if p.known.data.shape != shape:
            raise ShapeMismatch("all problems in a batch must share dims")
        if (p.config.resamples, p.config.no_resample_tail) != (
            cfg.resamples,
            cfg.no_resample_tail,
        ):
            raise InvalidConfig("all problems in a batch must share repaint config")

    b = len(problems)
    known = np.stack([p.known.data for p in problems])
    mask = np.stack([p.mask.astype(bool) for p in problems])

    def draw() -> np.ndarray:
        return np.stack([_noise_like(rng, shape) for rng in rngs])

    x = draw()  # x_T ~ N(0, I)
    for t in range(schedule.T, 0, -1):
        n_eff = cfg.resamples if t > cfg.no_resample_tail else 0
        for r in range(n_eff + 1):
            if t - 1 == 0:
                known_prev = known
            else:
                known_prev = _forward_to(known, t - 1, schedule, draw())
            z = draw() if t > 1 else None
            unknown_prev = _reverse_one(denoiser, x, t, schedule, z)
            x_prev = np.where(mask, known_prev, unknown_prev)
            if r < n_eff:
                x = _forward_one(x_prev, t, schedule, draw())
            else:
                x = x_prev
    return [x[i] for i in range(b)]


def repaint(
    denoiser: Denoiser, problem: InpaintProblem, schedule: NoiseSchedule
) -> ScalarVolume:
    """Inpaint a single window; see :func:`repaint_batch`."""
    rng = np.random.default_rng(problem.config.seed)
    out = repaint_batch(denoiser, [problem], schedule, [rng])[0]
    meta = problem.known.meta.copy()
    meta.provenance = "diffusion"
    return ScalarVolume(out, meta)
