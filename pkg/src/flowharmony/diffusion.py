"""Deterministic denoising loop with trajectory-consistency guidance.

The sampler is the standard deterministic (eta = 0) update over a strictly
decreasing cumulative-signal schedule.  At every step the per-frame model
prediction is blended, with weight w, against a harmonized counterpart
computed in sample space, score space, or through an autoencoder round-trip
for latent-space models.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from .coding import EncodedFrames, decode
from .errors import ConfigError, ShapeMismatchError
from .harmonization import (
    SmoothingKernel,
    build_inverse_repository,
    harmonize_global,
    harmonize_local,
)

SAMPLE_SPACE = "sample_space"
SCORE_SPACE = "score_space"
LATENT = "latent"
MODES = (SAMPLE_SPACE, SCORE_SPACE, LATENT)


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal levels alpha_bar[t] for t in 0..T.

    alpha_bar[0] == 1 exactly, strictly decreasing, alpha_bar[T] > 0.
    """

    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.shape[0] < 2:
            raise ConfigError("alpha_bar must be a 1D array of length T+1")
        if ab[0] != 1.0:
            raise ConfigError("alpha_bar[0] must be exactly 1")
        if ab[-1] <= 0.0:
            raise ConfigError("alpha_bar[T] must be positive")
        if np.any(np.diff(ab) >= 0):
            raise ConfigError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def T(self):
        return self.alpha_bar.shape[0] - 1

    @classmethod
    def linear(cls, steps=1000, beta_start=1e-4, beta_end=2e-2):
        """Linear variance ramp; the conventional default schedule."""
        betas = np.linspace(beta_start, beta_end, steps)
        ab = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return cls(alpha_bar=ab)

    def _check_t(self, t):
        if not 0 <= t <= self.T:
            raise ConfigError(f"step {t} outside [0, {self.T}]")
        return self.alpha_bar[t]


@dataclass(frozen=True)
class GuidanceConfig:
    w: float = 0.8
    mode: str = SAMPLE_SPACE
    harmonizer: str = "global"
    kernel: Optional[SmoothingKernel] = None
    steps: int = 20
    start_fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ConfigError(f"w must be in [0, 1], got {self.w}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.harmonizer not in ("global", "local"):
            raise ConfigError(f"harmonizer must be global or local, got {self.harmonizer!r}")
        if self.harmonizer == "local" and self.kernel is None:
            raise ConfigError("local harmonizer requires a kernel")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 < self.start_fraction <= 1.0:
            raise ConfigError(
                f"start_fraction must be in (0, 1], got {self.start_fraction}"
            )


class ScoreModelInterface(Protocol):
    def evaluate(self, x_t: np.ndarray, t: int, conditioning=None) -> np.ndarray: ...


class AutoencoderInterface(Protocol):
    scale: int

    def encode(self, x: np.ndarray) -> np.ndarray: ...

    def decode(self, z: np.ndarray) -> np.ndarray: ...


def add_noise(x0, t, sched: NoiseSchedule, eps):
    """Noisy sample at step t: sqrt(ab)*x0 + sqrt(1-ab)*eps."""
    ab = sched._check_t(t)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeMismatchError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def predict_x0(x_t, eps, t, sched: NoiseSchedule):
    """Clean-sample estimate (x_t - sqrt(1-ab)*eps) / sqrt(ab)."""
    ab = sched._check_t(t)
    return (np.asarray(x_t, dtype=np.float64)
            - math.sqrt(1.0 - ab) * np.asarray(eps, dtype=np.float64)) / math.sqrt(ab)


def eps_from_x0(x_t, x0, t, sched: NoiseSchedule):
    """Noise estimate (x_t - sqrt(ab)*x0) / sqrt(1-ab); undefined at t=0."""
    ab = sched._check_t(t)
    if ab >= 1.0:
        raise ConfigError("noise estimate undefined at a zero-noise step")
    return (np.asarray(x_t, dtype=np.float64)
            - math.sqrt(ab) * np.asarray(x0, dtype=np.float64)) / math.sqrt(1.0 - ab)


def _check_blend(a, b, w):
    if not 0.0 <= w <= 1.0:
        raise ConfigError(f"w must be in [0, 1], got {w}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def guide_sample_space(x_pred, x_harm, w):
    """Interpolate a sample toward its harmonized counterpart."""
    x_pred, x_harm = _check_blend(x_pred, x_harm, w)
    return (1.0 - w) * x_pred + w * x_harm


def guide_score_space(eps_pred, eps_harm, w):
    """Interpolate a noise prediction toward its harmonized counterpart."""
    eps_pred, eps_harm = _check_blend(eps_pred, eps_harm, w)
    return (1.0 - w) * eps_pred + w * eps_harm


def ddim_step(x_t, eps, t, t_prev, sched: NoiseSchedule):
    """Deterministic update from step t to t_prev (< t)."""
    if not t_prev < t:
        raise ConfigError(f"t_prev {t_prev} must be < t {t}")
    ab_prev = sched._check_t(t_prev)
    x0 = predict_x0(x_t, eps, t, sched)
    return math.sqrt(ab_prev) * x0 + math.sqrt(1.0 - ab_prev) * np.asarray(eps, dtype=np.float64)


def make_harmonizer(enc: EncodedFrames, harmonizer="global",
                    kernel: Optional[SmoothingKernel] = None) -> Callable:
    """Return a video -> video callable applying the selected harmonizer."""
    if harmonizer == "global":
        return lambda x: harmonize_global(x, enc)[0]
    if harmonizer == "local":
        if kernel is None:
            raise ConfigError("local harmonizer requires a kernel")
        inv = build_inverse_repository(enc)
        return lambda x: harmonize_local(x, inv, kernel)
    raise ConfigError(f"unknown harmonizer {harmonizer!r}")


def harmonized_eps_latent(x_t, eps_pred, t, sched: NoiseSchedule,
                          ae: AutoencoderInterface, enc: EncodedFrames,
                          harmonizer: Callable):
    """Harmonized noise prediction for a latent-space model.

    The clean-sample estimate is decoded to observation space, harmonized
    there, re-encoded, and converted back to a noise prediction.
    """
    ab = sched._check_t(t)
    if not 0.0 < ab < 1.0:
        raise ConfigError("latent harmonization requires 0 < alpha_bar[t] < 1")
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = predict_x0(x_t, eps_pred, t, sched)
    decoded = ae.decode(x0_hat)
    harmonized = harmonizer(decoded)
    x0_harm = ae.encode(harmonized)
    if x0_harm.shape != x_t.shape:
        raise ShapeMismatchError(
            f"autoencoder round-trip changed shape: {x0_harm.shape} vs {x_t.shape}"
        )
    return eps_from_x0(x_t, x0_harm, t, sched)


def pure_noise(shape, seed):
    """Seeded standard-normal init tensor."""
    return np.random.default_rng(seed).standard_normal(shape)


def sdedit_init(video, sched: NoiseSchedule, start_fraction, seed):
    """Partially noised source video for editing-style runs."""
    t_start = math.ceil(start_fraction * sched.T)
    eps = pure_noise(np.asarray(video).shape, seed)
    return add_noise(video, t_start, sched, eps)


def timestep_sequence(sched: NoiseSchedule, steps, start_fraction):
    """Uniformly strided steps from ceil(start_fraction * T) down to 0."""
    t_start = math.ceil(start_fraction * sched.T)
    ts = np.unique(np.round(np.linspace(0, t_start, steps + 1)).astype(int))[::-1]
    if ts[0] != t_start or ts[-1] != 0:
        raise ConfigError("degenerate timestep sequence")
    return ts


def generate(model: ScoreModelInterface, enc: EncodedFrames, cfg: GuidanceConfig,
             sched: NoiseSchedule, init, seed=0, ae: Optional[AutoencoderInterface] = None,
             conditioning=None):
    """Run the guided denoising loop and return the observation-space video.

    `init` is the starting tensor at step ceil(start_fraction * T): pure noise
    for generation from scratch, or a partially noised source video.  For
    latent mode, `init` lives in latent space and `ae` must be provided; the
    result is decoded before returning.
    """
    if cfg.mode == LATENT and ae is None:
        raise ConfigError("latent mode requires an autoencoder")
    harm = make_harmonizer(enc, cfg.harmonizer, cfg.kernel)
    ts = timestep_sequence(sched, cfg.steps, cfg.start_fraction)
    x = np.asarray(init, dtype=np.float64)
    for t, t_prev in zip(ts[:-1], ts[1:]):
        eps = np.asarray(model.evaluate(x, int(t), conditioning), dtype=np.float64)
        if eps.shape != x.shape:
            raise ShapeMismatchError("model output shape differs from input")
        if cfg.mode == SCORE_SPACE:
            eps = guide_score_space(eps, harm(eps), cfg.w)
        elif cfg.mode == LATENT:
            eps_harm = harmonized_eps_latent(x, eps, int(t), sched, ae, enc, harm)
            eps = guide_score_space(eps, eps_harm, cfg.w)
        x = ddim_step(x, eps, int(t), int(t_prev), sched)
        if cfg.mode == SAMPLE_SPACE:
            x = guide_sample_space(x, harm(x), cfg.w)
    if cfg.mode == LATENT:
        return ae.decode(x)
    return x


@dataclass
class ExactNoiseOracle:
    """Score model that knows the target video: its noise prediction is the
    exact residual between the current sample and the noised target."""

    target: np.ndarray
    sched: NoiseSchedule

    def evaluate(self, x_t, t, conditioning=None):
        ab = self.sched._check_t(t)
        if ab >= 1.0:
            return np.zeros_like(x_t)
        return (x_t - math.sqrt(ab) * self.target) / math.sqrt(1.0 - ab)


@dataclass
class NoisyOracle:
    """Exact-noise oracle plus a seeded per-step perturbation, incoherent
    across frames, standing in for frame-wise model disagreement."""

    target: np.ndarray
    sched: NoiseSchedule
    noise_scale: float = 0.5
    seed: int = 0

    def evaluate(self, x_t, t, conditioning=None):
        ab = self.sched._check_t(t)
        if ab >= 1.0:
            return np.zeros_like(x_t)
        base = (x_t - math.sqrt(ab) * self.target) / math.sqrt(1.0 - ab)
        rng = np.random.default_rng((self.seed, int(t)))
        return base + self.noise_scale * rng.standard_normal(x_t.shape)


class IdentityAutoencoder:
    """Observation space == latent space; scale 1."""

    scale = 1

    def encode(self, x):
        return np.asarray(x, dtype=np.float64)

    def decode(self, z):
        return np.asarray(z, dtype=np.float64)


class AvgPoolAutoencoder:
    """2x average-pool encoder with nearest-neighbor decoder."""

    scale = 2

    def encode(self, x):
        x = np.asarray(x, dtype=np.float64)
        t, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeMismatchError("spatial dims must be even for 2x pooling")
        return x.reshape(t, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def decode(self, z):
        z = np.asarray(z, dtype=np.float64)
        return z.repeat(2, axis=2).repeat(2, axis=3)
