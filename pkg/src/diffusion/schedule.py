"""
Linear DDPM noise schedule and the closed-form forward process.

Steps are 1-based: ``betas[t - 1]`` is beta_t and ``alpha_bar(0)`` is 1.
"""

from dataclasses import dataclass

import numpy as np

from src.errors import ConfigError, DiffusionStepError, ShapeError


@dataclass(frozen=True)
class NoiseSchedule:
    steps: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.steps:
            raise DiffusionStepError(f"diffusion step {t} outside [1, {self.steps}]")

    def beta(self, t: int) -> float:
        self.check_step(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self.check_step(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self.check_step(t)
        return float(self.alpha_bars[t - 1])


def make_schedule(steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Betas interpolated linearly from ``beta_start`` to ``beta_end``.

    Raises:
        ConfigError: Unless ``steps >= 1`` and ``0 < beta_start <= beta_end < 1``.
    """
    if steps < 1:
        raise ConfigError(f"diffusion steps must be at least 1, got {steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, steps) if steps > 1 else np.array([beta_start])
    alphas = 1.0 - betas
    return NoiseSchedule(steps=steps, betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))


def schedule_from_betas(betas: np.ndarray) -> NoiseSchedule:
    """Schedule with explicit betas (used for hand-computed cases)."""
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size == 0 or np.any(betas <= 0) or np.any(betas >= 1) or np.any(np.diff(betas) < 0):
        raise ConfigError("betas must be a nonempty nondecreasing sequence in (0, 1)")
    alphas = 1.0 - betas
    return NoiseSchedule(steps=len(betas), betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form forward marginal ``sqrt(abar_t) x0 + sqrt(1 - abar_t) eps``.

    Raises:
        DiffusionStepError: If ``t`` is outside ``[1, T]``.
        ShapeError: If ``eps`` and ``x0`` differ in shape.
    """
    schedule.check_step(t)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"eps shape {eps.shape} differs from x0 shape {x0.shape}")
    abar = schedule.alpha_bar(t)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def q_step(x_prev: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """One forward noising step ``sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps``."""
    beta = schedule.beta(t)
    return np.sqrt(1.0 - beta) * np.asarray(x_prev) + np.sqrt(beta) * np.asarray(eps)
