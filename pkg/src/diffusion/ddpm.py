"""
DDPM training objective and ancestral sampler over scenario latents.
"""

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.config import settings
from src.diffcompute import Tensor, no_tape
from src.diffcompute import ops
from src.diffusion.denoiser import Denoiser
from src.diffusion.schedule import NoiseSchedule, q_sample
from src.errors import ShapeError
from src.models.models import ScenarioLatent


@dataclass(frozen=True)
class DiffusionLoss:
    """Denoising objective split into its parts (all scalars)."""

    total: Tensor
    mse: Tensor
    penalty: Tensor


def kinematic_penalty(preview: Tensor, dt: float = settings.DT_SECONDS, a_max: float = settings.A_MAX_MPS2) -> Tensor:
    """``mean(relu(|a| - a_max)^2)`` with ``a`` from second differences of ``preview``.

    Args:
        preview: (N, P, 2) positions in metres, P >= 3.
    """
    if preview.ndim != 3 or preview.shape[1] < 3:
        return Tensor(0.0)
    second = preview[:, 2:, :] - 2.0 * preview[:, 1:-1, :] + preview[:, :-2, :]
    accel = ops.norm(second, axis=-1) / (dt * dt)
    excess = ops.relu(accel - a_max)
    return ops.mean(ops.square(excess))


def denoising_loss(eps: np.ndarray, eps_hat: Tensor, preview: Tensor, lambda_kin: float) -> DiffusionLoss:
    """Noise-regression error plus the weighted kinematic penalty on ``preview``."""
    if eps_hat.shape != np.shape(eps):
        raise ShapeError(f"eps_hat shape {eps_hat.shape} differs from eps shape {np.shape(eps)}")
    mse = ops.mean(ops.square(eps_hat - eps))
    penalty = kinematic_penalty(preview)
    total = mse + lambda_kin * penalty
    return DiffusionLoss(total=total, mse=mse, penalty=penalty)


def ddpm_loss(
    denoiser: Denoiser,
    x0: np.ndarray,
    condition: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    lambda_kin: float = settings.LAMBDA_KIN,
    t: int | None = None,
) -> DiffusionLoss:
    """Sample ``t`` and ``eps``, noise ``x0`` and score the denoiser.

    The kinematic penalty reads the linear preview of the clean latent
    reconstructed from the prediction, ``(x_t - sqrt(1 - abar) eps_hat) / sqrt(abar)``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    step = int(rng.integers(1, schedule.steps + 1)) if t is None else t
    eps = rng.standard_normal(x0.shape)
    x_t = q_sample(x0, step, eps, schedule)
    eps_hat = denoiser.predict_noise(Tensor(x_t), step, condition)
    abar = schedule.alpha_bar(step)
    x0_hat = (Tensor(x_t) - float(np.sqrt(1.0 - abar)) * eps_hat) / float(np.sqrt(abar))
    return denoising_loss(eps, eps_hat, denoiser.preview_positions(x0_hat), lambda_kin)


def run_reverse_chain(
    denoiser: Denoiser,
    condition: np.ndarray,
    schedule: NoiseSchedule,
    draws: np.ndarray,
) -> np.ndarray:
    """Ancestral sampling from pre-drawn noise.

    Args:
        draws: (T + 1, N, D_latent). ``draws[0]`` is ``x_T``; ``draws[t]`` is the
            noise ``z`` added when stepping from ``t`` to ``t - 1`` (``t >= 2``).
            ``draws[1]`` is unused because no noise is added at ``t = 1``.

    Returns:
        (N, D_latent) array ``x_0``.
    """
    draws = np.asarray(draws, dtype=np.float64)
    if draws.shape[0] != schedule.steps + 1:
        raise ShapeError(f"need {schedule.steps + 1} noise draws, got {draws.shape[0]}")
    x = draws[0]
    with no_tape():
        for t in range(schedule.steps, 0, -1):
            eps_hat = denoiser.predict_noise(Tensor(x), t, condition).data
            beta, alpha, abar = schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t)
            x = (x - beta / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)
            if t > 1:
                x = x + np.sqrt(beta) * draws[t]
    return x


def sample_scenario_latent(
    denoiser: Denoiser,
    condition: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    scene_id: str = "",
) -> ScenarioLatent:
    """Jointly sample one latent row per agent of a scene."""
    condition = np.asarray(condition, dtype=np.float64)
    draws = rng.standard_normal((schedule.steps + 1, condition.shape[0], denoiser.d_latent))
    return ScenarioLatent(scene_id=scene_id, values=run_reverse_chain(denoiser, condition, schedule, draws))


def draw_chain_noise(
    scene_id: str,
    agent_ids: Sequence[str],
    steps: int,
    d_latent: int,
    seed: int,
) -> np.ndarray:
    """(steps + 1, N, d_latent) noise keyed by scene and agent id rather than row position.

    An agent receives the same draws whatever its row, so removing or
    reordering other agents leaves its noise untouched.
    """
    scene_key = zlib.crc32(scene_id.encode("utf-8"))
    columns = []
    for agent_id in agent_ids:
        rng = np.random.default_rng([seed, scene_key, zlib.crc32(agent_id.encode("utf-8"))])
        columns.append(rng.standard_normal((steps + 1, d_latent)))
    if not columns:
        return np.zeros((steps + 1, 0, d_latent))
    return np.stack(columns, axis=1)
