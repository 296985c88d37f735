"""
Total training loss: ``L = L_ddpm + L_traj + lambda_conf * L_conf``.

``L_traj`` is winner-takes-all: the mode with the lowest joint average
displacement over all predicted agents and valid future steps is the only one
regressed. ``L_conf`` is the negative log confidence of that mode.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.config import settings
from src.decoder.multimodal import DecoderOutput
from src.diffcompute import Tensor
from src.diffcompute import ops
from src.errors import ContractError, ShapeError
from src.models.models import LossComponents
from src.predictor.features import SceneFeatures
from src.predictor.model import TrajectoryModel


@dataclass(frozen=True)
class TrajectoryLoss:
    traj: Tensor
    conf: Tensor
    best_mode: int
    mode_errors: np.ndarray  # (K,) joint ADE per mode, metres


@dataclass(frozen=True)
class LossTerms:
    """Differentiable loss terms plus their float report."""

    total: Tensor
    ddpm: Tensor
    traj: Tensor
    conf: Tensor

    def components(self) -> LossComponents:
        return LossComponents(
            total=self.total.item(),
            ddpm=self.ddpm.item(),
            traj=self.traj.item(),
            conf=self.conf.item(),
        )


def trajectory_losses(output: DecoderOutput, future: np.ndarray, valid: np.ndarray) -> TrajectoryLoss:
    """Winner-takes-all regression and confidence terms.

    Args:
        output: Decoder output with positions (K, A, T, 2).
        future: (A, T, 2) ground-truth positions in metres.
        valid: (A, T) ground-truth validity.
    """
    modes, agents, steps, _ = output.positions.shape
    if np.shape(future) != (agents, steps, 2) or np.shape(valid) != (agents, steps):
        raise ShapeError(f"ground truth {np.shape(future)} does not match predictions {output.positions.shape}")
    count = int(np.count_nonzero(valid))
    if count == 0:
        zero = Tensor(0.0)
        return TrajectoryLoss(traj=zero, conf=zero, best_mode=0, mode_errors=np.zeros(modes))

    errors = ops.norm(output.positions - np.broadcast_to(future, output.positions.shape), axis=-1)
    weights = np.asarray(valid, dtype=np.float64) / count
    per_mode = ops.sum(ops.reshape(ops.multiply(errors, weights), (modes, agents * steps)), axis=1)
    best = int(np.argmin(per_mode.data))
    return TrajectoryLoss(
        traj=per_mode[best],
        conf=-output.log_confidences[best],
        best_mode=best,
        mode_errors=per_mode.numpy(),
    )


def assemble_loss(ddpm: Tensor, traj: Tensor, conf: Tensor, lambda_conf: float = settings.LAMBDA_CONF) -> LossTerms:
    return LossTerms(total=ddpm + traj + lambda_conf * conf, ddpm=ddpm, traj=traj, conf=conf)


def scene_loss(model: TrajectoryModel, features: SceneFeatures, rng: np.random.Generator) -> LossTerms:
    """Loss of one featurised scene; randomness (t, eps, latent dropout) drawn from ``rng``."""
    x0 = model.clean_latents(features)
    diffusion = model.diffusion_loss(features, x0, rng)
    latents = model.training_latents(features, x0, rng)
    _, output = model.decode(features, latents)
    wta = trajectory_losses(output, features.future[features.predicted], features.future_valid[features.predicted])
    return assemble_loss(diffusion.total, wta.traj, wta.conf, model.config.lambda_conf)


def total_loss(model: TrajectoryModel, batch: Sequence[SceneFeatures], rng: np.random.Generator) -> LossTerms:
    """Mean of the per-scene losses over ``batch``, accumulated in batch order.

    Raises:
        ContractError: If the batch is empty.
    """
    if not batch:
        raise ContractError("total_loss needs a nonempty batch")
    terms = [scene_loss(model, features, rng) for features in batch]
    scale = 1.0 / len(terms)

    def averaged(name: str) -> Tensor:
        acc = getattr(terms[0], name)
        for term in terms[1:]:
            acc = acc + getattr(term, name)
        return acc * scale

    ddpm, traj, conf = averaged("ddpm"), averaged("traj"), averaged("conf")
    return assemble_loss(ddpm, traj, conf, model.config.lambda_conf)
