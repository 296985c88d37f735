"""
End-to-end training loop.

Scenes are visited in dataset order in fixed-size batches; every random draw
(diffusion step, noise, latent dropout) comes from one generator seeded by
the config, so a (config, dataset) pair fully determines the checkpoint.
"""

import math
from typing import Sequence

import numpy as np
from tqdm import tqdm

from src.config.train_config import TrainConfig
from src.diffcompute import ComputationTape
from src.errors import ContractError, DatasetError, MetricError, NumericalError, TrainingDivergedError
from src.metrics.report import evaluate_predictions
from src.models.models import Checkpoint, EpochMetrics, LossComponents, Scene
from src.predictor.features import SceneFeatures
from src.predictor.model import TrajectoryModel
from src.training.losses import total_loss
from src.training.optimizer import Adam, clip_global_norm, first_non_finite


def dataset_horizons(scenes: Sequence[Scene]) -> tuple[int, int]:
    """Shared ``(t_obs, t_fut)`` of a dataset.

    Raises:
        DatasetError: If the dataset is empty or its scenes disagree on their horizons.
    """
    horizons = {(scene.t_obs, scene.t_fut) for scene in scenes}
    if not horizons:
        raise DatasetError("dataset holds no scene")
    if len(horizons) != 1:
        raise DatasetError(f"scenes mix horizons {sorted(horizons)}")
    return horizons.pop()


class Trainer:
    """Trains a TrajectoryModel and reports one EpochMetrics row per epoch."""

    def __init__(self, config: TrainConfig, show_progress: bool = True) -> None:
        self.config = config
        self.show_progress = show_progress
        self.model: TrajectoryModel | None = None
        self.history: list[EpochMetrics] = []
        self.steps_taken = 0

    def train(self, scenes: Sequence[Scene], validation: Sequence[Scene] | None = None) -> Checkpoint:
        """Train on ``scenes`` and return the final checkpoint.

        Args:
            scenes: Training dataset, visited in the given order.
            validation: Scenes for minSADE/minSFDE after each evaluated epoch;
                defaults to the training scenes.

        Raises:
            ContractError: If ``scenes`` is empty.
            TrainingDivergedError: Naming the loss component, forward operation
                or parameter gradient that became non-finite.
        """
        if not scenes:
            raise ContractError("training needs a nonempty dataset")
        config = self.config.with_horizons(*dataset_horizons(scenes))
        self.config = config
        model = TrajectoryModel(config)
        self.model = model
        features = [model.featurize(scene) for scene in scenes]
        validation = list(validation) if validation else list(scenes)
        rng = np.random.default_rng([config.seed, 1])
        optimizer = Adam(model.store.trainable(), config.learning_rate)
        batches = [features[i : i + config.batch_size] for i in range(0, len(features), config.batch_size)]
        self.history = []
        self.steps_taken = 0

        print(
            f"🚀 Training on {len(scenes)} scene(s): {config.epochs} epoch(s), "
            f"{len(batches)} batch(es) per epoch, {model.store.num_values()} parameters"
        )
        epoch = 0
        for epoch in range(1, config.epochs + 1):
            sums = {"ddpm": 0.0, "traj": 0.0, "conf": 0.0}
            done = 0
            progress = tqdm(
                batches, desc=f"Epoch {epoch}/{config.epochs}", leave=False, disable=not self.show_progress
            )
            for batch in progress:
                components = self._step(model, optimizer, batch, rng)
                for name in sums:
                    sums[name] += getattr(components, name)
                done += 1
                progress.set_postfix(loss=f"{components.total:.4f}")
                if config.max_steps and self.steps_taken >= config.max_steps:
                    break

            row = EpochMetrics(
                epoch=epoch,
                l_ddpm=sums["ddpm"] / done,
                l_traj=sums["traj"] / done,
                l_conf=sums["conf"] / done,
            )
            last_epoch = epoch == config.epochs or bool(config.max_steps and self.steps_taken >= config.max_steps)
            if epoch % config.eval_every == 0 or last_epoch:
                row.min_sade_val, row.min_sfde_val = self.validate(model, validation)
            self.history.append(row)
            print(
                f"📈 Epoch {epoch}/{config.epochs}  L_ddpm={row.l_ddpm:.4f}  L_traj={row.l_traj:.4f}  "
                f"L_conf={row.l_conf:.4f}  minSADE_val={row.min_sade_val:.3f}  minSFDE_val={row.min_sfde_val:.3f}"
            )
            if last_epoch:
                break

        print(f"✅ Training finished after {self.steps_taken} step(s)")
        return model.to_checkpoint(epoch=epoch, history=self.history)

    def _step(
        self,
        model: TrajectoryModel,
        optimizer: Adam,
        batch: list[SceneFeatures],
        rng: np.random.Generator,
    ) -> LossComponents:
        step = self.steps_taken + 1
        try:
            with ComputationTape() as tape:
                terms = total_loss(model, batch, rng)
        except NumericalError as error:
            raise TrainingDivergedError(f"forward pass ({error})", step) from error
        components = terms.components()
        for name, value in (("L_ddpm", components.ddpm), ("L_traj", components.traj), ("L_conf", components.conf)):
            if not math.isfinite(value):
                raise TrainingDivergedError(name, step)

        grads = tape.backward(terms.total).for_parameters(optimizer.params)
        bad = first_non_finite(grads)
        if bad is not None:
            raise TrainingDivergedError(f"gradient of {bad}", step)
        grads, _ = clip_global_norm(grads, self.config.grad_clip_norm)
        optimizer.step(grads)
        self.steps_taken = step
        return components

    def validate(self, model: TrajectoryModel, scenes: Sequence[Scene]) -> tuple[float, float]:
        """(minSADE, minSFDE) of sampled predictions; NaN when no scene can be scored."""
        predictions = [model.predict(scene, seed=self.config.seed) for scene in scenes]
        try:
            report = evaluate_predictions(predictions, scenes, self.config.miss_threshold)
        except MetricError:
            return float("nan"), float("nan")
        return report.min_sade, report.min_sfde


def train(config: TrainConfig, scenes: Sequence[Scene], show_progress: bool = True) -> Checkpoint:
    return Trainer(config, show_progress=show_progress).train(scenes)
