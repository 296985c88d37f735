"""
The assembled trajectory model: future-latent encoder, conditional
denoiser, scene encoder and multimodal decoder over one parameter store.

Parameter names are grouped by component prefix (``future``, ``diffusion``,
``encoder``, ``decoder``), which is what checkpoints store and what
``freeze_diffusion`` freezes.
"""

from dataclasses import replace

import numpy as np

from src.config.train_config import TrainConfig
from src.decoder.multimodal import DecoderOutput, MultimodalDecoder
from src.diffcompute import Tensor, no_tape
from src.diffusion.ddpm import DiffusionLoss, ddpm_loss, draw_chain_noise, run_reverse_chain
from src.diffusion.denoiser import Denoiser, FutureLatentEncoder
from src.diffusion.schedule import NoiseSchedule, make_schedule
from src.encoder.scene_encoder import SceneEncoder, SceneEncoding
from src.errors import ShapeError
from src.models.models import Checkpoint, EpochMetrics, PredictionSet, ScenarioLatent, Scene
from src.nn.parameters import ParameterStore
from src.predictor.features import CONDITION_FEATURES, SceneFeatures, build_features

PREVIEW_PARAMETER: str = "diffusion.preview"
DIFFUSION_PREFIXES: tuple[str, ...] = ("future", "diffusion")


class TrajectoryModel:
    def __init__(self, config: TrainConfig) -> None:
        self.config = config
        model = config.model
        self.store = ParameterStore(np.random.default_rng(config.seed))
        self.schedule: NoiseSchedule = make_schedule(config.diffusion_steps, config.beta_start, config.beta_end)
        self.future_encoder = FutureLatentEncoder(
            self.store.child("future"), 2 * model.t_fut, model.diffusion_hidden, model.d_latent
        )
        self.denoiser = Denoiser(
            self.store.child("diffusion"),
            d_latent=model.d_latent,
            condition_dim=model.t_obs * CONDITION_FEATURES,
            hidden=model.diffusion_hidden,
            blocks=model.diffusion_blocks,
            diffusion_steps=config.diffusion_steps,
            preview_steps=model.preview_steps,
        )
        self.encoder = SceneEncoder(self.store.child("encoder"), model, config.ablation)
        self.decoder = MultimodalDecoder(self.store.child("decoder"), model, config.decoder)

        # The preview map only shapes the kinematic penalty; it is never trained.
        self.store.freeze(PREVIEW_PARAMETER)
        if config.freeze_diffusion:
            for prefix in DIFFUSION_PREFIXES:
                self.store.freeze(prefix)

    # ------------------------------------------------------------------
    # Building blocks
    # ------------------------------------------------------------------

    def featurize(self, scene: Scene) -> SceneFeatures:
        """Featurise ``scene`` after checking its horizons match the model.

        Raises:
            ShapeError: If the scene's horizons differ from the model's.
        """
        model = self.config.model
        if (scene.t_obs, scene.t_fut) != (model.t_obs, model.t_fut):
            raise ShapeError(
                f"scene {scene.scene_id} has horizons ({scene.t_obs}, {scene.t_fut}), "
                f"model expects ({model.t_obs}, {model.t_fut})"
            )
        return build_features(scene, model.points_per_polyline)

    def clean_latents(self, features: SceneFeatures) -> Tensor:
        """Diffusion target x0: (N, D_latent) embedding of every agent's future."""
        return self.future_encoder(features.future_offsets())

    def diffusion_loss(self, features: SceneFeatures, x0: Tensor, rng: np.random.Generator) -> DiffusionLoss:
        return ddpm_loss(self.denoiser, x0.data, features.condition(), self.schedule, rng, self.config.lambda_kin)

    def training_latents(self, features: SceneFeatures, x0: Tensor, rng: np.random.Generator) -> Tensor:
        """Latents fed to the encoder while training.

        With probability ``latent_dropout`` the clean latents are replaced by a
        prior draw so the decoder also learns to work from sampled latents.
        """
        if rng.random() < self.config.latent_dropout:
            return Tensor(rng.standard_normal(x0.shape))
        return x0

    def decode(self, features: SceneFeatures, latents: Tensor | np.ndarray) -> tuple[SceneEncoding, DecoderOutput]:
        encoding = self.encoder.encode(features, latents)
        output = self.decoder(encoding, features.last_position[features.predicted])
        return encoding, output

    # ------------------------------------------------------------------
    # Inference
    # ------------------------------------------------------------------

    def sample_latents(self, features: SceneFeatures, seed: int) -> ScenarioLatent:
        """Jointly sample the scene's latents with noise keyed by scene and agent id."""
        draws = draw_chain_noise(
            features.scene_id, features.agent_ids, self.schedule.steps, self.config.model.d_latent, seed
        )
        values = run_reverse_chain(self.denoiser, features.condition(), self.schedule, draws)
        return ScenarioLatent(scene_id=features.scene_id, values=values)

    def predict(self, scene: Scene, seed: int | None = None) -> PredictionSet:
        """K joint futures for the scene's predicted agents."""
        features = self.featurize(scene)
        latent = self.sample_latents(features, self.config.seed if seed is None else seed)
        with no_tape():
            encoding, output = self.decode(features, latent.values)
        return PredictionSet(
            scene_id=scene.scene_id,
            agent_ids=encoding.agent_ids,
            trajectories=output.positions.numpy(),
            confidences=output.confidences,
        )

    # ------------------------------------------------------------------
    # Checkpoints
    # ------------------------------------------------------------------

    def to_checkpoint(self, epoch: int = 0, history: list[EpochMetrics] | None = None) -> Checkpoint:
        return Checkpoint(
            parameters=self.store.state_dict(),
            config=self.config.to_dict(),
            epoch=epoch,
            history=list(history or []),
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, freeze_diffusion: bool | None = None) -> "TrajectoryModel":
        """Rebuild the model a checkpoint was saved from and load its parameters."""
        config = TrainConfig.from_dict(checkpoint.config)
        if freeze_diffusion is not None:
            config = replace(config, freeze_diffusion=freeze_diffusion)
        model = cls(config)
        model.store.load_state_dict(checkpoint.parameters)
        return model
