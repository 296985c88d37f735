"""
Ablation grids for the scene encoder and the trajectory decoder.

Each row trains a fresh model from the same base configuration and seed with
one structural change, then evaluates it on the same scenes. Masks only
remove computation, so every row produces predictions of identical shape.
"""

from dataclasses import dataclass, replace
from typing import Sequence

from tqdm import tqdm

from src.config.train_config import AblationMask, DecoderConfig, TrainConfig
from src.errors import ConfigError
from src.metrics.report import evaluate_predictions
from src.models.models import Scene
from src.predictor.model import TrajectoryModel
from src.training.trainer import Trainer

ENCODER_GRID: tuple[tuple[str, AblationMask], ...] = (
    ("without_st_attention", AblationMask(spatial_temporal_attention=False)),
    ("without_social_former", AblationMask(social_former=False)),
    ("without_map_former", AblationMask(map_former=False)),
    ("without_sign_former", AblationMask(sign_former=False)),
    ("full", AblationMask()),
)

DECODER_GRID: tuple[tuple[str, DecoderConfig], ...] = (
    ("gru_only", DecoderConfig(head="none", head_layers=1, use_gru=True)),
    ("kan2_without_gru", DecoderConfig(head="kan", head_layers=2, use_gru=False)),
    ("mlp1_gru", DecoderConfig(head="mlp", head_layers=1, use_gru=True)),
    ("mlp2_gru", DecoderConfig(head="mlp", head_layers=2, use_gru=True)),
    ("kan1_gru", DecoderConfig(head="kan", head_layers=1, use_gru=True)),
    ("kan2_gru", DecoderConfig(head="kan", head_layers=2, use_gru=True)),
)

GRIDS: tuple[str, ...] = ("encoder", "decoder", "all")


@dataclass(frozen=True)
class AblationRow:
    grid: str
    name: str
    spatial_temporal_attention: bool
    social_former: bool
    map_former: bool
    sign_former: bool
    decoder_head: str
    decoder_layers: int
    use_gru: bool
    min_sade: float
    min_sfde: float
    smr: float
    map_score: float
    l_ddpm: float
    l_traj: float
    l_conf: float


def grid_configs(grid: str, base: TrainConfig) -> list[tuple[str, str, TrainConfig]]:
    """``(grid, row name, config)`` for every row of ``grid``.

    Raises:
        ConfigError: For an unknown grid name.
    """
    if grid not in GRIDS:
        raise ConfigError(f"unknown ablation grid {grid!r}; expected one of {list(GRIDS)}")
    rows: list[tuple[str, str, TrainConfig]] = []
    if grid in ("encoder", "all"):
        rows += [("encoder", name, replace(base, ablation=mask)) for name, mask in ENCODER_GRID]
    if grid in ("decoder", "all"):
        rows += [("decoder", name, replace(base, decoder=decoder)) for name, decoder in DECODER_GRID]
    return rows


def run_ablation(
    grid: str,
    base: TrainConfig,
    train_scenes: Sequence[Scene],
    eval_scenes: Sequence[Scene] | None = None,
    show_progress: bool = True,
) -> list[AblationRow]:
    """Train and evaluate every configuration of ``grid``."""
    eval_scenes = list(eval_scenes) if eval_scenes else list(train_scenes)
    results: list[AblationRow] = []
    for grid_name, name, config in tqdm(grid_configs(grid, base), desc="Ablation", disable=not show_progress):
        print(f"🧪 Ablation row {grid_name}/{name}")
        trainer = Trainer(config, show_progress=False)
        checkpoint = trainer.train(train_scenes)
        model = TrajectoryModel.from_checkpoint(checkpoint)
        predictions = [model.predict(scene, seed=config.seed) for scene in eval_scenes]
        report = evaluate_predictions(predictions, eval_scenes, config.miss_threshold)
        last = checkpoint.history[-1]
        trained = trainer.config
        results.append(
            AblationRow(
                grid=grid_name,
                name=name,
                spatial_temporal_attention=trained.ablation.spatial_temporal_attention,
                social_former=trained.ablation.social_former,
                map_former=trained.ablation.map_former,
                sign_former=trained.ablation.sign_former,
                decoder_head=trained.decoder.head,
                decoder_layers=trained.decoder.head_layers,
                use_gru=trained.decoder.use_gru,
                min_sade=report.min_sade,
                min_sfde=report.min_sfde,
                smr=report.smr,
                map_score=report.map_score,
                l_ddpm=last.l_ddpm,
                l_traj=last.l_traj,
                l_conf=last.l_conf,
            )
        )
    return results
