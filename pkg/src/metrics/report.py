"""
Dataset evaluation: pairs predictions with scenes and builds a MetricReport.
"""

from typing import Sequence

import numpy as np

from src.config import settings
from src.errors import MetricError, PredictionMismatchError
from src.metrics.displacement import map_metric, min_sade, min_sfde, mode_ade, mode_hits, scene_miss
from src.models.models import MetricReport, PredictionSet, Scene, SceneMetrics
from src.scene.views import ground_truth


def pair_predictions(
    predictions: Sequence[PredictionSet], scenes: Sequence[Scene]
) -> list[tuple[Scene, PredictionSet]]:
    """Match predictions to scenes by id, in scene order.

    Raises:
        PredictionMismatchError: Naming the first prediction without a scene,
            scene without a prediction, or scene whose agents differ.
    """
    by_scene = {scene.scene_id: scene for scene in scenes}
    by_prediction: dict[str, PredictionSet] = {}
    for pred in predictions:
        if pred.scene_id not in by_scene:
            raise PredictionMismatchError(f"{pred.scene_id}: prediction has no matching scene")
        if pred.scene_id in by_prediction:
            raise PredictionMismatchError(f"{pred.scene_id}: scene predicted more than once")
        by_prediction[pred.scene_id] = pred

    pairs = []
    for scene in scenes:
        pred = by_prediction.get(scene.scene_id)
        if pred is None:
            raise PredictionMismatchError(f"{scene.scene_id}: scene has no prediction")
        expected = scene.predicted_agent_ids()
        if tuple(pred.agent_ids) != expected:
            raise PredictionMismatchError(
                f"{scene.scene_id}: predicted agents {list(pred.agent_ids)} differ from {list(expected)}"
            )
        if pred.trajectories.shape[2] != scene.t_fut:
            raise PredictionMismatchError(
                f"{scene.scene_id}: predictions cover {pred.trajectories.shape[2]} steps, scene has {scene.t_fut}"
            )
        pairs.append((scene, pred))
    return pairs


def evaluate_predictions(
    predictions: Sequence[PredictionSet],
    scenes: Sequence[Scene],
    miss_threshold: float = settings.MISS_THRESHOLD_M,
) -> MetricReport:
    """Joint metrics over a dataset.

    Scenes without any valid future step are excluded and listed in the
    report instead of failing the run.

    Raises:
        PredictionMismatchError: If predictions and scenes do not line up.
        MetricError: If the threshold is not positive or every scene is excluded.
    """
    if miss_threshold <= 0:
        raise MetricError(f"miss threshold must be positive, got {miss_threshold}")
    rows: list[SceneMetrics] = []
    excluded: list[str] = []
    ranking: list[tuple[np.ndarray, np.ndarray]] = []

    for scene, pred in pair_predictions(predictions, scenes):
        gt = ground_truth(scene)
        if not gt.valid.any():
            excluded.append(scene.scene_id)
            continue
        missed, _ = scene_miss(pred, gt, miss_threshold)
        rows.append(
            SceneMetrics(
                scene_id=scene.scene_id,
                min_sade=min_sade(pred, gt),
                min_sfde=min_sfde(pred, gt),
                missed=missed,
                best_mode=int(np.argmin(mode_ade(pred, gt))),
            )
        )
        ranking.append((pred.confidences, mode_hits(pred, gt, miss_threshold)))

    if not rows:
        raise MetricError("no scene has a valid future step")
    return MetricReport(
        min_sade=float(np.mean([r.min_sade for r in rows])),
        min_sfde=float(np.mean([r.min_sfde for r in rows])),
        smr=float(np.mean([r.missed for r in rows])),
        map_score=map_metric(ranking),
        miss_threshold=miss_threshold,
        scenes=rows,
        excluded=excluded,
    )
