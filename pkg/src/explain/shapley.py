"""
Exact Shapley attribution over the four feature groups.

The value of a coalition is the error reduction it buys relative to the
empty coalition:

    v(C) = err(scene masked to nothing) - err(scene masked to C)

so v(empty) is 0 and a larger attribution means a more important group. With
four players all 16 coalitions are enumerated; sampling approximations are
never used. Diffusion noise is keyed by (seed, scene id, agent id), so every
coalition of a scene sees the same draws for a given seed. Results are
averaged over several seeds.
"""

import itertools
import math
from typing import Hashable, Mapping, Protocol, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.special import comb
from tqdm import tqdm

from src.config import settings
from src.errors import ExplainInputError, NumericalError
from src.explain.coalitions import (
    EMPTY_COALITION,
    FULL_COALITION,
    Coalition,
    all_coalitions,
    apply_coalition,
    coalition_key,
    without_element,
)
from src.metrics.displacement import min_sade, min_sfde
from src.models.models import (
    FEATURE_GROUPS,
    ElementContribution,
    FeatureGroup,
    GroundTruth,
    PredictionSet,
    Scene,
    ShapleyReport,
)
from src.scene.views import ground_truth

METRICS: tuple[str, ...] = ("minSADE", "minSFDE")
GLOBAL_SCENE_ID: str = "GLOBAL"


class Predictor(Protocol):
    """Anything that maps a scene to K joint futures of its predicted agents."""

    def predict(self, scene: Scene, seed: int | None = None) -> PredictionSet: ...


def _check_metric(metric: str) -> None:
    if metric not in METRICS:
        raise ExplainInputError(f"unknown metric {metric!r}; expected one of {list(METRICS)}")


def prediction_error(model: Predictor, scene: Scene, gt: GroundTruth, metric: str, seed: int) -> float:
    """Chosen metric of ``model`` on ``scene`` against ``gt``, in metres."""
    prediction = model.predict(scene, seed=seed)
    return min_sade(prediction, gt) if metric == "minSADE" else min_sfde(prediction, gt)


def coalition_value(model: Predictor, scene: Scene, coalition: Coalition, metric: str, seed: int) -> float:
    """Error reduction of ``coalition`` over the full baseline for one seed."""
    _check_metric(metric)
    gt = ground_truth(scene)
    baseline = prediction_error(model, apply_coalition(scene, EMPTY_COALITION), gt, metric, seed)
    if coalition == EMPTY_COALITION:
        return 0.0
    return baseline - prediction_error(model, apply_coalition(scene, coalition), gt, metric, seed)


def exact_shapley(
    values: Mapping[frozenset, float],
    players: Sequence[Hashable] = FEATURE_GROUPS,
) -> dict:
    """Shapley value of every player from a complete value table.

    The weight of a coalition C not containing player i is
    ``|C|! (p - |C| - 1)! / p!``, i.e. ``1 / (p * comb(p - 1, |C|))``; for four
    players these are 1/4, 1/12, 1/12 and 1/4 for sizes 0 to 3.

    Args:
        values: ``v(C)`` for every subset C of ``players``.
        players: The players in canonical order.

    Returns:
        Player -> attribution, in ``players`` order.

    Raises:
        ExplainInputError: If a coalition is missing or a value is not finite.
        NumericalError: If the attributions do not sum to ``v(full) - v(empty)``.
    """
    p = len(players)
    full = frozenset(players)
    for size in range(p + 1):
        for subset in _subsets(players, size):
            if subset not in values:
                raise ExplainInputError(f"value table lacks coalition {sorted(map(str, subset))}")
            if not math.isfinite(values[subset]):
                raise ExplainInputError(f"coalition {sorted(map(str, subset))} has a non-finite value")

    phi = {}
    for player in players:
        others = [q for q in players if q != player]
        total = 0.0
        for size in range(p):
            weight = 1.0 / (p * comb(p - 1, size, exact=True))
            for subset in _subsets(others, size):
                total += weight * (values[subset | {player}] - values[subset])
        phi[player] = total

    gap = sum(phi.values()) - (values[full] - values[frozenset()])
    tolerance = settings.EFFICIENCY_TOLERANCE * max(1.0, abs(values[full] - values[frozenset()]))
    if abs(gap) > tolerance:
        raise NumericalError(f"Shapley attributions miss the total value by {gap:.3e}")
    return phi


def _subsets(players: Sequence[Hashable], size: int) -> list[frozenset]:
    return [frozenset(c) for c in itertools.combinations(players, size)]


def _default_seeds() -> list[int]:
    return [settings.DEFAULT_SEED + i for i in range(settings.SHAPLEY_SEEDS)]


def scene_importance(
    model: Predictor,
    scene: Scene,
    metric: str = "minSADE",
    seeds: Sequence[int] | None = None,
    workers: int = 1,
) -> ShapleyReport:
    """Group attributions and per-element contributions for one scene.

    Every coalition and every leave-one-out scene is evaluated once per seed;
    errors are averaged over seeds before values are formed. Neighbour and
    signal elements are scored by removing them from the full scene:
    ``err(scene without e) - err(scene)``.

    Args:
        model: Predictor to explain.
        scene: Scene with at least one valid future step.
        metric: ``minSADE`` or ``minSFDE``.
        seeds: Diffusion seeds to average over.
        workers: Threads evaluating coalitions concurrently.

    Raises:
        ExplainInputError: For an unknown metric or an empty seed list.
        MetricError: If the scene has no valid future step.
    """
    _check_metric(metric)
    seeds = list(seeds) if seeds is not None else _default_seeds()
    if not seeds:
        raise ExplainInputError("at least one seed is required")
    gt = ground_truth(scene)

    coalitions = all_coalitions()
    elements = [(FeatureGroup.NEIGHBORS, t.agent_id) for t in scene.neighbor_tracks()]
    elements += [(FeatureGroup.TRAFFIC_SIGN, s.signal_id) for s in scene.signals]
    scenes = [apply_coalition(scene, c) for c in coalitions]
    scenes += [without_element(scene, group, element_id) for group, element_id in elements]

    jobs = [(masked, seed) for masked in scenes for seed in seeds]
    with Parallel(n_jobs=workers, prefer="threads") as parallel:
        errors = parallel(delayed(prediction_error)(model, masked, gt, metric, seed) for masked, seed in jobs)
    mean_errors = np.asarray(errors, dtype=np.float64).reshape(len(scenes), len(seeds)).mean(axis=1)

    by_coalition = dict(zip(coalitions, mean_errors[: len(coalitions)]))
    error_empty = float(by_coalition[EMPTY_COALITION])
    error_full = float(by_coalition[FULL_COALITION])
    values = {c: error_empty - float(err) for c, err in by_coalition.items()}
    values[EMPTY_COALITION] = 0.0
    phi = exact_shapley(values)

    contributions = [
        (group, ElementContribution(element_id, float(err) - error_full))
        for (group, element_id), err in zip(elements, mean_errors[len(coalitions) :])
    ]
    return ShapleyReport(
        scene_id=scene.scene_id,
        metric=metric,
        v_empty=0.0,
        v_full=values[FULL_COALITION],
        phi=phi,
        error_empty=error_empty,
        error_full=error_full,
        neighbor_elements=[e for g, e in contributions if g is FeatureGroup.NEIGHBORS],
        signal_elements=[e for g, e in contributions if g is FeatureGroup.TRAFFIC_SIGN],
        coalition_values={coalition_key(c): values[c] for c in coalitions},
        seeds=seeds,
    )


def explain_dataset(
    model: Predictor,
    scenes: Sequence[Scene],
    metric: str = "minSADE",
    seeds: Sequence[int] | None = None,
    workers: int = 1,
    show_progress: bool = True,
) -> list[ShapleyReport]:
    """``scene_importance`` for every scene, in dataset order."""
    return [
        scene_importance(model, scene, metric, seeds, workers)
        for scene in tqdm(scenes, desc="Explaining", disable=not show_progress)
    ]


def _element_peak(elements: list[ElementContribution]) -> float:
    return max(e.contribution for e in elements) if elements else 0.0


def aggregate_global(reports: Sequence[ShapleyReport]) -> ShapleyReport:
    """Dataset-level importance from per-scene reports.

    History and map are present in every scene, so their importance is the
    mean attribution. Neighbours and signals vary per scene: each scene
    contributes its strongest element (0 when it has none) and those peaks
    are averaged.

    Raises:
        ExplainInputError: If ``reports`` is empty or mixes metrics.
    """
    if not reports:
        raise ExplainInputError("global importance needs at least one scene report")
    metrics = {r.metric for r in reports}
    if len(metrics) != 1:
        raise ExplainInputError(f"scene reports mix metrics {sorted(metrics)}")

    phi = {
        FeatureGroup.HISTORY: float(np.mean([r.phi[FeatureGroup.HISTORY] for r in reports])),
        FeatureGroup.NEIGHBORS: float(np.mean([_element_peak(r.neighbor_elements) for r in reports])),
        FeatureGroup.TRAFFIC_SIGN: float(np.mean([_element_peak(r.signal_elements) for r in reports])),
        FeatureGroup.MAP: float(np.mean([r.phi[FeatureGroup.MAP] for r in reports])),
    }
    return ShapleyReport(
        scene_id=GLOBAL_SCENE_ID,
        metric=metrics.pop(),
        v_empty=0.0,
        v_full=float(np.mean([r.v_full for r in reports])),
        phi={group: phi[group] for group in FEATURE_GROUPS},
        error_empty=float(np.mean([r.error_empty for r in reports])),
        error_full=float(np.mean([r.error_full for r in reports])),
        seeds=list(reports[0].seeds),
    )


def global_importance(
    model: Predictor,
    scenes: Sequence[Scene],
    metric: str = "minSADE",
    seeds: Sequence[int] | None = None,
    workers: int = 1,
    show_progress: bool = True,
) -> ShapleyReport:
    """Dataset-level feature importance of ``model`` over ``scenes``."""
    return aggregate_global(explain_dataset(model, scenes, metric, seeds, workers, show_progress))
