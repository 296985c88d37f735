"""
Scene-level joint displacement metrics.

One mode covers every predicted agent of a scene at once: per-mode errors are
averaged over agents (and valid steps) before the minimum over modes is
taken. Only steps marked valid in the ground truth count.
"""

from typing import Sequence

import numpy as np

from src.errors import MetricError, ShapeError
from src.models.models import GroundTruth, PredictionSet


def _distances(pred: PredictionSet, gt: GroundTruth) -> np.ndarray:
    """(K, A, T) Euclidean distance of every mode to the ground truth."""
    if pred.trajectories.shape[1:] != gt.positions.shape:
        raise ShapeError(
            f"scene {gt.scene_id}: predictions {pred.trajectories.shape} do not match ground truth {gt.positions.shape}"
        )
    return np.linalg.norm(pred.trajectories - gt.positions[None], axis=-1)


def _require_valid(gt: GroundTruth) -> None:
    if not gt.valid.any():
        raise MetricError(f"scene {gt.scene_id} has no valid future step")


def mode_ade(pred: PredictionSet, gt: GroundTruth) -> np.ndarray:
    """(K,) joint average displacement per mode over all valid (agent, step) pairs."""
    _require_valid(gt)
    dist = _distances(pred, gt)
    return (dist * gt.valid).sum(axis=(1, 2)) / np.count_nonzero(gt.valid)


def final_displacements(pred: PredictionSet, gt: GroundTruth) -> np.ndarray:
    """(K, A') displacement at each agent's last valid step; agents without one are dropped."""
    _require_valid(gt)
    dist = _distances(pred, gt)
    has_valid = gt.valid.any(axis=1)
    last = gt.valid.shape[1] - 1 - np.argmax(gt.valid[:, ::-1], axis=1)
    agents = np.flatnonzero(has_valid)
    return dist[:, agents, last[agents]]


def min_sade(pred: PredictionSet, gt: GroundTruth) -> float:
    """Minimum over modes of the joint average displacement (metres).

    Raises:
        MetricError: If the scene has no valid future step.
    """
    return float(mode_ade(pred, gt).min())


def min_sfde(pred: PredictionSet, gt: GroundTruth) -> float:
    """Minimum over modes of the agent-averaged final displacement (metres)."""
    return float(final_displacements(pred, gt).mean(axis=1).min())


def scene_miss(pred: PredictionSet, gt: GroundTruth, threshold: float) -> tuple[bool, int]:
    """Whether even the best mode misses, and that mode.

    The best mode minimises the largest per-agent final displacement; the
    scene is a miss when that value exceeds ``threshold``.
    """
    worst_agent = final_displacements(pred, gt).max(axis=1)
    best = int(np.argmin(worst_agent))
    return bool(worst_agent[best] > threshold), best


def mode_hits(pred: PredictionSet, gt: GroundTruth, threshold: float) -> np.ndarray:
    """(K,) hit flags: only the best mode can hit, and only if it is within threshold."""
    missed, best = scene_miss(pred, gt, threshold)
    hits = np.zeros(pred.num_modes, dtype=bool)
    hits[best] = not missed
    return hits


def smr(pairs: Sequence[tuple[PredictionSet, GroundTruth]], threshold: float) -> float:
    """Fraction of scenes missed at ``threshold`` metres.

    Raises:
        MetricError: If ``threshold`` is not positive or there are no scenes.
    """
    if threshold <= 0:
        raise MetricError(f"miss threshold must be positive, got {threshold}")
    if not pairs:
        raise MetricError("miss rate needs at least one scene")
    misses = [scene_miss(pred, gt, threshold)[0] for pred, gt in pairs]
    return float(np.mean(misses))


def map_metric(entries: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """Average precision of confidence-ranked modes pooled across scenes.

    Args:
        entries: Per scene, ``(confidences (K,), hits (K,))``.

    Every scene holds one ground truth, so recall is measured against the
    number of scenes. Modes are ranked by descending confidence; equal
    confidences keep scene order, then mode order. Precision is summed at
    each hit (step interpolation of the precision-recall curve).

    Raises:
        MetricError: If ``entries`` is empty.
    """
    if not entries:
        raise MetricError("mAP needs at least one scene")
    confidences = np.concatenate([np.asarray(c, dtype=np.float64).ravel() for c, _ in entries])
    hits = np.concatenate([np.asarray(h, dtype=bool).ravel() for _, h in entries])
    if confidences.shape != hits.shape:
        raise ShapeError("confidences and hit flags differ in length")
    order = np.argsort(-confidences, kind="stable")
    ranked = hits[order]
    if not ranked.any():
        return 0.0
    true_positives = np.cumsum(ranked)
    precision = true_positives / np.arange(1, len(ranked) + 1)
    return float(precision[ranked].sum() / len(entries))
