from dataclasses import replace

import numpy as np
import pytest

from src.errors import MetricError, PredictionMismatchError, ShapeError
from src.metrics.displacement import final_displacements, map_metric, min_sade, min_sfde, mode_hits, scene_miss, smr
from src.metrics.report import evaluate_predictions, pair_predictions
from src.models.models import AgentState, PredictionSet
from tests.builders import line_scene, prediction, truth


def _offset_modes(offsets, agents: int = 1, steps: int = 3) -> np.ndarray:
    """(K, A, T, 2) modes that sit ``offsets[k]`` metres above the origin."""
    modes = np.zeros((len(offsets), agents, steps, 2))
    for k, offset in enumerate(offsets):
        modes[k, ..., 1] = offset
    return modes


class TestDisplacement:
    def test_constant_offset(self):
        pred = prediction(np.full((1, 1, 3, 2), [3.0, 4.0]))
        gt = truth(np.zeros((1, 3, 2)))
        assert min_sade(pred, gt) == pytest.approx(5.0)
        assert min_sfde(pred, gt) == pytest.approx(5.0)

    def test_best_mode_wins(self):
        pred, gt = prediction(_offset_modes([2.0, 1.0])), truth(np.zeros((1, 3, 2)))
        assert min_sade(pred, gt) == pytest.approx(1.0)
        assert min_sfde(pred, gt) == pytest.approx(1.0)

    def test_only_the_final_step_counts_for_sfde(self):
        modes = np.zeros((1, 1, 2, 2))
        modes[0, 0, 1] = [0.0, 2.0]
        pred, gt = prediction(modes), truth(np.zeros((1, 2, 2)))
        assert min_sfde(pred, gt) == pytest.approx(2.0)
        assert min_sade(pred, gt) == pytest.approx(1.0)

    def test_final_displacement_is_averaged_over_agents(self):
        modes = np.zeros((1, 2, 2, 2))
        modes[0, 0, -1] = [1.0, 0.0]
        modes[0, 1, -1] = [0.0, 3.0]
        assert min_sfde(prediction(modes), truth(np.zeros((2, 2, 2)))) == pytest.approx(2.0)

    def test_invalid_steps_do_not_count(self):
        modes = np.zeros((1, 1, 3, 2))
        modes[0, 0, 2] = [10.0, 0.0]
        gt = truth(np.zeros((1, 3, 2)), valid=[[True, True, False]])
        pred = prediction(modes)
        assert min_sade(pred, gt) == 0.0
        assert min_sfde(pred, gt) == 0.0
        assert final_displacements(pred, gt).shape == (1, 1)

    def test_agent_without_valid_future_is_dropped_from_final_errors(self):
        modes = np.zeros((1, 2, 2, 2))
        modes[0, 1] = 7.0
        gt = truth(np.zeros((2, 2, 2)), valid=[[True, True], [False, False]])
        assert final_displacements(prediction(modes), gt).shape == (1, 1)
        assert min_sfde(prediction(modes), gt) == 0.0

    def test_no_valid_step_is_a_metric_error(self):
        with pytest.raises(MetricError):
            min_sade(prediction(np.zeros((1, 1, 2, 2))), truth(np.zeros((1, 2, 2)), valid=[[False, False]]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            min_sade(prediction(np.zeros((1, 2, 3, 2))), truth(np.zeros((1, 3, 2))))

    def test_translation_invariance(self):
        rng = np.random.default_rng(0)
        modes, future = rng.normal(0.0, 3.0, (4, 2, 5, 2)), rng.normal(0.0, 3.0, (2, 5, 2))
        shift = np.array([120.0, -45.0])
        base = (min_sade(prediction(modes), truth(future)), min_sfde(prediction(modes), truth(future)))
        moved = (
            min_sade(prediction(modes + shift), truth(future + shift)),
            min_sfde(prediction(modes + shift), truth(future + shift)),
        )
        assert moved == pytest.approx(base, abs=1e-9)

    def test_more_modes_never_hurt(self):
        rng = np.random.default_rng(1)
        modes, gt = rng.normal(0.0, 3.0, (6, 2, 5, 2)), truth(rng.normal(0.0, 3.0, (2, 5, 2)))
        sade = [min_sade(prediction(modes[:k]), gt) for k in range(1, 7)]
        sfde = [min_sfde(prediction(modes[:k]), gt) for k in range(1, 7)]
        assert all(a >= b for a, b in zip(sade, sade[1:]))
        assert all(a >= b for a, b in zip(sfde, sfde[1:]))


class TestMissRate:
    def test_best_mode_minimises_the_worst_agent(self):
        modes = np.zeros((2, 2, 1, 2))
        modes[0, 1, 0] = [3.0, 0.0]  # agents at 0 m and 3 m
        modes[1, :, 0] = [1.5, 0.0]  # both agents at 1.5 m
        pred, gt = prediction(modes), truth(np.zeros((2, 1, 2)))
        assert scene_miss(pred, gt, 2.0) == (False, 1)
        assert mode_hits(pred, gt, 2.0).tolist() == [False, True]
        assert scene_miss(pred, gt, 1.0) == (True, 1)
        assert mode_hits(pred, gt, 1.0).tolist() == [False, False]

    def test_one_miss_in_four_scenes(self):
        gt = truth(np.zeros((1, 3, 2)))
        pairs = [(prediction(_offset_modes([offset])), gt) for offset in (0.0, 1.0, 1.9, 2.5)]
        assert smr(pairs, 2.0) == pytest.approx(0.25)

    def test_threshold_and_empty_input(self):
        pair = (prediction(_offset_modes([0.0])), truth(np.zeros((1, 3, 2))))
        with pytest.raises(MetricError):
            smr([pair], 0.0)
        with pytest.raises(MetricError):
            smr([], 2.0)


class TestMeanAveragePrecision:
    def test_top_ranked_hits_everywhere(self):
        entries = [(np.array([0.7, 0.2, 0.1]), np.array([True, False, False])) for _ in range(10)]
        assert map_metric(entries) == pytest.approx(1.0)

    def test_no_hits(self):
        entries = [(np.array([0.5, 0.5]), np.array([False, False])) for _ in range(3)]
        assert map_metric(entries) == 0.0

    def test_hand_ranked_precision_recall(self):
        entries = [
            (np.array([0.9, 0.1]), np.array([True, False])),
            (np.array([0.6, 0.4]), np.array([False, True])),
            (np.array([0.7, 0.3]), np.array([False, False])),
        ]
        # Ranked: 0.9 hit, 0.7, 0.6, 0.4 hit, 0.3, 0.1 -> precision 1/1 and 2/4 at the hits, 3 ground truths.
        assert map_metric(entries) == pytest.approx((1.0 + 0.5) / 3)

    def test_empty_input(self):
        with pytest.raises(MetricError):
            map_metric([])


def _perfect(scene) -> PredictionSet:
    future = np.array([[s.x, s.y] for s in scene.track("ego").states[scene.t_obs :]])
    return PredictionSet(
        scene_id=scene.scene_id,
        agent_ids=("ego",),
        trajectories=future[None, None],
        confidences=np.array([1.0]),
    )


def _without_future(scene):
    tracks = []
    for track in scene.tracks:
        states = track.states[: scene.t_obs] + tuple(
            AgentState(0.0, 0.0, 0.0, 0.0, 0.0, valid=False) for _ in range(scene.t_fut)
        )
        tracks.append(replace(track, states=states))
    return replace(scene, tracks=tuple(tracks))


class TestReport:
    def test_perfect_predictions(self):
        scenes = [line_scene(scene_id=f"line-{i:06d}") for i in range(3)]
        report = evaluate_predictions([_perfect(s) for s in reversed(scenes)], scenes)
        assert report.min_sade == pytest.approx(0.0)
        assert report.smr == 0.0
        assert report.map_score == pytest.approx(1.0)
        assert [row.scene_id for row in report.scenes] == [s.scene_id for s in scenes]

    def test_scene_without_future_is_excluded(self):
        kept, empty = line_scene(scene_id="line-000000"), _without_future(line_scene(scene_id="line-000001"))
        offset = replace(_perfect(empty), trajectories=_perfect(empty).trajectories + 100.0)
        report = evaluate_predictions([_perfect(kept), offset], [kept, empty])
        assert report.excluded == ["line-000001"]
        assert len(report.scenes) == 1
        with pytest.raises(MetricError):
            evaluate_predictions([offset], [empty])

    @pytest.mark.parametrize(
        "predictions,message",
        [
            (lambda s: [_perfect(s), _perfect(s)], "more than once"),
            (lambda s: [], "no prediction"),
            (lambda s: [replace(_perfect(s), scene_id="elsewhere")], "no matching scene"),
            (lambda s: [replace(_perfect(s), agent_ids=("other-0",))], "differ"),
            (lambda s: [replace(_perfect(s), trajectories=_perfect(s).trajectories[:, :, :2])], "steps"),
        ],
    )
    def test_mismatches(self, predictions, message):
        scene = line_scene()
        with pytest.raises(PredictionMismatchError, match=message):
            pair_predictions(predictions(scene), [scene])

    def test_threshold_is_checked_first(self):
        scene = line_scene()
        with pytest.raises(MetricError):
            evaluate_predictions([_perfect(scene)], [scene], miss_threshold=-1.0)
