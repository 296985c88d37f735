import itertools
from dataclasses import replace

import numpy as np
import pytest

from src.errors import ExplainInputError
from src.explain.coalitions import (
    EMPTY_COALITION,
    FULL_COALITION,
    all_coalitions,
    apply_coalition,
    coalition_key,
    without_element,
)
from src.explain.oracles import ConstantPredictor, MapFollowingOracle
from src.explain.shapley import (
    aggregate_global,
    coalition_value,
    exact_shapley,
    global_importance,
    scene_importance,
)
from src.models.models import FEATURE_GROUPS, ElementContribution, ShapleyReport, TrafficSignal
from tests.builders import line_scene

H, N, S, M = FEATURE_GROUPS


def _table(value) -> dict[frozenset, float]:
    return {c: float(value(c)) for c in all_coalitions()}


class TestCoalitions:
    def test_sixteen_ordered_coalitions(self):
        coalitions = all_coalitions()
        assert len(coalitions) == 16
        assert len(set(coalitions)) == 16
        assert coalitions[0] == EMPTY_COALITION
        assert coalitions[-1] == FULL_COALITION
        assert [len(c) for c in coalitions] == sorted(len(c) for c in coalitions)

    def test_keys(self):
        assert coalition_key(frozenset({M, H})) == "history+map"
        assert coalition_key(EMPTY_COALITION) == "none"
        assert len({coalition_key(c) for c in all_coalitions()}) == 16

    def test_full_coalition_is_the_scene_itself(self):
        scene = line_scene()
        assert apply_coalition(scene, FULL_COALITION) == scene

    def test_empty_coalition_is_a_static_lone_agent(self):
        scene = line_scene()
        masked = apply_coalition(scene, EMPTY_COALITION)
        assert masked.track_ids == ("ego",)
        assert masked.signals == ()
        assert masked.map_polylines == ()
        observed = masked.track("ego").states[: scene.t_obs]
        assert {(s.x, s.y, s.vx, s.vy) for s in observed} == {(1.5, 0.0, 0.0, 0.0)}
        assert masked.track("ego").states[scene.t_obs :] == scene.track("ego").states[scene.t_obs :]

    def test_map_only_coalition(self, stop_start_scene):
        masked = apply_coalition(stop_start_scene, frozenset({M}))
        assert masked.track_ids == stop_start_scene.predicted_agent_ids()
        assert masked.signals == ()
        assert masked.map_polylines == stop_start_scene.map_polylines
        for track in masked.tracks:
            assert len({(s.x, s.y) for s in track.states[: stop_start_scene.t_obs]}) == 1

    def test_single_elements_are_removed(self):
        scene = line_scene(neighbors=2, signals=2)
        assert without_element(scene, N, "other-1").track_ids == ("ego", "other-0")
        assert [s.signal_id for s in without_element(scene, S, "signal-0").signals] == ["signal-1"]
        with pytest.raises(ValueError):
            without_element(scene, H, "ego")


class TestExactShapley:
    def test_additive_game_returns_the_weights(self):
        weights = {H: 1.0, N: 2.0, S: 3.0, M: 4.0}
        phi = exact_shapley(_table(lambda c: sum(weights[g] for g in c)))
        assert phi == pytest.approx(weights)
        assert list(phi) == list(FEATURE_GROUPS)

    def test_symmetric_game_splits_evenly(self):
        phi = exact_shapley(_table(lambda c: len(c) ** 2))
        assert list(phi.values()) == pytest.approx([4.0] * 4)

    def test_pure_interaction_is_shared(self):
        phi = exact_shapley(_table(lambda c: 1.0 if {H, M} <= c else 0.0))
        assert phi == pytest.approx({H: 0.5, N: 0.0, S: 0.0, M: 0.5})

    def test_dummy_player_gets_nothing(self):
        phi = exact_shapley(_table(lambda c: 2.0 * (H in c) + 3.0 * (H in c and N in c) - (M in c)))
        assert phi[S] == 0.0

    def test_efficiency_and_additivity_on_random_games(self):
        rng = np.random.default_rng(0)
        coalitions = all_coalitions()
        for _ in range(1000):
            v = dict(zip(coalitions, rng.normal(0.0, 5.0, 16)))
            w = dict(zip(coalitions, rng.normal(0.0, 5.0, 16)))
            v[EMPTY_COALITION] = w[EMPTY_COALITION] = 0.0
            phi_v, phi_w = exact_shapley(v), exact_shapley(w)
            phi_sum = exact_shapley({c: v[c] + w[c] for c in coalitions})
            assert sum(phi_v.values()) == pytest.approx(v[FULL_COALITION], abs=1e-9)
            for group in FEATURE_GROUPS:
                assert phi_sum[group] == pytest.approx(phi_v[group] + phi_w[group], abs=1e-9)

    def test_any_player_set(self):
        players = ("a", "b", "c")
        values = {
            frozenset(subset): float(len(subset))
            for size in range(4)
            for subset in itertools.combinations(players, size)
        }
        assert exact_shapley(values, players) == pytest.approx({"a": 1.0, "b": 1.0, "c": 1.0})

    def test_incomplete_or_non_finite_tables(self):
        table = _table(len)
        del table[frozenset({N, S})]
        with pytest.raises(ExplainInputError):
            exact_shapley(table)
        table = _table(len)
        table[FULL_COALITION] = float("nan")
        with pytest.raises(ExplainInputError):
            exact_shapley(table)


class TestSceneImportance:
    def test_input_blind_predictor_gets_zero_everywhere(self, stop_start_scene):
        report = scene_importance(ConstantPredictor(num_modes=2), stop_start_scene, seeds=[0])
        assert all(value == 0.0 for value in report.phi.values())
        assert all(value == 0.0 for value in report.coalition_values.values())
        assert [e.contribution for e in report.neighbor_elements] == [0.0]
        assert [e.contribution for e in report.signal_elements] == [0.0]
        assert report.error_empty == report.error_full > 0.0

    def test_lane_follower_on_a_hand_built_scene(self):
        # Without history the agent looks parked: it holds at the red light
        # (error 1.0 m) or, without the light, leaves at the nominal 8 m/s
        # (error 0.6 m). With history it is exact.
        report = scene_importance(MapFollowingOracle(), line_scene(), seeds=[0, 1])
        assert report.error_empty == pytest.approx(0.6)
        assert report.error_full == pytest.approx(0.0, abs=1e-9)
        assert report.coalition_values["traffic_sign"] == pytest.approx(-0.4)
        assert report.coalition_values["history"] == pytest.approx(0.6)
        assert report.phi[H] == pytest.approx(0.8)
        assert report.phi[S] == pytest.approx(-0.2)
        assert report.phi[N] == pytest.approx(0.0, abs=1e-9)
        assert report.phi[M] == pytest.approx(0.0, abs=1e-9)
        assert sum(report.phi.values()) == pytest.approx(report.v_full)
        assert [e.element_id for e in report.signal_elements] == ["signal-0"]
        assert report.signal_elements[0].contribution == pytest.approx(0.0, abs=1e-9)
        assert report.seeds == [0, 1]

    def test_single_coalition_value(self):
        scene = line_scene()
        oracle = MapFollowingOracle()
        assert coalition_value(oracle, scene, EMPTY_COALITION, "minSADE", 0) == 0.0
        assert coalition_value(oracle, scene, frozenset({S}), "minSADE", 0) == pytest.approx(-0.4)
        assert coalition_value(oracle, scene, frozenset({H}), "minSFDE", 0) == pytest.approx(0.9)

    def test_scene_without_neighbors_has_no_elements(self):
        report = scene_importance(ConstantPredictor(), line_scene(neighbors=0), seeds=[0])
        assert report.neighbor_elements == []

    def test_threads_do_not_change_the_result(self):
        scene = line_scene(neighbors=2, signals=2)
        serial = scene_importance(MapFollowingOracle(), scene, seeds=[0], workers=1)
        threaded = scene_importance(MapFollowingOracle(), scene, seeds=[0], workers=2)
        assert threaded.phi == serial.phi
        assert threaded.coalition_values == serial.coalition_values

    def test_bad_arguments(self):
        with pytest.raises(ExplainInputError):
            scene_importance(ConstantPredictor(), line_scene(), metric="ADE", seeds=[0])
        with pytest.raises(ExplainInputError):
            scene_importance(ConstantPredictor(), line_scene(), seeds=[])


def _report(scene_id, history, map_phi, neighbors, signals, metric="minSADE") -> ShapleyReport:
    return ShapleyReport(
        scene_id=scene_id,
        metric=metric,
        v_empty=0.0,
        v_full=history + map_phi,
        phi={H: history, N: 0.0, S: 0.0, M: map_phi},
        neighbor_elements=[ElementContribution(f"n{i}", c) for i, c in enumerate(neighbors)],
        signal_elements=[ElementContribution(f"s{i}", c) for i, c in enumerate(signals)],
    )


class TestGlobalImportance:
    def test_hand_aggregate(self):
        reports = [
            _report("a", 1.0, 0.0, [0.5, 1.5], [2.0]),
            _report("b", 2.0, 0.0, [], [1.0]),
            _report("c", 3.0, 3.0, [-1.0], []),
        ]
        result = aggregate_global(reports)
        assert result.scene_id == "GLOBAL"
        assert result.phi == pytest.approx({H: 2.0, N: 0.5 / 3.0, S: 1.0, M: 1.0})

    def test_empty_or_mixed_reports(self):
        with pytest.raises(ExplainInputError):
            aggregate_global([])
        with pytest.raises(ExplainInputError):
            aggregate_global([_report("a", 1, 0, [], []), _report("b", 1, 0, [], [], metric="minSFDE")])

    def test_dataset_importance(self):
        scenes = [line_scene(scene_id=f"line-{i:06d}") for i in range(2)]
        result = global_importance(MapFollowingOracle(), scenes, seeds=[0], show_progress=False)
        assert result.phi[H] == pytest.approx(0.8)
        assert result.phi[M] == pytest.approx(0.0, abs=1e-9)
        assert result.phi[N] == pytest.approx(0.0, abs=1e-9)


class TestOracles:
    def test_constant_predictor_shape(self, stop_start_scene):
        prediction = ConstantPredictor(num_modes=3).predict(stop_start_scene)
        assert prediction.trajectories.shape == (3, 2, stop_start_scene.t_fut, 2)
        assert not prediction.trajectories.any()

    def test_lane_follower_tracks_a_straight_lane(self):
        scene = line_scene(t_fut=5)
        prediction = MapFollowingOracle().predict(scene)
        assert prediction.agent_ids == ("ego",)
        assert prediction.trajectories[0, 0, :, 0] == pytest.approx([2.0, 2.5, 3.0, 3.5, 4.0])
        assert prediction.trajectories[0, 0, :, 1] == pytest.approx(np.zeros(5), abs=1e-9)

    def test_parked_agent_departs_on_green(self):
        scene = apply_coalition(line_scene(), frozenset({S, M}))
        green = TrafficSignal("signal-0", (30.0, 0.0), ("green",) * 4)
        prediction = MapFollowingOracle().predict(replace(scene, signals=(green,)))
        # 2 m/s^2 from rest: 0.01, 0.04, 0.09 m.
        assert prediction.trajectories[0, 0, :, 0] - 1.5 == pytest.approx([0.01, 0.04, 0.09])
