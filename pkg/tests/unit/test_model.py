from dataclasses import replace

import numpy as np
import pytest

from src.config import settings
from src.config.train_config import AblationMask, DecoderConfig, ModelConfig, TrainConfig
from src.decoder.multimodal import DecoderOutput
from src.diffcompute import Tensor, grad_check_parameters
from src.errors import ConfigError, ContractError, DatasetError, ShapeError
from src.predictor.features import CONDITION_FEATURES, build_features, resample_polyline
from src.predictor.model import TrajectoryModel
from src.training.ablation import DECODER_GRID, ENCODER_GRID, grid_configs
from src.training.losses import assemble_loss, scene_loss, total_loss, trajectory_losses
from src.training.optimizer import Adam, clip_global_norm, first_non_finite
from src.training.trainer import dataset_horizons
from tests.builders import line_scene

LINE_MODEL = ModelConfig(
    t_obs=4,
    t_fut=3,
    d_model=8,
    num_heads=2,
    d_latent=4,
    num_modes=2,
    points_per_polyline=5,
    kan_grid_size=4,
    diffusion_hidden=8,
    diffusion_blocks=1,
    preview_steps=3,
)


def _line_config(**overrides) -> TrainConfig:
    return TrainConfig(diffusion_steps=4, latent_dropout=0.0, model=LINE_MODEL, seed=1, **overrides)


class TestFeatures:
    def test_line_scene_arrays(self):
        features = build_features(line_scene(), points_per_polyline=6)
        assert features.agent_ids == ("ego", "other-0")
        assert features.predicted.tolist() == [0]
        assert features.neighbors.tolist() == [1]
        assert features.history.shape == (2, 4, 6)
        assert features.history_valid.all()
        assert features.last_position[0] == pytest.approx([1.5, 0.0])
        assert features.future[0, :, 0] == pytest.approx([2.0, 2.5, 3.0])
        assert features.map_points.shape == (1, 6, 7)
        assert features.signals.shape == (1, 4, 6)
        assert features.condition().shape == (2, 4 * CONDITION_FEATURES)
        offsets = features.future_offsets().reshape(2, 3, 2)
        assert offsets[0, -1] == pytest.approx([1.5 / settings.POSITION_SCALE_M, 0.0])

    def test_polylines_are_resampled_by_arc_length(self):
        sampled = resample_polyline(np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 40.0]]), 6)
        assert sampled[:, :2] == pytest.approx(
            np.array([[0, 0], [10, 0], [10, 10], [10, 20], [10, 30], [10, 40]], dtype=float)
        )
        assert sampled[0, 2:] == pytest.approx([1.0, 0.0])
        assert sampled[-1, 2:] == pytest.approx([0.0, 1.0])

    def test_scene_without_neighbors_or_signals(self):
        features = build_features(line_scene(neighbors=0, signals=0))
        assert features.neighbors.size == 0
        assert features.signals.shape[0] == 0


class TestTrajectoryModel:
    def test_horizon_mismatch_is_rejected(self, train_config):
        with pytest.raises(ShapeError):
            TrajectoryModel(train_config).featurize(line_scene())

    def test_untrained_decoder_keeps_agents_at_their_last_position(self, train_config, stop_start_scene):
        model = TrajectoryModel(train_config)
        features = model.featurize(stop_start_scene)
        _, output = model.decode(features, np.zeros((features.num_agents, train_config.model.d_latent)))
        last = features.last_position[features.predicted]
        assert output.positions.shape == (3, 2, 12, 2)
        assert np.allclose(output.positions.data, np.broadcast_to(last[None, :, None, :], (3, 2, 12, 2)))
        assert output.confidences.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("name,decoder", DECODER_GRID, ids=[row[0] for row in DECODER_GRID])
    def test_every_decoder_respects_the_speed_limit(self, name, decoder, train_config, stop_start_scene):
        model = TrajectoryModel(replace(train_config, decoder=decoder))
        for pname, tensor in model.store.items("decoder"):
            if tensor.data.any() or "bias" in pname or "beta" in pname:
                continue
            tensor.assign(np.random.default_rng(0).normal(0.0, 3.0, tensor.shape))
        features = model.featurize(stop_start_scene)
        _, output = model.decode(features, np.random.default_rng(1).standard_normal((features.num_agents, 8)))

        last = features.last_position[features.predicted]
        paths = np.concatenate([np.broadcast_to(last[None, :, None, :], (3, 2, 1, 2)), output.positions.data], axis=2)
        steps = np.linalg.norm(np.diff(paths, axis=2), axis=-1)
        assert steps.max() <= settings.V_MAX_MPS * settings.DT_SECONDS + 1e-9
        assert steps.max() > 0.0

    @pytest.mark.parametrize("name,mask", ENCODER_GRID, ids=[row[0] for row in ENCODER_GRID])
    def test_every_encoder_mask_produces_full_predictions(self, name, mask, train_config, stop_start_scene):
        model = TrajectoryModel(replace(train_config, ablation=mask))
        prediction = model.predict(stop_start_scene)
        assert prediction.trajectories.shape == (3, 2, 12, 2)
        assert prediction.agent_ids == stop_start_scene.predicted_agent_ids()

    def test_disabled_formers_own_no_parameters(self, train_config):
        model = TrajectoryModel(replace(train_config, ablation=AblationMask(map_former=False, sign_former=False)))
        names = list(model.store)
        assert not any(n.startswith(("encoder.map.", "encoder.polylines.", "encoder.sign.")) for n in names)
        assert any(n.startswith("encoder.social.") for n in names)

    def test_formers_without_context_are_reported(self):
        model = TrajectoryModel(_line_config())
        features = model.featurize(line_scene(neighbors=0, signals=0))
        encoding, _ = model.decode(features, np.zeros((1, 4)))
        assert encoding.no_context == frozenset({"social", "sign"})
        assert "map" in encoding.attention

    def test_preview_is_always_frozen_and_diffusion_on_request(self, train_config):
        model = TrajectoryModel(train_config)
        trainable = [name for name, _ in model.store.trainable()]
        assert not any(name.startswith("diffusion.preview") for name in trainable)
        assert any(name.startswith("diffusion.") for name in trainable)

        frozen = TrajectoryModel(replace(train_config, freeze_diffusion=True))
        assert not any(name.startswith(("future.", "diffusion.")) for name, _ in frozen.store.trainable())

    def test_predictions_repeat_for_a_seed_and_survive_a_checkpoint(self, train_config, stop_start_scene):
        model = TrajectoryModel(train_config)
        first = model.predict(stop_start_scene, seed=3)
        again = model.predict(stop_start_scene, seed=3)
        restored = TrajectoryModel.from_checkpoint(model.to_checkpoint()).predict(stop_start_scene, seed=3)
        assert np.array_equal(first.trajectories, again.trajectories)
        assert np.array_equal(first.trajectories, restored.trajectories)
        assert np.array_equal(first.confidences, restored.confidences)


class TestLosses:
    @staticmethod
    def _output(offsets: list[float]) -> DecoderOutput:
        positions = np.zeros((len(offsets), 1, 2, 2))
        for k, offset in enumerate(offsets):
            positions[k, :, :, 1] = offset
        uniform = np.full(len(offsets), -np.log(len(offsets)))
        return DecoderOutput(positions=Tensor(positions), log_confidences=Tensor(uniform))

    def test_winner_takes_all_picks_the_closest_mode(self):
        loss = trajectory_losses(self._output([2.0, 1.0]), np.zeros((1, 2, 2)), np.ones((1, 2), dtype=bool))
        assert loss.mode_errors == pytest.approx([2.0, 1.0])
        assert loss.best_mode == 1
        assert loss.traj.item() == pytest.approx(1.0)
        assert loss.conf.item() == pytest.approx(np.log(2.0))

    def test_invalid_steps_are_ignored(self):
        output = self._output([1.0])
        future = np.array([[[0.0, 1.0], [0.0, 50.0]]])
        loss = trajectory_losses(output, future, np.array([[True, False]]))
        assert loss.traj.item() == pytest.approx(0.0)

    def test_no_valid_step_gives_zero_loss(self):
        loss = trajectory_losses(self._output([1.0, 2.0]), np.zeros((1, 2, 2)), np.zeros((1, 2), dtype=bool))
        assert loss.traj.item() == 0.0
        assert loss.conf.item() == 0.0

    def test_ground_truth_shape_is_checked(self):
        with pytest.raises(ShapeError):
            trajectory_losses(self._output([1.0]), np.zeros((2, 2, 2)), np.ones((2, 2), dtype=bool))

    def test_assembled_total(self):
        terms = assemble_loss(Tensor(1.0), Tensor(2.0), Tensor(3.0), lambda_conf=0.5)
        assert terms.components().total == pytest.approx(4.5)

    def test_empty_batch_is_a_contract_error(self, train_config):
        with pytest.raises(ContractError):
            total_loss(TrajectoryModel(train_config), [], np.random.default_rng(0))

    def test_total_loss_gradients_match_finite_differences(self):
        model = TrajectoryModel(_line_config())
        rng = np.random.default_rng(2)
        # Break the tie between modes that a zero-initialised head creates.
        for name, tensor in model.store.items("decoder.head"):
            tensor.assign(rng.normal(0.0, 0.5, tensor.shape))
        features = model.featurize(line_scene())
        params = model.store.trainable()
        roots = {name.split(".")[0] for name, _ in params}
        assert roots == {"future", "diffusion", "encoder", "decoder"}
        for component in ("agents", "social", "map", "polylines", "sign", "signals", "tsfa"):
            assert any(name.startswith(f"encoder.{component}.") for name, _ in params)

        def loss() -> Tensor:
            return scene_loss(model, features, np.random.default_rng(5)).total

        assert grad_check_parameters(loss, params, max_coords=3) < 1e-4


class TestOptimizer:
    def test_first_adam_step_moves_by_the_learning_rate(self):
        x = Tensor(np.array([0.0, 1.0]), requires_grad=True)
        untouched = Tensor(np.array([5.0]), requires_grad=True)
        optimizer = Adam([("x", x), ("u", untouched)], learning_rate=0.1)
        optimizer.step({"x": np.array([-2.0, 4.0])})
        assert x.data == pytest.approx([0.1, 0.9], abs=1e-6)
        assert untouched.data.tolist() == [5.0]

    def test_adam_minimises_a_quadratic(self):
        x = Tensor(np.array([0.0]), requires_grad=True)
        optimizer = Adam([("x", x)], learning_rate=0.05)
        for _ in range(2000):
            optimizer.step({"x": 2.0 * (x.data - 3.0)})
        assert x.data[0] == pytest.approx(3.0, abs=0.1)

    def test_global_norm_clipping(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        clipped, norm = clip_global_norm(grads, 1.0)
        assert norm == pytest.approx(5.0)
        assert clipped["a"] == pytest.approx([0.6])
        assert clipped["b"] == pytest.approx([0.8])
        same, _ = clip_global_norm(grads, 10.0)
        assert same is grads

    def test_non_finite_gradient_is_named(self):
        assert first_non_finite({"a": np.ones(2), "b": np.array([1.0, np.nan])}) == "b"
        assert first_non_finite({"a": np.ones(2)}) is None


class TestTrainingSetup:
    def test_mixed_horizons_are_rejected(self):
        assert dataset_horizons([line_scene(), line_scene()]) == (4, 3)
        with pytest.raises(DatasetError, match="mix horizons"):
            dataset_horizons([line_scene(), line_scene(t_fut=5)])
        with pytest.raises(DatasetError):
            dataset_horizons([])

    @pytest.mark.parametrize("grid,rows", [("encoder", 5), ("decoder", 6), ("all", 11)])
    def test_grid_sizes(self, grid, rows, train_config):
        configs = grid_configs(grid, train_config)
        assert len(configs) == rows
        assert len({name for _, name, _ in configs}) == rows
        assert all(config.seed == train_config.seed for _, _, config in configs)

    def test_unknown_grid(self, train_config):
        with pytest.raises(ConfigError):
            grid_configs("everything", train_config)

    def test_decoder_grid_spans_every_head(self):
        heads = {(decoder.head, decoder.head_layers, decoder.use_gru) for _, decoder in DECODER_GRID}
        assert ("kan", 2, True) in heads
        assert ("kan", 2, False) in heads
        assert {head for head, _, _ in heads} == {"kan", "mlp", "none"}
        assert DecoderConfig() == DECODER_GRID[-1][1]
