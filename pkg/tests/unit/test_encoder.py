from dataclasses import replace

import numpy as np
import pytest

from src.config.train_config import AblationMask
from src.diffcompute import Tensor
from src.encoder.formers import CrossFormer, cross_former, map_former, sign_former, social_former
from src.encoder.tsfa import TemporalSpatialFusion
from src.nn.parameters import ParameterStore
from src.predictor.features import SceneFeatures
from src.predictor.model import TrajectoryModel
from src.scene.generator import GeneratorConfig, generate_scene

COMPONENTS = {"social", "map", "sign", "temporal", "spatial"}


@pytest.fixture
def busy_scene():
    """Two predicted agents, two neighbours, a map and a signal."""
    return generate_scene("stop_start", 3, GeneratorConfig(t_obs=10, t_fut=12, num_agents=4, num_predicted=2))


@pytest.fixture
def model(train_config) -> TrajectoryModel:
    return TrajectoryModel(train_config)


@pytest.fixture
def features(model, busy_scene) -> SceneFeatures:
    return model.featurize(busy_scene)


@pytest.fixture
def latents(features, train_config) -> np.ndarray:
    return np.random.default_rng(4).standard_normal((features.num_agents, train_config.model.d_latent))


def _permute(features: SceneFeatures, order: np.ndarray) -> SceneFeatures:
    """Reorder the tracks by ``order`` and reverse the order of predicted agents."""
    new_row = np.argsort(order)
    return replace(
        features,
        agent_ids=tuple(features.agent_ids[i] for i in order),
        history=features.history[order],
        history_valid=features.history_valid[order],
        agent_types=features.agent_types[order],
        predicted=new_row[features.predicted][::-1],
        neighbors=new_row[features.neighbors],
        last_position=features.last_position[order],
        future=features.future[order],
        future_valid=features.future_valid[order],
    )


def _with_invalid_steps(features: SceneFeatures, row: int, steps) -> SceneFeatures:
    history, valid = features.history.copy(), features.history_valid.copy()
    history[row, steps] = 0.0
    valid[row, steps] = False
    return replace(features, history=history, history_valid=valid)


def _former(d_model: int = 8, num_heads: int = 2) -> CrossFormer:
    return CrossFormer(ParameterStore(np.random.default_rng(0)), d_model, num_heads)


class TestSceneEncoder:
    def test_every_attention_row_is_a_distribution(self, model, features, latents):
        encoding = model.encoder.encode(features, latents)
        assert set(encoding.attention) == COMPONENTS
        for name, weights in encoding.attention.items():
            assert np.abs(weights.sum(axis=-1) - 1.0).max() <= 1e-9, name
            assert weights.min() >= 0.0, name

    def test_agent_order_is_equivariant(self, model, features, latents):
        order = np.array([3, 1, 0, 2])
        original = model.encoder.encode(features, latents)
        permuted = model.encoder.encode(_permute(features, order), latents[order])
        assert permuted.agent_ids == original.agent_ids[::-1]
        assert np.allclose(permuted.context.data, original.context.data[::-1], rtol=0.0, atol=1e-12)
        assert np.allclose(permuted.tokens.data, original.tokens.data[::-1], rtol=0.0, atol=1e-12)

    def test_neighbours_only_reach_predicted_agents_through_the_social_former(
        self, train_config, busy_scene, latents
    ):
        def contexts(mask: AblationMask) -> tuple[np.ndarray, np.ndarray]:
            model = TrajectoryModel(replace(train_config, ablation=mask))
            features = model.featurize(busy_scene)
            history = features.history.copy()
            history[features.neighbors, :, :2] += 0.3
            moved = replace(features, history=history)
            return (
                model.encoder.encode(features, latents).context.data,
                model.encoder.encode(moved, latents).context.data,
            )

        before, after = contexts(AblationMask(social_former=False))
        assert np.array_equal(before, after)
        before, after = contexts(AblationMask())
        assert not np.allclose(before, after)

    def test_invalid_history_steps_get_no_temporal_weight(self, model, features, latents):
        row = int(features.predicted[0])
        gaps = [2, 3, 5]
        encoding = model.encoder.encode(_with_invalid_steps(features, row, gaps), latents)
        temporal = encoding.attention["temporal"]
        assert np.all(temporal[0][:, :, gaps] == 0.0)
        assert np.all(temporal[1][:, :, gaps] > 0.0)
        assert np.all(encoding.attention["spatial"][gaps, :, :, 0] == 0.0)

    def test_all_invalid_track_embeds_to_zero(self, model, features, latents):
        row = int(features.neighbors[0])
        blank = _with_invalid_steps(features, row, slice(None))
        embedded = model.encoder.embed_agents(blank, latents).data
        assert np.array_equal(embedded[row], np.zeros_like(embedded[row]))
        assert np.abs(embedded[int(features.predicted[0])]).sum() > 0.0


class TestFormers:
    def test_disabled_former_returns_its_input(self):
        queries = Tensor(np.random.default_rng(1).standard_normal((2, 3, 8)))
        context = Tensor(np.ones((2, 4, 8)))
        outputs = [
            cross_former(None, queries, context),
            social_former(None, queries, context, np.ones((2, 3), dtype=bool)),
            map_former(None, queries, Tensor(np.ones((5, 8)))),
            sign_former(None, queries, context),
        ]
        for out in outputs:
            assert out.queries is queries
            assert out.weights is None
            assert not out.no_context

    def test_single_key_takes_all_the_weight(self):
        rng = np.random.default_rng(2)
        queries = Tensor(rng.standard_normal((2, 3, 8)))
        out = cross_former(_former(), queries, Tensor(rng.standard_normal((2, 1, 8))))
        assert out.weights.shape == (2, 2, 3, 1)
        assert np.all(out.weights == 1.0)
        delta = out.queries.data - queries.data
        assert np.allclose(delta[:, 0], delta[:, 1])
        assert np.allclose(delta[:, 0], delta[:, 2])

    def test_masked_neighbour_changes_the_social_output(self):
        rng = np.random.default_rng(3)
        former = _former()
        queries = Tensor(rng.standard_normal((1, 3, 8)))
        neighbours = Tensor(rng.standard_normal((2, 3, 8)))
        both = social_former(former, queries, neighbours, np.ones((2, 3), dtype=bool))
        masked_valid = np.array([[True, True, True], [False, False, False]])
        masked = social_former(former, queries, neighbours, masked_valid)
        assert not np.allclose(both.queries.data, masked.queries.data)
        assert np.all(masked.weights[..., 1] == 0.0)
        assert np.allclose(masked.weights[..., 0], 1.0)

    def test_empty_context_is_flagged(self):
        queries = Tensor(np.zeros((1, 2, 8)))
        out = cross_former(_former(), queries, Tensor(np.zeros((1, 0, 8))))
        assert out.queries is queries
        assert out.no_context


class TestFusion:
    def test_single_agent_single_step(self):
        fusion = TemporalSpatialFusion(ParameterStore(np.random.default_rng(0)), 8, 2, 4, t_obs=1)
        rng = np.random.default_rng(5)
        out = fusion(Tensor(rng.standard_normal((1, 1, 8))), rng.standard_normal((1, 4)), np.ones((1, 1), dtype=bool))
        assert out.context.shape == (1, 8)
        assert out.tokens.shape == (1, 1, 8)
        assert np.all(np.isfinite(out.context.data))
        assert out.temporal_weights.shape == (1, 2, 1, 1)
        assert np.all(out.temporal_weights == 1.0)
        assert np.all(out.spatial_weights == 1.0)

    def test_without_attention_no_weights_are_reported(self):
        fusion = TemporalSpatialFusion(ParameterStore(np.random.default_rng(0)), 8, 2, 4, t_obs=3, attention=False)
        out = fusion(Tensor(np.ones((2, 3, 8))), np.zeros((2, 4)), np.ones((2, 3), dtype=bool))
        assert out.temporal_weights is None
        assert out.spatial_weights is None
        assert out.context.shape == (2, 8)
