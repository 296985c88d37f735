import numpy as np
import pytest
from scipy.special import expit

from src.decoder.gru import GruCell
from src.decoder.kan import KanLayer, extended_grid
from src.diffcompute import Tensor, grad_check_parameters
from src.diffcompute import ops
from src.errors import CheckpointError, ConfigError, ShapeError
from src.nn.attention import MultiHeadAttention
from src.nn.layers import MLP, Linear
from src.nn.parameters import ParameterStore


def _store(seed: int = 0) -> ParameterStore:
    return ParameterStore(np.random.default_rng(seed))


def _weighted_sum(y: Tensor) -> Tensor:
    return ops.sum(ops.multiply(y, np.random.default_rng(17).standard_normal(y.shape)))


class TestParameterStore:
    def test_children_share_one_namespace(self):
        store = _store()
        store.child("encoder").child("map").create("weight", (2, 3))
        store.create("bias", (3,), init="zeros")
        assert list(store) == ["encoder.map.weight", "bias"]
        assert store.num_values() == 9

    def test_duplicate_and_unknown_initialisers_are_rejected(self):
        store = _store()
        store.create("w", (2,))
        with pytest.raises(ConfigError):
            store.create("w", (2,))
        with pytest.raises(ConfigError):
            store.create("v", (2,), init="orthogonal")

    def test_freeze_by_prefix(self):
        store = _store()
        store.child("diffusion").create("w", (2,))
        store.child("diffusion_extra").create("w", (2,))
        store.child("decoder").create("w", (2,))
        store.freeze("diffusion")
        assert store.is_frozen("diffusion.w")
        assert not store.is_frozen("diffusion_extra.w")
        assert [name for name, _ in store.trainable()] == ["diffusion_extra.w", "decoder.w"]

    def test_state_round_trip_and_mismatches(self):
        store = _store()
        store.create("w", (2, 2))
        state = store.state_dict()
        state["w"][0, 0] = 42.0
        store.load_state_dict(state)
        assert store["w"].data[0, 0] == 42.0
        with pytest.raises(CheckpointError):
            store.load_state_dict({})
        with pytest.raises(CheckpointError):
            store.load_state_dict({"w": np.zeros(3)})
        with pytest.raises(CheckpointError):
            store.load_state_dict({"w": np.zeros((2, 2)), "extra": np.zeros(1)})


class TestLayers:
    def test_linear_and_mlp_shapes(self):
        store = _store()
        linear = Linear(store.child("linear"), 4, 3)
        mlp = MLP(store.child("mlp"), [4, 8, 2], zero_init_last=True)
        x = Tensor(np.ones((5, 7, 4)))
        assert linear(x).shape == (5, 7, 3)
        assert np.array_equal(mlp(x).data, np.zeros((5, 7, 2)))

    def test_attention_masks_keys_and_zeroes_rows_without_context(self):
        attention = MultiHeadAttention(_store(), d_model=8, num_heads=2)
        rng = np.random.default_rng(1)
        queries = Tensor(rng.standard_normal((2, 3, 8)))
        keys = Tensor(rng.standard_normal((2, 4, 8)))
        mask = np.array([[True, False, True, False], [False, False, False, False]])
        result = attention(queries, keys, mask)
        assert result.output.shape == (2, 3, 8)
        assert result.weights.shape == (2, 2, 3, 4)
        assert np.allclose(result.weights[0, :, :, [1, 3]], 0.0)
        assert np.allclose(result.weights[0].sum(axis=-1), 1.0)
        assert np.array_equal(result.output.data[1], np.zeros((3, 8)))

    def test_attention_rejects_mismatched_keys(self):
        attention = MultiHeadAttention(_store(), d_model=8, num_heads=2)
        with pytest.raises(ShapeError):
            attention(Tensor(np.zeros((1, 2, 8))), Tensor(np.zeros((2, 2, 8))))


class TestGru:
    def _cell(self) -> tuple[GruCell, ParameterStore]:
        store = _store(3)
        return GruCell(store, input_dim=3, hidden_dim=4), store

    def _inputs(self) -> tuple[Tensor, Tensor]:
        rng = np.random.default_rng(8)
        return Tensor(rng.uniform(-0.9, 0.9, (2, 4))), Tensor(rng.standard_normal((2, 3)))

    def test_closed_update_gate_keeps_state(self):
        cell, _ = self._cell()
        bias = np.zeros(12)
        bias[:4] = -50.0
        cell.bias.assign(bias)
        h, x = self._inputs()
        assert np.allclose(cell.step(h, x).data, h.data, atol=1e-12)

    def test_open_update_gate_takes_candidate(self):
        cell, _ = self._cell()
        bias = np.zeros(12)
        bias[:4] = 50.0
        cell.bias.assign(bias)
        h, x = self._inputs()
        projected = x.data @ cell.w_input.data + bias
        r = expit(projected[:, 4:8] + h.data @ cell.w_gates.data[:, 4:])
        candidate = np.tanh(projected[:, 8:] + (r * h.data) @ cell.w_candidate.data)
        assert np.allclose(cell.step(h, x).data, candidate, atol=1e-12)

    def test_unrolled_gradients_match_finite_differences(self):
        cell, store = self._cell()
        rng = np.random.default_rng(4)
        h0 = Tensor(rng.uniform(-0.5, 0.5, (2, 4)))
        inputs = Tensor(rng.standard_normal((2, 5, 3)))
        assert cell.unroll(h0, inputs).shape == (2, 5, 4)
        assert grad_check_parameters(lambda: _weighted_sum(cell.unroll(h0, inputs)), store.items()) < 1e-4

    def test_wrong_widths_are_rejected(self):
        cell, _ = self._cell()
        with pytest.raises(ShapeError):
            cell.step(Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 2))))
        with pytest.raises(ShapeError):
            cell.step(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 3))))


class TestKan:
    def test_grid_has_order_extra_knots_per_side(self):
        knots = extended_grid(grid_size=4, order=3, grid_range=2.0)
        assert len(knots) == 4 + 2 * 3 + 1
        assert knots[3] == pytest.approx(-2.0)
        assert knots[-4] == pytest.approx(2.0)
        with pytest.raises(ConfigError):
            extended_grid(0, 3, 2.0)

    def test_zero_coefficients_give_zero_output(self):
        layer = KanLayer(_store(), in_dim=3, out_dim=2, grid_size=5, order=3, grid_range=2.0, zero_init=True)
        x = Tensor(np.random.default_rng(0).uniform(-2.0, 2.0, (4, 3)))
        assert np.array_equal(layer(x).data, np.zeros((4, 2)))

    def test_least_squares_fit_of_sine(self):
        layer = KanLayer(_store(), in_dim=1, out_dim=1, grid_size=10, order=3, grid_range=np.pi, zero_init=True)
        train = np.linspace(-np.pi, np.pi, 400)
        bases, _, _ = ops.bspline_values(train, layer.knots, layer.order)
        coef, *_ = np.linalg.lstsq(bases, np.sin(train), rcond=None)
        layer.coef.assign(coef.reshape(1, 1, -1))

        probe = np.linspace(-np.pi, np.pi, 1001)
        fitted = layer(Tensor(probe[:, None])).data[:, 0]
        assert np.max(np.abs(fitted - np.sin(probe))) < 0.02

    def test_out_of_grid_inputs_are_clamped_and_counted(self):
        layer = KanLayer(_store(), in_dim=1, out_dim=1, grid_size=5, order=3, grid_range=3.0)
        out = layer(Tensor(np.array([[-5.0], [0.0], [5.0], [3.0]])))
        assert np.all(np.isfinite(out.data))
        assert layer.clamped_inputs == 2

    def test_gradients_match_finite_differences(self):
        store = _store(5)
        layer = KanLayer(store, in_dim=2, out_dim=3, grid_size=4, order=3, grid_range=2.0)
        x = Tensor(np.random.default_rng(6).uniform(-1.5, 1.5, (5, 2)))
        assert grad_check_parameters(lambda: _weighted_sum(layer(x)), store.items()) < 1e-4

    def test_input_width_is_checked(self):
        layer = KanLayer(_store(), in_dim=2, out_dim=1, grid_size=4, order=3, grid_range=2.0)
        with pytest.raises(ShapeError):
            layer(Tensor(np.zeros((3, 4))))
