"""
Multimodal trajectory decoder.

For every mode ``k`` the agent context is offset by a learned start token,
unrolled over the future horizon (GRU, or a per-step feed-forward map when
recurrence is ablated) and mapped by the head to a bounded per-step
displacement. Displacements are summed from each agent's last observed
position. A confidence head scores the modes from the scene-mean of their
contexts.
"""

from dataclasses import dataclass

import numpy as np

from src.config import settings
from src.config.train_config import DecoderConfig, ModelConfig
from src.decoder.gru import GruCell
from src.decoder.kan import KanLayer
from src.diffcompute import Tensor
from src.diffcompute import ops
from src.encoder.embedding import broadcast_rows
from src.encoder.scene_encoder import SceneEncoding
from src.errors import ShapeError
from src.nn.layers import MLP, LayerNorm, Linear
from src.nn.parameters import ParameterStore

# Per-axis bound keeping every step's displacement norm within v_max * dt.
MAX_STEP_COMPONENT_M: float = settings.V_MAX_MPS * settings.DT_SECONDS / np.sqrt(2.0)


@dataclass(frozen=True)
class DecoderOutput:
    positions: Tensor  # (K, A, T_fut, 2) metres
    log_confidences: Tensor  # (K,)

    @property
    def confidences(self) -> np.ndarray:
        return np.exp(self.log_confidences.data)


class _KanHead:
    def __init__(self, store: ParameterStore, config: ModelConfig, layers: int) -> None:
        width = max(4, config.d_model // 4)
        dims = [config.d_model] + [width] * (layers - 1) + [2]
        self.layers = [
            KanLayer(
                store.child(f"kan{i}"),
                dims[i],
                dims[i + 1],
                config.kan_grid_size,
                config.kan_spline_order,
                config.kan_grid_range,
                zero_init=i == len(dims) - 2,
            )
            for i in range(len(dims) - 1)
        ]

    @property
    def clamped_inputs(self) -> int:
        return sum(layer.clamped_inputs for layer in self.layers)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class MultimodalDecoder:
    def __init__(self, store: ParameterStore, config: ModelConfig, decoder: DecoderConfig) -> None:
        d = config.d_model
        step_dim = max(4, d // 4)
        self.config = config
        self.decoder = decoder
        self.start_tokens = store.create("start_tokens", (config.num_modes, d), init="normal", scale=0.5)
        self.step_table = store.create("step_table", (config.t_fut, step_dim), init="normal", scale=0.1)
        self.init_proj = Linear(store.child("init"), d, d)
        if decoder.use_gru:
            self.cell = GruCell(store.child("gru"), d + step_dim, d)
            self.feedforward = None
        else:
            self.cell = None
            self.feedforward = Linear(store.child("feedforward"), d + step_dim, d)
        self.head_norm = LayerNorm(store.child("head_norm"), d)
        if decoder.head == "kan":
            self.head = _KanHead(store.child("head"), config, decoder.head_layers)
        elif decoder.head == "mlp":
            dims = [d] * (decoder.head_layers + 1) + [2]
            self.head = MLP(store.child("head"), dims, zero_init_last=True)
        else:
            self.head = Linear(store.child("head"), d, 2, zero_init=True)
        self.confidence = MLP(store.child("confidence"), [d, d, 1])

    @property
    def clamped_inputs(self) -> int:
        return getattr(self.head, "clamped_inputs", 0)

    def __call__(self, encoding: SceneEncoding, last_position: np.ndarray) -> DecoderOutput:
        """Decode ``encoding`` from the predicted agents' last positions (A, 2) in metres."""
        context = encoding.context
        agents, width = context.shape
        if np.shape(last_position) != (agents, 2):
            raise ShapeError(f"last positions {np.shape(last_position)} for {agents} agents")
        modes, steps = self.config.num_modes, self.config.t_fut

        # (K*A, D): mode-major rows, row k*A + a.
        tiled = ops.gather(context, np.tile(np.arange(agents), modes), axis=0)
        tokens = ops.gather(self.start_tokens, np.repeat(np.arange(modes), agents), axis=0)
        mode_context = tiled + tokens

        step_emb = ops.reshape(self.step_table, (1,) + self.step_table.shape)
        step_emb = ops.gather(step_emb, np.zeros(modes * agents, dtype=np.intp), axis=0)
        inputs = ops.concat([broadcast_rows(mode_context, steps), step_emb], axis=-1)

        if self.cell is not None:
            hidden = self.cell.unroll(ops.tanh(self.init_proj(mode_context)), inputs)
        else:
            hidden = ops.tanh(self.feedforward(inputs) + broadcast_rows(self.init_proj(mode_context), steps))

        head_input = hidden if isinstance(self.head, Linear) else self.head_norm(hidden)
        displacement = ops.tanh(self.head(head_input)) * MAX_STEP_COMPONENT_M
        cumulative = np.triu(np.ones((steps, steps)))
        offsets = ops.transpose(ops.matmul(ops.transpose(displacement, (0, 2, 1)), Tensor(cumulative)), (0, 2, 1))
        offsets = ops.reshape(offsets, (modes, agents, steps, 2))
        positions = offsets + np.broadcast_to(np.asarray(last_position)[:, None, :], (modes, agents, steps, 2))

        scene_context = ops.mean(ops.reshape(mode_context, (modes, agents, width)), axis=1)
        logits = ops.reshape(self.confidence(scene_context), (modes,))
        return DecoderOutput(positions=positions, log_confidences=ops.log_softmax(logits))
