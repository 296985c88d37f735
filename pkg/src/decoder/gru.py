"""
Gated recurrent unit.

    z  = sigmoid(W_z [x, h])
    r  = sigmoid(W_r [x, h])
    h~ = tanh(W_h [x, r * h])
    h' = (1 - z) * h + z * h~

The input halves of the three gates share one ``(D_in, 3H)`` matrix so an
unrolled sequence projects its inputs once.
"""

from src.diffcompute import Tensor
from src.diffcompute import ops
from src.errors import ShapeError
from src.nn.parameters import ParameterStore


class GruCell:
    def __init__(self, store: ParameterStore, input_dim: int, hidden_dim: int) -> None:
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w_input = store.create("w_input", (input_dim, 3 * hidden_dim))
        self.w_gates = store.create("w_gates", (hidden_dim, 2 * hidden_dim))
        self.w_candidate = store.create("w_candidate", (hidden_dim, hidden_dim))
        self.bias = store.create("bias", (3 * hidden_dim,), init="zeros")

    def project_inputs(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.input_dim:
            raise ShapeError(f"GRU input width {x.shape[-1]}, expected {self.input_dim}")
        return ops.matmul(x, self.w_input) + self.bias

    def step_projected(self, h: Tensor, projected: Tensor) -> Tensor:
        size = self.hidden_dim
        gates = ops.matmul(h, self.w_gates)
        z = ops.sigmoid(projected[..., :size] + gates[..., :size])
        r = ops.sigmoid(projected[..., size : 2 * size] + gates[..., size:])
        candidate = ops.tanh(projected[..., 2 * size :] + ops.matmul(r * h, self.w_candidate))
        return h + z * (candidate - h)

    def step(self, h: Tensor, x: Tensor) -> Tensor:
        """One update of ``h`` (B, H) with input ``x`` (B, D_in)."""
        if h.shape[-1] != self.hidden_dim:
            raise ShapeError(f"GRU hidden width {h.shape[-1]}, expected {self.hidden_dim}")
        return self.step_projected(h, self.project_inputs(x))

    def unroll(self, h0: Tensor, inputs: Tensor) -> Tensor:
        """Run over ``inputs`` (B, T, D_in) from ``h0`` (B, H); returns (B, T, H)."""
        projected = self.project_inputs(inputs)
        h = h0
        states = []
        for t in range(inputs.shape[1]):
            h = self.step_projected(h, projected[:, t, :])
            states.append(h)
        return ops.stack(states, axis=1)

