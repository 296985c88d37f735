"""
Dense building blocks: Linear, MLP and LayerNorm.
"""

from typing import Sequence

from src.diffcompute import Tensor
from src.diffcompute import ops
from src.nn.parameters import ParameterStore

_ACTIVATIONS = {"relu": ops.relu, "tanh": ops.tanh, "silu": ops.silu}


class Linear:
    """``x @ W + b`` over the last axis of ``x``."""

    def __init__(
        self,
        store: ParameterStore,
        in_dim: int,
        out_dim: int,
        bias: bool = True,
        zero_init: bool = False,
    ) -> None:
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = store.create("weight", (in_dim, out_dim), init="zeros" if zero_init else "glorot")
        self.bias = store.create("bias", (out_dim,), init="zeros") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ops.matmul(x, self.weight)
        return ops.add(out, self.bias) if self.bias is not None else out


class MLP:
    """Stack of Linear layers with an activation between them."""

    def __init__(
        self,
        store: ParameterStore,
        dims: Sequence[int],
        activation: str = "relu",
        final_activation: bool = False,
        zero_init_last: bool = False,
    ) -> None:
        if len(dims) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self._activation = _ACTIVATIONS[activation]
        self._final_activation = final_activation
        last = len(dims) - 2
        self.layers = [
            Linear(store.child(f"layer{i}"), dims[i], dims[i + 1], zero_init=zero_init_last and i == last)
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self._final_activation:
                x = self._activation(x)
        return x


class LayerNorm:
    def __init__(self, store: ParameterStore, dim: int, affine: bool = True) -> None:
        self.gamma = store.create("gamma", (dim,), init="ones") if affine else None
        self.beta = store.create("beta", (dim,), init="zeros") if affine else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta)
