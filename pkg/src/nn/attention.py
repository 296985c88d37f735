"""
Multi-head scaled dot-product attention.

Queries ``(B, Lq, D)`` attend over keys/values ``(B, Lk, D)``. A boolean
``key_mask`` of shape ``(B, Lk)`` marks usable keys; masked keys get a large
negative score bias so their weight is exactly zero. A query row with no
usable key has its output zeroed (the residual around the block then passes
the query through unchanged).
"""

from dataclasses import dataclass

import numpy as np

from src.diffcompute import Tensor
from src.diffcompute import ops
from src.errors import ShapeError
from src.nn.layers import Linear
from src.nn.parameters import ParameterStore

_MASK_BIAS: float = -1e9


@dataclass(frozen=True)
class AttentionResult:
    output: Tensor  # (B, Lq, D)
    weights: np.ndarray  # (B, H, Lq, Lk)


class MultiHeadAttention:
    def __init__(self, store: ParameterStore, d_model: int, num_heads: int) -> None:
        if d_model % num_heads:
            raise ShapeError(f"d_model {d_model} not divisible by {num_heads} heads")
        self.d_model = d_model
        self.num_heads = num_heads
        self.head_dim = d_model // num_heads
        self.q_proj = Linear(store.child("q"), d_model, d_model)
        self.k_proj = Linear(store.child("k"), d_model, d_model)
        self.v_proj = Linear(store.child("v"), d_model, d_model)
        self.o_proj = Linear(store.child("o"), d_model, d_model)

    def __call__(self, queries: Tensor, keys: Tensor, key_mask: np.ndarray | None = None) -> AttentionResult:
        batch, len_q, width = queries.shape
        if keys.ndim != 3 or keys.shape[0] != batch or keys.shape[2] != width:
            raise ShapeError(f"attention keys {keys.shape} do not match queries {queries.shape}")
        len_k = keys.shape[1]
        heads, head_dim = self.num_heads, self.head_dim

        q = ops.transpose(ops.reshape(self.q_proj(queries), (batch, len_q, heads, head_dim)), (0, 2, 1, 3))
        k = ops.transpose(ops.reshape(self.k_proj(keys), (batch, len_k, heads, head_dim)), (0, 2, 3, 1))
        v = ops.transpose(ops.reshape(self.v_proj(keys), (batch, len_k, heads, head_dim)), (0, 2, 1, 3))

        scores = ops.multiply(ops.matmul(q, k), 1.0 / np.sqrt(head_dim))
        if key_mask is not None:
            key_mask = np.asarray(key_mask, dtype=bool)
            if key_mask.shape != (batch, len_k):
                raise ShapeError(f"key mask {key_mask.shape} does not match keys {(batch, len_k)}")
            bias = np.where(key_mask, 0.0, _MASK_BIAS)[:, None, None, :]
            scores = ops.add(scores, bias)
        weights = ops.softmax(scores, axis=-1)

        context = ops.matmul(weights, v)
        context = ops.reshape(ops.transpose(context, (0, 2, 1, 3)), (batch, len_q, width))
        output = self.o_proj(context)

        if key_mask is not None and not key_mask.any(axis=1).all():
            has_key = key_mask.any(axis=1).astype(np.float64)[:, None, None]
            output = ops.multiply(output, has_key)
        return AttentionResult(output=output, weights=weights.data)
