"""
Temporal-Spatial Fusion Attention.

Tokens ``(A, T, D)`` are fused with the projected scenario latent and a
learned step embedding, then pass temporal self-attention (each agent over
its own observed steps, invalid steps masked) followed by spatial
self-attention (agents at the same step). A feed-forward block, a masked
mean over valid steps and an MLP head give one context vector per agent.
No positional signal is added along the agent axis.
"""

from dataclasses import dataclass

import numpy as np

from src.diffcompute import Tensor
from src.diffcompute import ops
from src.encoder.embedding import broadcast_rows
from src.nn.attention import MultiHeadAttention
from src.nn.layers import MLP, LayerNorm, Linear
from src.nn.parameters import ParameterStore


@dataclass(frozen=True)
class FusionOutput:
    context: Tensor  # (A, D)
    tokens: Tensor  # (A, T, D)
    temporal_weights: np.ndarray | None  # (A, H, T, T)
    spatial_weights: np.ndarray | None  # (T, H, A, A)


class TemporalSpatialFusion:
    def __init__(
        self,
        store: ParameterStore,
        d_model: int,
        num_heads: int,
        d_latent: int,
        t_obs: int,
        attention: bool = True,
    ) -> None:
        self.use_attention = attention
        self.step_table = store.create("step_table", (t_obs, d_model), init="normal", scale=0.1)
        self.latent_proj = Linear(store.child("latent"), d_latent, d_model)
        self.temporal_norm = LayerNorm(store.child("temporal_norm"), d_model)
        self.temporal = MultiHeadAttention(store.child("temporal"), d_model, num_heads)
        self.spatial_norm = LayerNorm(store.child("spatial_norm"), d_model)
        self.spatial = MultiHeadAttention(store.child("spatial"), d_model, num_heads)
        self.ffn_norm = LayerNorm(store.child("ffn_norm"), d_model)
        self.ffn = MLP(store.child("ffn"), [d_model, 2 * d_model, d_model])
        self.head = MLP(store.child("head"), [d_model, d_model, d_model])

    def __call__(self, tokens: Tensor, latents: Tensor | np.ndarray, valid: np.ndarray) -> FusionOutput:
        """Fuse and pool.

        Args:
            tokens: (A, T, D) predicted-agent embeddings after the formers.
            latents: (A, D_latent) scenario latents of the predicted agents.
            valid: (A, T) validity of observed steps.
        """
        agents, steps, _ = tokens.shape
        valid = np.asarray(valid, dtype=bool)
        h = tokens + broadcast_rows(self.latent_proj(ops.as_tensor(latents)), steps) + self.step_table

        temporal_weights = spatial_weights = None
        if self.use_attention:
            normed = self.temporal_norm(h)
            temporal = self.temporal(normed, normed, valid)
            h = h + temporal.output
            temporal_weights = temporal.weights

            by_step = ops.transpose(h, (1, 0, 2))
            normed = self.spatial_norm(by_step)
            spatial = self.spatial(normed, normed, valid.T)
            h = ops.transpose(by_step + spatial.output, (1, 0, 2))
            spatial_weights = spatial.weights

        h = h + self.ffn(self.ffn_norm(h))

        counts = np.maximum(valid.sum(axis=1, keepdims=True), 1)
        pool = (valid / counts)[..., None]
        pooled = ops.sum(ops.multiply(h, pool), axis=1)
        return FusionOutput(
            context=self.head(pooled),
            tokens=h,
            temporal_weights=temporal_weights,
            spatial_weights=spatial_weights,
        )
