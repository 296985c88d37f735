"""
Cross-attention formers injecting one context source into the predicted
agents' embeddings.

Every former is pre-norm: ``q + MHA(LN(q), LN(context))``. Query tensors are
kept in ``(A, T, D)`` layout between formers; each former rearranges them into
the batch layout its context needs:

* social: batched over observed steps, neighbours at the same step as keys,
  masked by neighbour validity;
* map: every (agent, step) query attends over all polyline embeddings;
* sign: batched over observed steps, one key per signal.
"""

from dataclasses import dataclass

import numpy as np

from src.diffcompute import Tensor
from src.diffcompute import ops
from src.nn.attention import MultiHeadAttention
from src.nn.layers import MLP, LayerNorm
from src.nn.parameters import ParameterStore
from src.predictor.features import MAP_FEATURES, SIGNAL_FEATURES

FORMER_KINDS: tuple[str, ...] = ("social", "map", "sign")


@dataclass(frozen=True)
class FormerOutput:
    queries: Tensor
    weights: np.ndarray | None
    no_context: bool = False


class CrossFormer:
    """One multi-head cross-attention block with residual and layer norms."""

    def __init__(self, store: ParameterStore, d_model: int, num_heads: int) -> None:
        self.query_norm = LayerNorm(store.child("query_norm"), d_model)
        self.context_norm = LayerNorm(store.child("context_norm"), d_model)
        self.attention = MultiHeadAttention(store.child("attention"), d_model, num_heads)

    def __call__(self, queries: Tensor, context: Tensor, key_mask: np.ndarray | None = None) -> FormerOutput:
        result = self.attention(self.query_norm(queries), self.context_norm(context), key_mask)
        return FormerOutput(queries=queries + result.output, weights=result.weights)


def cross_former(
    former: CrossFormer | None,
    queries: Tensor,
    context: Tensor | None,
    key_mask: np.ndarray | None = None,
) -> FormerOutput:
    """Apply ``former`` unless it is disabled (``None``) or the context is empty.

    A disabled former returns ``queries`` itself. An enabled former with no
    context also returns ``queries`` itself and raises the no-context flag.
    """
    if former is None:
        return FormerOutput(queries=queries, weights=None)
    if context is None or context.shape[1] == 0:
        return FormerOutput(queries=queries, weights=None, no_context=True)
    return former(queries, context, key_mask)


class PolylineEmbedder:
    """Per-polyline embedding: point-wise MLP mean-pooled over sampled points."""

    def __init__(self, store: ParameterStore, d_model: int) -> None:
        self.mlp = MLP(store.child("mlp"), [MAP_FEATURES, d_model, d_model])

    def __call__(self, map_points: np.ndarray) -> Tensor:
        return ops.mean(self.mlp(Tensor(map_points)), axis=1)


class SignalEmbedder:
    """Per-signal, per-step embedding of the one-hot state and signal position."""

    def __init__(self, store: ParameterStore, d_model: int) -> None:
        self.mlp = MLP(store.child("mlp"), [SIGNAL_FEATURES, d_model, d_model])

    def __call__(self, signals: np.ndarray) -> Tensor:
        return self.mlp(Tensor(signals))


def to_step_major(tokens: Tensor) -> Tensor:
    """(A, T, D) <-> (T, A, D)."""
    return ops.transpose(tokens, (1, 0, 2))


def social_former(
    former: CrossFormer | None,
    queries: Tensor,
    neighbors: Tensor | None,
    neighbor_valid: np.ndarray,
) -> FormerOutput:
    """Predicted agents attend to the neighbours observed at the same step.

    Args:
        queries: (A, T, D) predicted-agent embeddings.
        neighbors: (Nn, T, D) neighbour embeddings.
        neighbor_valid: (Nn, T) neighbour validity.
    """
    if former is None or neighbors is None or neighbors.shape[0] == 0:
        return cross_former(former, queries, None)
    out = cross_former(former, to_step_major(queries), to_step_major(neighbors), np.asarray(neighbor_valid).T)
    return FormerOutput(queries=to_step_major(out.queries), weights=out.weights)


def map_former(former: CrossFormer | None, queries: Tensor, polylines: Tensor | None) -> FormerOutput:
    """Every (agent, step) query attends over all polyline embeddings (M, D)."""
    if former is None or polylines is None or polylines.shape[0] == 0:
        return cross_former(former, queries, None)
    agents, steps, width = queries.shape
    flat = ops.reshape(queries, (1, agents * steps, width))
    context = ops.reshape(polylines, (1, polylines.shape[0], width))
    out = cross_former(former, flat, context)
    return FormerOutput(queries=ops.reshape(out.queries, (agents, steps, width)), weights=out.weights)


def sign_former(former: CrossFormer | None, queries: Tensor, signals: Tensor | None) -> FormerOutput:
    """Predicted agents attend to the signal states observed at the same step.

    Args:
        signals: (S, T, D) signal embeddings.
    """
    if former is None or signals is None or signals.shape[0] == 0:
        return cross_former(former, queries, None)
    out = cross_former(former, to_step_major(queries), to_step_major(signals))
    return FormerOutput(queries=to_step_major(out.queries), weights=out.weights)
