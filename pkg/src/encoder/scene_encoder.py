"""
Scene encoder: agents -> social former -> map former -> sign former -> TSFA.

Components switched off in the ``AblationMask`` are not built at all, so a
disabled former is an identity on its input and owns no parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from src.config.train_config import AblationMask, ModelConfig
from src.diffcompute import Tensor
from src.diffcompute import ops
from src.encoder.embedding import AgentEmbedder
from src.encoder.formers import (
    CrossFormer,
    FormerOutput,
    PolylineEmbedder,
    SignalEmbedder,
    map_former,
    sign_former,
    social_former,
)
from src.encoder.tsfa import FusionOutput, TemporalSpatialFusion
from src.errors import ShapeError
from src.nn.parameters import ParameterStore
from src.predictor.features import SceneFeatures


@dataclass(frozen=True)
class SceneEncoding:
    """Encoder output for the predicted agents of one scene.

    Attributes:
        context: (A, D) context vector per predicted agent.
        tokens: (A, T_obs, D) fused per-step tokens.
        attention: Attention weights by component name (``social``, ``map``,
            ``sign``, ``temporal``, ``spatial``), present only when computed.
        no_context: Formers that were enabled but found no context.
    """

    agent_ids: tuple[str, ...]
    context: Tensor
    tokens: Tensor
    attention: dict[str, np.ndarray] = field(default_factory=dict)
    no_context: frozenset[str] = frozenset()


class SceneEncoder:
    def __init__(self, store: ParameterStore, config: ModelConfig, mask: AblationMask) -> None:
        d, heads = config.d_model, config.num_heads
        self.config = config
        self.mask = mask
        self.embedder = AgentEmbedder(store.child("agents"), d, config.d_latent)
        self.social = CrossFormer(store.child("social"), d, heads) if mask.social_former else None
        self.map = CrossFormer(store.child("map"), d, heads) if mask.map_former else None
        self.polylines = PolylineEmbedder(store.child("polylines"), d) if mask.map_former else None
        self.sign = CrossFormer(store.child("sign"), d, heads) if mask.sign_former else None
        self.signals = SignalEmbedder(store.child("signals"), d) if mask.sign_former else None
        self.fusion = TemporalSpatialFusion(
            store.child("tsfa"),
            d,
            heads,
            config.d_latent,
            config.t_obs,
            attention=mask.spatial_temporal_attention,
        )

    def embed_agents(self, features: SceneFeatures, latents: Tensor | np.ndarray) -> Tensor:
        """(N, T_obs, D) embeddings of every track."""
        return self.embedder(features, latents)

    def tsfa(self, tokens: Tensor, latents: Tensor | np.ndarray, valid: np.ndarray) -> FusionOutput:
        return self.fusion(tokens, latents, valid)

    def encode(self, features: SceneFeatures, latents: Tensor | np.ndarray) -> SceneEncoding:
        """Encode ``features`` with the scenario ``latents`` (N, D_latent).

        Raises:
            ShapeError: If the scene has no predicted agent or the latents are misaligned.
        """
        if features.predicted.size == 0:
            raise ShapeError(f"scene {features.scene_id} has no predicted agent")
        if features.t_obs != self.config.t_obs:
            raise ShapeError(f"scene observes {features.t_obs} steps, model expects {self.config.t_obs}")
        latents = ops.as_tensor(latents)
        embedded = self.embed_agents(features, latents)
        queries = ops.gather(embedded, features.predicted, axis=0)
        attention: dict[str, np.ndarray] = {}
        no_context: set[str] = set()

        neighbors = ops.gather(embedded, features.neighbors, axis=0) if features.neighbors.size else None
        out = social_former(self.social, queries, neighbors, features.history_valid[features.neighbors])
        queries = self._collect("social", out, attention, no_context)

        polylines = None
        if self.polylines is not None and len(features.map_points):
            polylines = self.polylines(features.map_points)
        queries = self._collect("map", map_former(self.map, queries, polylines), attention, no_context)

        signals = None
        if self.signals is not None and len(features.signals):
            signals = self.signals(features.signals)
        queries = self._collect("sign", sign_former(self.sign, queries, signals), attention, no_context)

        predicted_valid = features.history_valid[features.predicted]
        fused = self.tsfa(queries, ops.gather(latents, features.predicted, axis=0), predicted_valid)
        if fused.temporal_weights is not None:
            attention["temporal"] = fused.temporal_weights
            attention["spatial"] = fused.spatial_weights
        return SceneEncoding(
            agent_ids=tuple(features.agent_ids[i] for i in features.predicted),
            context=fused.context,
            tokens=fused.tokens,
            attention=attention,
            no_context=frozenset(no_context),
        )

    @staticmethod
    def _collect(name: str, out: FormerOutput, attention: dict[str, np.ndarray], no_context: set[str]) -> Tensor:
        if out.weights is not None:
            attention[name] = out.weights
        if out.no_context:
            no_context.add(name)
        return out.queries
