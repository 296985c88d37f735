"""
Agent embeddings: positional MLP over observed states and agent type, plus
the projected scenario latent.
"""

import numpy as np

from src.diffcompute import Tensor
from src.diffcompute import ops
from src.errors import ShapeError
from src.models.models import AGENT_TYPES
from src.nn.layers import MLP, Linear
from src.nn.parameters import ParameterStore
from src.predictor.features import HISTORY_FEATURES, SceneFeatures


def broadcast_rows(rows: Tensor, steps: int) -> Tensor:
    """(N, D) -> (N, steps, D) by repeating every row over a new time axis."""
    expanded = ops.reshape(rows, (rows.shape[0], 1, rows.shape[1]))
    return ops.gather(expanded, np.zeros(steps, dtype=np.intp), axis=1)


class AgentEmbedder:
    """Per-agent, per-observed-step embedding of size ``d_model``."""

    def __init__(self, store: ParameterStore, d_model: int, d_latent: int) -> None:
        type_dim = max(4, d_model // 4)
        self.type_table = store.create("type_table", (len(AGENT_TYPES), type_dim), init="normal", scale=0.5)
        self.positional = MLP(store.child("positional"), [HISTORY_FEATURES + type_dim, d_model, d_model])
        self.latent_proj = Linear(store.child("latent"), d_latent, d_model)
        self.d_latent = d_latent

    def __call__(self, features: SceneFeatures, latents: Tensor | np.ndarray) -> Tensor:
        """Embed every track of the scene.

        Args:
            features: Featurised scene.
            latents: (N, D_latent) scenario latent, one row per track in track order.

        Returns:
            (N, T_obs, d_model) tensor, zero at invalid steps.

        Raises:
            ShapeError: If the latent rows do not line up with the scene's tracks.
        """
        latents = ops.as_tensor(latents)
        if latents.shape != (features.num_agents, self.d_latent):
            raise ShapeError(
                f"latent shape {latents.shape} does not match {features.num_agents} agents x {self.d_latent}"
            )
        steps = features.t_obs
        type_ids = np.repeat(features.agent_types[:, None], steps, axis=1)
        type_emb = ops.gather(self.type_table, type_ids, axis=0)
        stacked = ops.concat([Tensor(features.history), type_emb], axis=-1)
        embedded = self.positional(stacked) + broadcast_rows(self.latent_proj(latents), steps)
        mask = features.history_valid[..., None].astype(np.float64)
        return ops.multiply(embedded, mask)
