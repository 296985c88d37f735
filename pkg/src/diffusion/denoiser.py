"""
Noise-prediction network and the future-latent encoder.

The denoiser maps ``(x_t, t, condition)`` to ``eps_hat`` for every agent of
a scene at once. Each residual block mixes in the mean over agents, so all
agents are denoised jointly while row order stays equivariant. Its output
layer starts at zero, so a fresh denoiser predicts ``eps_hat = 0``.
"""

import numpy as np

from src.diffcompute import Tensor
from src.diffcompute import ops
from src.errors import ShapeError
from src.nn.layers import MLP, LayerNorm, Linear
from src.nn.parameters import ParameterStore


def sinusoidal_table(rows: int, width: int) -> np.ndarray:
    """Transformer-style sinusoidal embedding of step indices ``0..rows-1``."""
    positions = np.arange(rows)[:, None]
    freqs = np.exp(-np.log(10000.0) * (np.arange(0, width, 2) / max(width, 1)))
    table = np.zeros((rows, width))
    table[:, 0::2] = np.sin(positions * freqs)
    table[:, 1::2] = np.cos(positions * freqs[: width // 2])
    return table


class _ResidualBlock:
    def __init__(self, store: ParameterStore, hidden: int) -> None:
        self.norm = LayerNorm(store.child("norm"), hidden)
        self.fc1 = Linear(store.child("fc1"), hidden, hidden)
        self.fc2 = Linear(store.child("fc2"), hidden, hidden)
        self.mix = Linear(store.child("mix"), hidden, hidden)

    def __call__(self, h: Tensor) -> Tensor:
        normed = self.norm(h)
        local = self.fc2(ops.relu(self.fc1(normed)))
        scene = ops.mean(self.mix(normed), axis=0, keepdims=True)
        shared = ops.gather(scene, np.zeros(h.shape[0], dtype=np.intp), axis=0)
        return h + local + shared


class Denoiser:
    """Conditional epsilon-prediction network (the DenoiserParams holder)."""

    def __init__(
        self,
        store: ParameterStore,
        d_latent: int,
        condition_dim: int,
        hidden: int,
        blocks: int,
        diffusion_steps: int,
        preview_steps: int,
    ) -> None:
        self.d_latent = d_latent
        self.condition_dim = condition_dim
        self.preview_steps = preview_steps
        self.time_table = store.create("time_table", (diffusion_steps + 1, hidden), init="zeros")
        self.time_table.assign(sinusoidal_table(diffusion_steps + 1, hidden))
        self.in_proj = Linear(store.child("in"), d_latent, hidden)
        self.cond_mlp = MLP(store.child("cond"), [condition_dim, hidden, hidden])
        self.blocks = [_ResidualBlock(store.child(f"block{i}"), hidden) for i in range(blocks)]
        self.out_norm = LayerNorm(store.child("out_norm"), hidden)
        self.out = Linear(store.child("out"), hidden, d_latent, zero_init=True)
        # Linear preview decoder of a latent into positions (m), used by the kinematic penalty.
        self.preview = Linear(store.child("preview"), d_latent, preview_steps * 2, bias=False)
        self.preview.weight.assign(store.rng.normal(0.0, 0.01 / np.sqrt(d_latent), size=(d_latent, preview_steps * 2)))

    def predict_noise(self, x_t: Tensor, t: int, condition: Tensor | np.ndarray) -> Tensor:
        """``eps_hat`` with the shape of ``x_t``.

        Raises:
            ShapeError: If condition rows differ from latent rows or widths are wrong.
        """
        condition = ops.as_tensor(condition)
        if x_t.ndim != 2 or x_t.shape[1] != self.d_latent:
            raise ShapeError(f"latent shape {x_t.shape} does not match d_latent {self.d_latent}")
        if condition.shape != (x_t.shape[0], self.condition_dim):
            raise ShapeError(
                f"condition shape {condition.shape} does not match {x_t.shape[0]} agents x {self.condition_dim}"
            )
        rows = x_t.shape[0]
        h = self.in_proj(x_t) + self.cond_mlp(condition)
        h = h + ops.gather(self.time_table, np.full(rows, t, dtype=np.intp), axis=0)
        for block in self.blocks:
            h = block(h)
        return self.out(self.out_norm(h))

    def preview_positions(self, latent: Tensor) -> Tensor:
        """(N, preview_steps, 2) positions decoded linearly from latents."""
        return ops.reshape(self.preview(latent), (latent.shape[0], self.preview_steps, 2))


class FutureLatentEncoder:
    """Clean diffusion target: a layer-normalised embedding of each agent's future."""

    def __init__(self, store: ParameterStore, future_dim: int, hidden: int, d_latent: int) -> None:
        self.mlp = MLP(store.child("mlp"), [future_dim, hidden, d_latent])

    def __call__(self, future_offsets: np.ndarray) -> Tensor:
        return ops.layer_norm(self.mlp(Tensor(future_offsets)))
