"""
Kolmogorov-Arnold layer: a learnable B-spline plus a SiLU base term on every
input/output edge.

    y_j = sum_i  w_base[i, j] * silu(x_i) + sum_m coef[i, j, m] * B_m(x_i)

The spline grid has ``grid_size`` intervals on ``[-grid_range, grid_range]``
and is extended by ``order`` knots on each side, giving ``grid_size + order``
basis functions. Inputs outside the grid are clamped to it; the layer counts
them in ``clamped_inputs``.
"""

import numpy as np

from src.diffcompute import Tensor
from src.diffcompute import ops
from src.errors import ConfigError, ShapeError
from src.nn.parameters import ParameterStore


def extended_grid(grid_size: int, order: int, grid_range: float) -> np.ndarray:
    """Uniform knots covering the grid plus ``order`` extra intervals per side."""
    if grid_size < 1 or order < 0 or grid_range <= 0:
        raise ConfigError(f"invalid KAN grid: size {grid_size}, order {order}, range {grid_range}")
    step = 2.0 * grid_range / grid_size
    lo, hi = -grid_range - order * step, grid_range + order * step
    return np.linspace(lo, hi, grid_size + 2 * order + 1)


class KanLayer:
    def __init__(
        self,
        store: ParameterStore,
        in_dim: int,
        out_dim: int,
        grid_size: int,
        order: int,
        grid_range: float,
        zero_init: bool = False,
    ) -> None:
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.order = order
        self.grid_range = grid_range
        self.knots = extended_grid(grid_size, order, grid_range)
        self.num_bases = grid_size + order
        self.coef = store.create(
            "coef", (in_dim, out_dim, self.num_bases), init="zeros" if zero_init else "normal", scale=0.1
        )
        self.w_base = store.create("w_base", (in_dim, out_dim), init="zeros" if zero_init else "glorot")
        self.clamped_inputs = 0

    def __call__(self, x: Tensor) -> Tensor:
        """Apply the layer over the last axis of ``x``."""
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"KAN input width {x.shape[-1]}, expected {self.in_dim}")
        lead = x.shape[:-1]
        rows = int(np.prod(lead)) if lead else 1
        flat = ops.reshape(x, (rows, self.in_dim))
        self.clamped_inputs += int(np.count_nonzero(np.abs(flat.data) > self.grid_range))

        bases = ops.bspline_basis(flat, self.knots, self.order)
        spline_in = ops.reshape(bases, (rows, self.in_dim * self.num_bases))
        weights = ops.reshape(ops.transpose(self.coef, (0, 2, 1)), (self.in_dim * self.num_bases, self.out_dim))
        out = ops.matmul(ops.silu(flat), self.w_base) + ops.matmul(spline_in, weights)
        return ops.reshape(out, lead + (self.out_dim,))

