"""
Adaptive-moment optimizer and global-norm gradient clipping over named
parameters.
"""

from typing import Sequence

import numpy as np

from src.diffcompute import Tensor


def first_non_finite(grads: dict[str, np.ndarray]) -> str | None:
    """Name of the first gradient holding NaN or infinity, if any."""
    return next((name for name, g in grads.items() if not np.all(np.isfinite(g))), None)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale every gradient by ``min(1, max_norm / ||g||)`` over the joint norm.

    Returns:
        The (possibly rescaled) gradients and the norm before clipping.
    """
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total <= max_norm or total == 0.0:
        return grads, total
    factor = max_norm / total
    return {name: g * factor for name, g in grads.items()}, total


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(
        self,
        params: Sequence[tuple[str, Tensor]],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {name: np.zeros(t.shape) for name, t in self.params}
        self._v = {name: np.zeros(t.shape) for name, t in self.params}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        """Apply one update; parameters missing from ``grads`` get a zero gradient."""
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1**self.step_count
        correction2 = 1.0 - b2**self.step_count
        for name, tensor in self.params:
            g = grads.get(name)
            if g is None:
                g = np.zeros(tensor.shape)
            self._m[name] = b1 * self._m[name] + (1.0 - b1) * g
            self._v[name] = b2 * self._v[name] + (1.0 - b2) * g * g
            m_hat = self._m[name] / correction1
            v_hat = self._v[name] / correction2
            tensor.assign(tensor.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))
