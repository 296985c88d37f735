"""
Central finite-difference oracles for the analytic gradients.
"""

from typing import Callable, Iterable

import numpy as np

from src.diffcompute.tensor import ComputationTape, Tensor
from src.errors import ContractError


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, step: float = 1e-5) -> float:
    """Compare the tape gradient of scalar ``f`` at ``x`` with central differences.

    Returns:
        max over coordinates of ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if step <= 0:
        raise ContractError("grad_check step must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    probe = Tensor(base, requires_grad=True)
    with ComputationTape() as tape:
        loss = f(probe)
    analytic = tape.backward(loss)[probe]

    numeric = np.zeros_like(base)
    for index in np.ndindex(base.shape):
        shifted = base.copy()
        shifted[index] = base[index] + step
        upper = f(Tensor(shifted)).item()
        shifted[index] = base[index] - step
        lower = f(Tensor(shifted)).item()
        numeric[index] = (upper - lower) / (2.0 * step)
    return _relative_error(analytic, numeric)


def grad_check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Iterable[tuple[str, Tensor]],
    step: float = 1e-5,
    max_coords: int = 6,
    rng: np.random.Generator | None = None,
) -> float:
    """Finite-difference check of ``loss_fn`` w.r.t. named leaf parameters.

    Parameters are perturbed in place and restored. At most ``max_coords``
    coordinates of each parameter are probed; ``loss_fn`` must be
    deterministic (seed any randomness inside it).
    """
    if step <= 0:
        raise ContractError("grad_check step must be positive")
    rng = rng or np.random.default_rng(0)
    named = [(name, tensor) for name, tensor in params if tensor.requires_grad]

    with ComputationTape() as tape:
        loss = loss_fn()
    grads = tape.backward(loss)

    worst = 0.0
    for _, tensor in named:
        analytic = grads[tensor]
        original = tensor.numpy()
        flat_count = original.size
        picks = rng.choice(flat_count, size=min(max_coords, flat_count), replace=False)
        for flat_index in picks:
            index = np.unravel_index(int(flat_index), original.shape)
            shifted = original.copy()
            try:
                shifted[index] = original[index] + step
                tensor.assign(shifted)
                upper = loss_fn().item()
                shifted[index] = original[index] - step
                tensor.assign(shifted)
                lower = loss_fn().item()
            finally:
                tensor.assign(original)
            numeric = (upper - lower) / (2.0 * step)
            error = abs(analytic[index] - numeric) / max(1.0, abs(analytic[index]))
            worst = max(worst, float(error))
    return worst
