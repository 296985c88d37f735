"""
Differentiable operations.

Broadcasting is limited to the leading-batch form: a binary operation
accepts two tensors of equal shape, or one whose shape is a suffix of the
other's (a bias of shape ``(D,)`` added to ``(B, T, D)``). Plain numbers and
numpy arrays are constants; they are broadcast explicitly to the tensor
operand's shape and receive no gradient. Anything else needs an explicit
``reshape``/``gather``.
"""

from typing import Any, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from src.config import settings
from src.diffcompute.tensor import Tensor, make_result
from src.errors import ContractError, DimensionError

# =============================================================================
# Helpers
# =============================================================================


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo a leading-batch broadcast by summing the extra leading axes."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    return grad.reshape(shape)


def _binary_operands(a: Any, b: Any, op: str) -> tuple[Tensor, Tensor, tuple[int, ...]]:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise ContractError(f"{op} needs at least one Tensor operand")
    if not isinstance(a, Tensor):
        a = Tensor(_broadcast_constant(a, b.shape, op))
    if not isinstance(b, Tensor):
        b = Tensor(_broadcast_constant(b, a.shape, op))
    if a.shape == b.shape:
        return a, b, a.shape
    if _is_suffix(b.shape, a.shape):
        return a, b, a.shape
    if _is_suffix(a.shape, b.shape):
        return a, b, b.shape
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible")


def _is_suffix(short: tuple[int, ...], long: tuple[int, ...]) -> bool:
    return len(short) < len(long) and long[len(long) - len(short):] == short


def _broadcast_constant(value: Any, shape: tuple[int, ...], op: str) -> np.ndarray:
    try:
        return np.broadcast_to(np.asarray(value, dtype=np.float64), shape)
    except ValueError as error:
        raise DimensionError(f"{op}: constant of shape {np.shape(value)} cannot fill {shape}") from error


def _normalize_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"{op}: axis {axis} out of range for rank {ndim}")
    return axis % ndim


# =============================================================================
# Elementwise arithmetic
# =============================================================================


def add(a: Any, b: Any) -> Tensor:
    a, b, _ = _binary_operands(a, b, "add")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _sum_to_shape(g, a.shape), _sum_to_shape(g, b.shape)

    return make_result(a.data + b.data, (a, b), rule, "add")


def subtract(a: Any, b: Any) -> Tensor:
    a, b, _ = _binary_operands(a, b, "subtract")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _sum_to_shape(g, a.shape), -_sum_to_shape(g, b.shape)

    return make_result(a.data - b.data, (a, b), rule, "subtract")


def multiply(a: Any, b: Any) -> Tensor:
    a, b, _ = _binary_operands(a, b, "multiply")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _sum_to_shape(g * b.data, a.shape), _sum_to_shape(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), rule, "multiply")


def divide(a: Tensor, scalar: float) -> Tensor:
    """Division by a nonzero constant scalar."""
    if isinstance(scalar, Tensor) or np.ndim(scalar) != 0:
        raise ContractError("divide only supports a constant scalar divisor")
    if scalar == 0:
        raise ContractError("division by zero")
    factor = 1.0 / float(scalar)
    return make_result(a.data * factor, (a,), lambda g: (g * factor,), "divide")


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


# =============================================================================
# Linear algebra and shape manipulation
# =============================================================================


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    Supports ``(m, k) @ (k, n)``, a batched left operand ``(..., m, k) @ (k, n)``
    and equal-batch products ``(..., m, k) @ (..., k, n)``.

    Raises:
        DimensionError: Naming both shapes when they do not agree.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not agree")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch shapes of {a.shape} and {b.shape} differ")

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2 and a.ndim > 2:
            flat_a = a.data.reshape(-1, a.shape[-1])
            flat_g = g.reshape(-1, g.shape[-1])
            grad_b = flat_a.T @ flat_g
        else:
            grad_b = np.swapaxes(a.data, -1, -2) @ g
        return grad_a, grad_b

    return make_result(a.data @ b.data, (a, b), rule, "matmul")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    perm = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    if sorted(perm) != list(range(a.ndim)):
        raise DimensionError(f"transpose: {perm} is not a permutation of rank {a.ndim}")
    inverse = tuple(np.argsort(perm))
    return make_result(np.transpose(a.data, perm), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        value = a.data.reshape(tuple(shape))
    except ValueError as error:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from error
    return make_result(value, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(tensors: Sequence[Any], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat needs at least one tensor")
    axis = _normalize_axis(axis, parts[0].ndim, "concat")
    try:
        value = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as error:
        shapes = ", ".join(str(p.shape) for p in parts)
        raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}") from error
    offsets = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def rule(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, offsets, axis=axis)

    return make_result(value, parts, rule, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack equal-shape tensors along a new axis (concat of reshaped inputs)."""
    if not tensors:
        raise ContractError("stack needs at least one tensor")
    base = tensors[0].shape
    axis = axis % (len(base) + 1)
    expanded = [reshape(t, base[:axis] + (1,) + base[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def _is_basic_index(key: Any) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(a: Tensor, key: Any) -> Tensor:
    """Slice or fancy-index a tensor."""
    try:
        value = a.data[key]
    except IndexError as error:
        raise DimensionError(f"index {key!r} invalid for shape {a.shape}") from error
    basic = _is_basic_index(key)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(a.shape, dtype=np.float64)
        if basic:
            grad[key] += g
        else:
            np.add.at(grad, key, g)
        return (grad,)

    return make_result(np.array(value), (a,), rule, "getitem")


def gather(a: Tensor, indices: Any, axis: int = 0) -> Tensor:
    """Select entries of ``a`` along ``axis``; the index array may have any shape.

    The result has shape ``a.shape[:axis] + indices.shape + a.shape[axis+1:]``.
    """
    axis = _normalize_axis(axis, a.ndim, "gather")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis]):
        raise DimensionError(f"gather: index out of range for axis {axis} of {a.shape}")
    flat = idx.reshape(-1)
    taken = np.take(a.data, flat, axis=axis)
    out_shape = a.shape[:axis] + idx.shape + a.shape[axis + 1:]

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(a.shape, dtype=np.float64)
        flat_g = g.reshape(a.shape[:axis] + (flat.size,) + a.shape[axis + 1:])
        np.add.at(np.moveaxis(grad, axis, 0), flat, np.moveaxis(flat_g, axis, 0))
        return (grad,)

    return make_result(taken.reshape(out_shape), (a,), rule, "gather")


def embedding(table: Tensor, ids: Any) -> Tensor:
    """Row lookup ``table[ids]``."""
    return gather(table, ids, axis=0)


# =============================================================================
# Reductions
# =============================================================================


def sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    if axis is not None:
        axis = _normalize_axis(axis, a.ndim, "sum")

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), rule, "sum")


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ContractError(f"mean over an empty axis of shape {a.shape}")
    return divide(sum(a, axis=axis, keepdims=keepdims), count)


def norm(a: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the sub-gradient at the origin is 0."""
    axis = _normalize_axis(axis, a.ndim, "norm")
    value = np.sqrt(np.sum(a.data * a.data, axis=axis))

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        denom = np.expand_dims(value, axis)
        unit = np.divide(a.data, denom, out=np.zeros_like(a.data), where=denom > 0)
        return (np.expand_dims(g, axis) * unit,)

    return make_result(value, (a,), rule, "norm")


# =============================================================================
# Nonlinearities
# =============================================================================


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    axis = _normalize_axis(axis, a.ndim, "softmax")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / np.sum(exps, axis=axis, keepdims=True)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        inner = np.sum(g * probs, axis=axis, keepdims=True)
        return (probs * (g - inner),)

    return make_result(probs, (a,), rule, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis(axis, a.ndim, "log_softmax")
    value = a.data - logsumexp(a.data, axis=axis, keepdims=True)
    probs = np.exp(value)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return make_result(value, (a,), rule, "log_softmax")


def sigmoid(a: Tensor) -> Tensor:
    value = expit(a.data)
    return make_result(value, (a,), lambda g: (g * value * (1.0 - value),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.data)
    return make_result(value, (a,), lambda g: (g * (1.0 - value * value),), "tanh")


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0
    return make_result(np.where(positive, a.data, 0.0), (a,), lambda g: (g * positive,), "relu")


def silu(a: Tensor) -> Tensor:
    """``x * sigmoid(x)``, the fixed base activation of KAN edges."""
    return multiply(a, sigmoid(a))


def square(a: Tensor) -> Tensor:
    return multiply(a, a)


def layer_norm(
    a: Tensor,
    gamma: Tensor | None = None,
    beta: Tensor | None = None,
    eps: float = settings.LAYER_NORM_EPS,
) -> Tensor:
    """Normalize over the last axis, then apply the optional affine map."""
    width = a.shape[-1]
    gamma = gamma if gamma is not None else Tensor(np.ones(width))
    beta = beta if beta is not None else Tensor(np.zeros(width))
    if gamma.shape != (width,) or beta.shape != (width,):
        raise DimensionError(f"layer_norm: affine shapes {gamma.shape}/{beta.shape} for width {width}")

    centered = a.data - a.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_normed = g * gamma.data
        grad_x = inv_std * (
            g_normed
            - g_normed.mean(axis=-1, keepdims=True)
            - normed * (g_normed * normed).mean(axis=-1, keepdims=True)
        )
        return grad_x, _sum_to_shape(g * normed, gamma.shape), _sum_to_shape(g, beta.shape)

    return make_result(normed * gamma.data + beta.data, (a, gamma, beta), rule, "layer_norm")


# =============================================================================
# B-spline basis
# =============================================================================


def bspline_values(x: np.ndarray, knots: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cox-de Boor evaluation of every basis function on ``knots``.

    Inputs outside ``[knots[order], knots[-order-1])`` are clamped to it.

    Returns:
        (bases of ``order``, bases of ``order - 1`` or None-like empty, clamped mask)
    """
    lower = knots[order]
    upper = np.nextafter(knots[-order - 1], -np.inf)
    clamped = (x < lower) | (x > upper)
    xc = np.clip(x, lower, upper)[..., None]

    bases = ((xc >= knots[:-1]) & (xc < knots[1:])).astype(np.float64)
    previous = bases
    for p in range(1, order + 1):
        previous = bases
        left = (xc - knots[: -(p + 1)]) / (knots[p:-1] - knots[: -(p + 1)]) * bases[..., :-1]
        right = (knots[p + 1:] - xc) / (knots[p + 1:] - knots[1:-p]) * bases[..., 1:]
        bases = left + right
    return bases, previous, clamped


def bspline_basis(x: Tensor, knots: np.ndarray, order: int) -> Tensor:
    """Order-``order`` B-spline basis values, shape ``x.shape + (len(knots) - order - 1,)``.

    Differentiable w.r.t. ``x``; the derivative is zero where ``x`` was clamped.
    """
    knots = np.asarray(knots, dtype=np.float64)
    if knots.ndim != 1 or np.any(np.diff(knots) <= 0):
        raise ContractError("bspline knots must be a strictly increasing 1-D array")
    if order < 0 or len(knots) < order + 2:
        raise ContractError(f"need at least {order + 2} knots for order {order}")
    bases, previous, clamped = bspline_values(x.data, knots, order)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        if order == 0:
            return (np.zeros(x.shape),)
        k = order
        slope = k * (
            previous[..., :-1] / (knots[k:-1] - knots[: -(k + 1)])
            - previous[..., 1:] / (knots[k + 1:] - knots[1:-k])
        )
        grad = np.sum(g * slope, axis=-1)
        return (np.where(clamped, 0.0, grad),)

    return make_result(bases, (x,), rule, "bspline_basis")
