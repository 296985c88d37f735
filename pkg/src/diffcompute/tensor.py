"""
Tensor and computation tape of the reverse-mode differentiation core.

A ``Tensor`` wraps a read-only float64 array. Operations executed while a
``ComputationTape`` is active (``with ComputationTape() as tape:``) append a
``TapeRecord`` holding the output, the inputs and a local gradient rule;
``tape.backward(loss)`` walks the records in reverse and returns a
``GradientMap``. Outside an active tape nothing is recorded, which is how
inference runs.

The active tape lives in a ``ContextVar``, so every thread (and every
thread-pool worker) starts without one.
"""

from contextvars import ContextVar, Token
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from src.errors import ContractError, DimensionError, NumericalError

GradientRule = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_ACTIVE_TAPE: ContextVar["ComputationTape | None"] = ContextVar("dmtp_active_tape", default=None)


class Tensor:
    """Immutable float64 array with an optional ``requires_grad`` flag.

    Only leaf parameters are ever rewritten, through ``assign``, by the
    optimizer and the checkpoint loader.
    """

    __slots__ = ("_data", "requires_grad", "name")
    __array_priority__ = 100.0
    __array_ufunc__ = None

    def __init__(self, data: Any, requires_grad: bool = False, name: str = "") -> None:
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self._data = array
        self.requires_grad = requires_grad
        self.name = name

    # ------------------------------------------------------------------
    # Array access
    # ------------------------------------------------------------------

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return np.array(self._data)

    def item(self) -> float:
        if self._data.size != 1:
            raise ContractError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self._data.reshape(()))

    def assign(self, values: np.ndarray) -> None:
        """Replace the values of a leaf parameter in place (same shape)."""
        array = np.array(values, dtype=np.float64)
        if array.shape != self._data.shape:
            raise DimensionError(f"cannot assign shape {array.shape} to tensor of shape {self.shape}")
        array.setflags(write=False)
        self._data = array

    def detach(self) -> "Tensor":
        """Constant copy that gradients do not flow through."""
        return Tensor(self._data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # ------------------------------------------------------------------
    # Operator sugar (rules live in ops)
    # ------------------------------------------------------------------

    def __add__(self, other: Any) -> "Tensor":
        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return ops.subtract(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return ops.subtract(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return ops.multiply(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return ops.multiply(other, self)

    def __truediv__(self, other: float) -> "Tensor":
        return ops.divide(self, other)

    def __neg__(self) -> "Tensor":
        return ops.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return ops.matmul(self, other)

    def __getitem__(self, key: Any) -> "Tensor":
        return ops.getitem(self, key)

    @property
    def T(self) -> "Tensor":
        return ops.transpose(self)


@dataclass(frozen=True)
class TapeRecord:
    """One executed operation."""

    op: str
    output: Tensor
    inputs: tuple[Tensor, ...]
    rule: GradientRule


class GradientMap:
    """Gradients keyed by tensor identity; tensors never reached get zeros."""

    def __init__(self, grads: dict[int, np.ndarray]) -> None:
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._grads.get(id(tensor))
        if grad is None:
            return np.zeros(tensor.shape, dtype=np.float64)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._grads

    def for_parameters(self, params: Iterable[tuple[str, Tensor]]) -> dict[str, np.ndarray]:
        """Gradient arrays for named parameters."""
        return {name: self[tensor] for name, tensor in params}


class ComputationTape:
    """Ordered record of operations; single owner, never shared across threads."""

    def __init__(self) -> None:
        self.records: list[TapeRecord] = []
        self._token: Token | None = None

    def __enter__(self) -> "ComputationTape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, entry: TapeRecord) -> None:
        self.records.append(entry)

    def backward(self, loss: Tensor) -> GradientMap:
        return backward(self, loss)


class no_tape:
    """Context manager that suspends recording (inference inside a training step)."""

    def __enter__(self) -> None:
        self._token = _ACTIVE_TAPE.set(None)

    def __exit__(self, *exc_info: object) -> None:
        _ACTIVE_TAPE.reset(self._token)


def make_result(value: np.ndarray, inputs: Sequence[Tensor], rule: GradientRule, op: str) -> Tensor:
    """Wrap a forward value and record it on the active tape when needed.

    Raises:
        NumericalError: If finite inputs produced a non-finite output.
    """
    if not np.all(np.isfinite(value)) and all(np.all(np.isfinite(t.data)) for t in inputs):
        raise NumericalError(f"{op} produced non-finite values from finite inputs")
    tape = _ACTIVE_TAPE.get()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=tracked)
    if tracked:
        tape.record(TapeRecord(op=op, output=out, inputs=tuple(inputs), rule=rule))
    return out


def backward(tape: ComputationTape, loss: Tensor) -> GradientMap:
    """Reverse traversal of ``tape`` from a scalar ``loss``.

    Raises:
        ContractError: If ``loss`` is not a finite scalar.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.item()):
        raise ContractError("backward needs a finite loss")

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=np.float64)}
    for entry in reversed(tape.records):
        upstream = grads.get(id(entry.output))
        if upstream is None:
            continue
        local = entry.rule(upstream)
        for tensor, grad in zip(entry.inputs, local):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = np.array(grad, dtype=np.float64)
    return GradientMap(grads)


# Late import: ops needs Tensor and make_result from this module.
from src.diffcompute import ops  # noqa: E402
