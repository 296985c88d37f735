"""
Named parameter storage shared by every network component.

A ``ParameterStore`` owns a flat ``name -> Tensor`` dictionary and the
initialisation generator. ``child(prefix)`` returns a view that creates
parameters under a dotted prefix into the same dictionary, so a model's
components register their weights in one place and the checkpoint layer
sees a single flat namespace.
"""

from typing import Iterator

import numpy as np

from src.diffcompute import Tensor
from src.errors import CheckpointError, ConfigError


class ParameterStore:
    """Flat, ordered registry of trainable tensors."""

    def __init__(self, rng: np.random.Generator, prefix: str = "") -> None:
        self._rng = rng
        self._prefix = prefix
        self._params: dict[str, Tensor] = {}
        self._frozen: set[str] = set()

    def child(self, name: str) -> "ParameterStore":
        """View that registers parameters under ``<prefix>.<name>``."""
        view = ParameterStore.__new__(ParameterStore)
        view._rng = self._rng
        view._prefix = self._qualify(name)
        view._params = self._params
        view._frozen = self._frozen
        return view

    @property
    def rng(self) -> np.random.Generator:
        return self._rng

    # ------------------------------------------------------------------
    # Creation
    # ------------------------------------------------------------------

    def create(self, name: str, shape: tuple[int, ...], init: str = "glorot", scale: float = 1.0) -> Tensor:
        """Create and register a parameter.

        Args:
            name: Local name, qualified by this view's prefix.
            shape: Parameter shape.
            init: ``glorot`` (uniform, fan-in/fan-out from the last two axes),
                ``normal`` (``scale``-scaled standard normal), ``zeros`` or ``ones``.
            scale: Multiplier applied to the random initialisers.
        """
        full_name = self._qualify(name)
        if full_name in self._params:
            raise ConfigError(f"parameter {full_name!r} registered twice")
        if init == "zeros":
            values = np.zeros(shape)
        elif init == "ones":
            values = np.ones(shape)
        elif init == "normal":
            values = scale * self._rng.standard_normal(shape)
        elif init == "glorot":
            fan_in = shape[-2] if len(shape) >= 2 else shape[-1]
            fan_out = shape[-1]
            limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
            values = self._rng.uniform(-limit, limit, size=shape)
        else:
            raise ConfigError(f"unknown initialiser {init!r}")
        tensor = Tensor(values, requires_grad=True, name=full_name)
        self._params[full_name] = tensor
        return tensor

    def freeze(self, prefix: str = "") -> None:
        """Exclude every parameter under ``prefix`` (relative to this view) from training."""
        full_prefix = self._qualify(prefix) if prefix else self._prefix
        for name in self._params:
            if not full_prefix or name == full_prefix or name.startswith(full_prefix + "."):
                self._frozen.add(name)

    # ------------------------------------------------------------------
    # Access
    # ------------------------------------------------------------------

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        """Registered ``(name, tensor)`` pairs in creation order, optionally filtered."""
        return [(n, t) for n, t in self._params.items() if n.startswith(prefix)]

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self._params.items() if n not in self._frozen]

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())

    # ------------------------------------------------------------------
    # State
    # ------------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: tensor.numpy() for name, tensor in self._params.items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite every parameter from ``arrays``.

        Raises:
            CheckpointError: On missing, unexpected or mis-shaped entries.
        """
        missing = sorted(set(self._params) - set(arrays))
        unexpected = sorted(set(arrays) - set(self._params))
        if missing or unexpected:
            raise CheckpointError(f"parameter mismatch: missing {missing[:3]}, unexpected {unexpected[:3]}")
        for name, tensor in self._params.items():
            values = arrays[name]
            if values.shape != tensor.shape:
                raise CheckpointError(f"parameter {name} has shape {values.shape}, expected {tensor.shape}")
        for name, tensor in self._params.items():
            tensor.assign(arrays[name])

    def _qualify(self, name: str) -> str:
        return f"{self._prefix}.{name}" if self._prefix else name
