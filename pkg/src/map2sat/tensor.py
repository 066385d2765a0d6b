"""Rank-4 tensor storage and the named parameter store.

Every value in the library is a ``Tensor4``: a contiguous array laid out
batch x height x width x channels. Training state lives in ``ParamStore``
objects, which pair each named tensor with a gradient buffer of the same
shape.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor extents do not satisfy an operation's contract."""


_ALLOWED_DTYPES = (np.float32, np.float64)


class Tensor4:
    """A rank-4 float tensor (batch, height, width, channels).

    Storage is float32 by default; float64 is supported so numerical
    checks can run the exact same code path in higher precision.
    Values are treated as immutable once produced by an op. Parameters
    additionally carry a ``grad`` buffer (created by ``ParamStore``).
    """

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data)
        if arr.ndim != 4:
            raise ShapeError(f"Tensor4 requires rank 4, got shape {arr.shape}")
        if arr.dtype.type not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @classmethod
    def zeros(cls, dims, dtype=np.float32) -> "Tensor4":
        return cls(np.zeros(dims, dtype=dtype))

    @classmethod
    def full(cls, dims, value, dtype=np.float32) -> "Tensor4":
        return cls(np.full(dims, value, dtype=dtype))

    @classmethod
    def scalar(cls, value, dtype=np.float32) -> "Tensor4":
        return cls(np.full((1, 1, 1, 1), value, dtype=dtype))

    def item(self) -> float:
        if self.dims != (1, 1, 1, 1):
            raise ShapeError(f"item() requires a 1x1x1x1 tensor, got {self.dims}")
        return float(self.data.reshape(()))

    def copy(self) -> "Tensor4":
        return Tensor4(self.data.copy())

    def assert_finite(self, what: str = "tensor") -> None:
        if not np.isfinite(self.data).all():
            raise FloatingPointError(f"{what} contains NaN or Inf")

    def __repr__(self) -> str:
        return f"Tensor4(dims={self.dims}, dtype={self.data.dtype})"


def as_leaf(t: Tensor4) -> Tensor4:
    """Attach a gradient buffer so ``backward`` deposits into this tensor.

    Parameters created through ``ParamStore`` already have one; this is
    for ad hoc leaves (e.g. checking gradients with respect to an input).
    """
    t.grad = np.zeros_like(t.data)
    return t


class ParamStore:
    """Ordered, name-keyed collection of trainable tensors with grad buffers.

    Iteration order is insertion order, which makes checkpoint layout and
    init streams deterministic.
    """

    def __init__(self):
        self._entries: dict[str, Tensor4] = {}

    def add(self, name: str, value: Tensor4) -> Tensor4:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name!r}")
        value.grad = np.zeros_like(value.data)
        self._entries[name] = value
        return value

    def __getitem__(self, name: str) -> Tensor4:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor4]]:
        return iter(self._entries.items())

    def zero_grads(self) -> None:
        for t in self._entries.values():
            t.grad[...] = 0.0

    def total_params(self) -> int:
        return sum(t.size for t in self._entries.values())

    def clone_values(self) -> dict[str, np.ndarray]:
        """Snapshot of all parameter values (for bitwise comparisons)."""
        return {k: t.data.copy() for k, t in self._entries.items()}
