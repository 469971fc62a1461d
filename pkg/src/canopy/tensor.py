"""Dense tensor type: the value currency of every numeric operation.

Layout is row-major batch/height/width/channel for images and
batch/feature for vectors.  Data is stored as contiguous float64 and is
frozen after construction; arithmetic accumulates in double precision
regardless of how weights are later serialized.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError

MAX_RANK = 4


class Tensor:
    """Immutable dense array of finite floats, rank 1 to 4."""

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float64, order="C")
        self._install(arr)

    def _install(self, arr: np.ndarray) -> None:
        if arr.ndim == 0 or arr.ndim > MAX_RANK:
            raise ShapeError(
                f"tensor rank must be 1..{MAX_RANK}, got shape {arr.shape}"
            )
        if any(d <= 0 for d in arr.shape):
            raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ShapeError("tensor contains NaN or Inf values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt a freshly computed float64 array without copying."""
        t = object.__new__(cls)
        t._install(np.ascontiguousarray(arr, dtype=np.float64))
        return t

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        return cls._wrap(np.zeros(tuple(shape), dtype=np.float64))

    @classmethod
    def full(cls, shape: Sequence[int], value: float) -> "Tensor":
        return cls._wrap(np.full(tuple(shape), float(value), dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def tolist(self):
        return self.data.tolist()

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def as_f32(values: np.ndarray) -> np.ndarray:
    """Round float64 values to those exactly representable in float32.

    Graph weights are held at single precision so that bundle
    serialization (float32 blobs) round-trips bit-exactly.
    """
    return np.asarray(values, dtype=np.float32).astype(np.float64)
