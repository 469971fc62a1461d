"""Per-tensor affine int8 weight quantization.

Stored value q maps back to scale * (q - zero_point).  The value range
is widened to include zero so the zero point always fits in int8; an
all-equal tensor picks the scale that puts the value on a full-scale
code, so constants of any magnitude round-trip to within float
rounding.  Round-trip error is bounded by scale / 2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QMIN = -128
QMAX = 127
QLEVELS = QMAX - QMIN  # 255


@dataclass(frozen=True)
class QuantDescriptor:
    scale: float
    zero_point: int
    shape: tuple[int, ...]

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"quantization scale must be positive, got {self.scale}")
        if not QMIN <= self.zero_point <= QMAX:
            raise ValueError(f"zero point {self.zero_point} outside [{QMIN}, {QMAX}]")


@dataclass(frozen=True)
class QuantizedTensor:
    data: np.ndarray  # int8, C-contiguous
    desc: QuantDescriptor

    def __post_init__(self):
        if self.data.dtype != np.int8:
            raise ValueError("quantized storage must be int8")
        if self.data.shape != self.desc.shape:
            raise ValueError(
                f"quantized data shape {self.data.shape} != descriptor {self.desc.shape}"
            )


def quantize_array(values: np.ndarray) -> QuantizedTensor:
    """Quantize a float array to int8 with a per-tensor affine map."""
    arr = np.asarray(values, dtype=np.float64)
    lo = float(arr.min())
    hi = float(arr.max())
    if lo == hi:
        zero_point = 0
        if lo > 0:
            scale = lo / QMAX
        elif lo < 0:
            scale = lo / QMIN
        else:
            scale = 1.0
    else:
        lo = min(lo, 0.0)
        hi = max(hi, 0.0)
        scale = (hi - lo) / QLEVELS
        zero_point = int(np.clip(QMIN - np.rint(lo / scale), QMIN, QMAX))
    q = np.clip(np.rint(arr / scale) + zero_point, QMIN, QMAX).astype(np.int8)
    desc = QuantDescriptor(scale=scale, zero_point=zero_point, shape=arr.shape)
    return QuantizedTensor(data=np.ascontiguousarray(q), desc=desc)


def dequantize(qt: QuantizedTensor) -> np.ndarray:
    """Map stored int8 back to float64: scale * (q - zero_point)."""
    return qt.desc.scale * (qt.data.astype(np.float64) - qt.desc.zero_point)
