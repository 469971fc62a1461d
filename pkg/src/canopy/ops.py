"""Numeric operators for inception-style graphs.

Forward ops plus the analytic gradients for the softmax classifier head.
Everything is a pure function from tensors to tensors, vectorized with
numpy but defined to agree exactly with the naive loop formulations the
test suite checks against.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor

PADDING_MODES = ("same", "valid")


def _check_padding(padding: str) -> None:
    if padding not in PADDING_MODES:
        raise ShapeError(f"padding must be one of {PADDING_MODES}, got {padding!r}")


def _check_stride(stride: tuple[int, int]) -> None:
    if len(stride) != 2 or any(int(s) < 1 for s in stride):
        raise ShapeError(f"stride must be two positive integers, got {stride!r}")


def axis_geometry(in_size: int, window: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Output length plus (before, after) zero padding for one spatial axis.

    `same` pads symmetrically with the extra pixel on the bottom/right;
    `valid` requires the window to fit.
    """
    if padding == "valid":
        if in_size < window:
            raise ShapeError(
                f"window {window} larger than input {in_size} under valid padding"
            )
        return (in_size - window) // stride + 1, 0, 0
    out = -(-in_size // stride)  # ceil
    total = max((out - 1) * stride + window - in_size, 0)
    before = total // 2
    return out, before, total - before


@dataclass(frozen=True)
class ConvSpec:
    """Convolution parameters: kernel [kh, kw, cin, cout], optional bias [cout]."""

    kernel: Tensor
    bias: Optional[Tensor] = None
    stride: tuple[int, int] = (1, 1)
    padding: str = "same"

    def __post_init__(self):
        if self.kernel.data.ndim != 4:
            raise ShapeError(f"conv kernel must be 4-D, got shape {self.kernel.shape}")
        _check_stride(self.stride)
        _check_padding(self.padding)
        if self.bias is not None:
            cout = self.kernel.shape[3]
            if self.bias.shape != (cout,):
                raise ShapeError(
                    f"conv bias shape {self.bias.shape} does not match cout {cout}"
                )


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-time normalization statistics and affine terms, all [c]."""

    mean: Tensor
    variance: Tensor
    gamma: Tensor
    beta: Tensor
    epsilon: float = 1e-3

    def __post_init__(self):
        shapes = {t.shape for t in (self.mean, self.variance, self.gamma, self.beta)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 1:
            raise ShapeError("batch norm parameters must share one 1-D shape")
        if self.epsilon <= 0:
            raise ShapeError(f"epsilon must be positive, got {self.epsilon}")
        if np.any(self.variance.data < 0):
            raise ShapeError("batch norm variance must be nonnegative")

    @property
    def channels(self) -> int:
        return self.mean.shape[0]


def _windows(padded: np.ndarray, window: tuple[int, int], stride: tuple[int, int]) -> np.ndarray:
    """View of all (wh, ww) patches: [b, oh, ow, c, wh, ww]."""
    v = sliding_window_view(padded, window, axis=(1, 2))
    return v[:, :: stride[0], :: stride[1]]


def conv2d(input: Tensor, spec: ConvSpec) -> Tensor:
    """2-D convolution; values equal the direct quadruple-loop definition."""
    if input.data.ndim != 4:
        raise ShapeError(f"conv2d expects a 4-D input, got shape {input.shape}")
    kh, kw, cin, cout = spec.kernel.shape
    b, h, w, c = input.shape
    if c != cin:
        raise ShapeError(
            f"conv2d: input has {c} channels but kernel expects {cin} "
            f"(input {input.shape}, kernel {spec.kernel.shape})"
        )
    _, ph0, ph1 = axis_geometry(h, kh, spec.stride[0], spec.padding)
    _, pw0, pw1 = axis_geometry(w, kw, spec.stride[1], spec.padding)
    padded = np.pad(input.data, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0)))
    win = _windows(padded, (kh, kw), spec.stride)  # [b, oh, ow, c, kh, kw]
    out = np.einsum("bxyckl,klco->bxyo", win, spec.kernel.data, optimize=True)
    if spec.bias is not None:
        out = out + spec.bias.data
    return Tensor._wrap(out)


def pool(
    input: Tensor,
    mode: str,
    window: tuple[int, int],
    stride: tuple[int, int],
    padding: str = "valid",
) -> Tensor:
    """Per-channel max or mean over sliding windows.

    Average pooling under `same` padding divides by the count of
    in-bounds elements, not the window area.
    """
    if input.data.ndim != 4:
        raise ShapeError(f"pool expects a 4-D input, got shape {input.shape}")
    if mode not in ("max", "avg"):
        raise ShapeError(f"pool mode must be 'max' or 'avg', got {mode!r}")
    wh, ww = window
    if wh < 1 or ww < 1:
        raise ShapeError(f"pool window must be positive, got {window!r}")
    _check_stride(stride)
    _check_padding(padding)
    b, h, w, c = input.shape
    _, ph0, ph1 = axis_geometry(h, wh, stride[0], padding)
    _, pw0, pw1 = axis_geometry(w, ww, stride[1], padding)
    pads = ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0))
    if mode == "max":
        padded = np.pad(input.data, pads, constant_values=-np.inf)
        out = _windows(padded, window, stride).max(axis=(4, 5))
    else:
        padded = np.pad(input.data, pads)
        sums = _windows(padded, window, stride).sum(axis=(4, 5))
        ones = np.pad(np.ones((1, h, w, 1)), pads)
        counts = _windows(ones, window, stride).sum(axis=(4, 5))
        out = sums / counts
    return Tensor._wrap(out)


def global_avg_pool(input: Tensor) -> Tensor:
    """Spatial mean per channel: [b, h, w, c] -> [b, c]."""
    if input.data.ndim != 4:
        raise ShapeError(f"global_avg_pool expects a 4-D input, got shape {input.shape}")
    return Tensor._wrap(input.data.mean(axis=(1, 2)))


def relu(input: Tensor) -> Tensor:
    return Tensor._wrap(np.maximum(input.data, 0.0))


def batch_norm(input: Tensor, params: BatchNormParams) -> Tensor:
    """Per channel: gamma * (x - mean) / sqrt(var + eps) + beta."""
    c = input.shape[-1]
    if c != params.channels:
        raise ShapeError(
            f"batch_norm: input has {c} channels but params have {params.channels}"
        )
    scale = params.gamma.data / np.sqrt(params.variance.data + params.epsilon)
    return Tensor._wrap((input.data - params.mean.data) * scale + params.beta.data)


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis; branch data preserved in order."""
    if not inputs:
        raise ShapeError("concat_channels requires at least one input")
    first = inputs[0]
    if first.data.ndim != 4:
        raise ShapeError(f"concat_channels expects 4-D inputs, got shape {first.shape}")
    for t in inputs[1:]:
        if t.data.ndim != 4 or t.shape[:3] != first.shape[:3]:
            raise ShapeError(
                f"concat_channels: spatial shapes differ ({first.shape} vs {t.shape})"
            )
    return Tensor._wrap(np.concatenate([t.data for t in inputs], axis=3))


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ W + b with x [batch, d], W [d, k], b [k]."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise ShapeError(
            f"fully_connected expects x 2-D, W 2-D, b 1-D "
            f"(got {x.shape}, {weight.shape}, {bias.shape})"
        )
    if x.shape[1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise ShapeError(
            f"fully_connected: dimensions disagree "
            f"(x {x.shape}, W {weight.shape}, b {bias.shape})"
        )
    return Tensor._wrap(x.data @ weight.data + bias.data)


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction for stability."""
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax expects a 2-D input, got shape {logits.shape}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return Tensor._wrap(e / e.sum(axis=1, keepdims=True))


PROB_FLOOR = 1e-12


def cross_entropy(probs: Tensor, labels: Sequence[int]) -> float:
    """Mean negative log probability of the true class."""
    if probs.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects 2-D probabilities, got {probs.shape}")
    n, k = probs.shape
    if len(labels) != n:
        raise ShapeError(f"cross_entropy: {len(labels)} labels for {n} rows")
    idx = np.asarray(labels, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise ShapeError(f"cross_entropy: label out of range [0, {k})")
    picked = probs.data[np.arange(n), idx]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def head_gradients(
    features: Tensor, weight: Tensor, bias: Tensor, labels: Sequence[int]
) -> tuple[Tensor, Tensor, float]:
    """Exact gradient of softmax cross-entropy w.r.t. the final layer.

    dlogits = (probs - onehot) / batch; dW = features^T @ dlogits;
    db = column sums of dlogits.
    """
    logits = fully_connected(features, weight, bias)
    probs = softmax(logits)
    loss = cross_entropy(probs, labels)
    n, k = probs.shape
    onehot = np.zeros((n, k))
    onehot[np.arange(n), np.asarray(labels, dtype=np.int64)] = 1.0
    dlogits = (probs.data - onehot) / n
    dw = features.data.T @ dlogits
    db = dlogits.sum(axis=0)
    return Tensor._wrap(dw), Tensor._wrap(db), loss


def resize_bilinear(image: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize, half-pixel centers (sample at (i+0.5)*scale - 0.5)."""
    if image.data.ndim != 4:
        raise ShapeError(f"resize_bilinear expects a 4-D image, got shape {image.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize target must be positive, got {out_h}x{out_w}")
    _, h, w, _ = image.shape

    def coords(out_size: int, in_size: int):
        scale = in_size / out_size
        src = np.clip((np.arange(out_size) + 0.5) * scale - 0.5, 0.0, in_size - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, in_size - 1)
        return lo, hi, src - lo

    y0, y1, fy = coords(out_h, h)
    x0, x1, fx = coords(out_w, w)
    fy = fy[None, :, None, None]
    fx = fx[None, None, :, None]
    d = image.data
    top = d[:, y0][:, :, x0] * (1.0 - fx) + d[:, y0][:, :, x1] * fx
    bottom = d[:, y1][:, :, x0] * (1.0 - fx) + d[:, y1][:, :, x1] * fx
    return Tensor._wrap(top * (1.0 - fy) + bottom * fy)


def normalize_pixels(image: Tensor, mode: str = "symmetric") -> Tensor:
    """Scale [0, 255] pixels to [0, 1] (`unit`) or [-1, 1] (`symmetric`)."""
    if mode == "unit":
        return Tensor._wrap(image.data / 255.0)
    if mode == "symmetric":
        return Tensor._wrap(image.data / 127.5 - 1.0)
    raise ShapeError(f"normalize mode must be 'unit' or 'symmetric', got {mode!r}")
