"""MinMax minifloat quantization.

The quantizer snaps each element to the nearest point of a per-channel
minifloat grid, ties rounding away from zero.  The grid's exponent bias is
derived from the channel's largest magnitude: bias is the unique integer b
with max_val * 2^b <= max|channel| < max_val * 2^(b+1), so the channel max
lands inside the top exponent level (elements above the grid ceiling, at
most 2x, clamp onto it).  An all-zero channel gets bias 0.

The snapping path mirrors how a hardware cast would work: clamp the
magnitude, pick the exponent level by flooring log2, scale into mantissa
units, round half away from zero, scale back.  Scaling uses exact
power-of-two arithmetic (ldexp) so results are bit-reproducible and land
exactly on grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError
from .formats import BiasedFormat, FpFormat
from .tensors import WORKING_DTYPE


@dataclass(frozen=True)
class QuantizedTensor:
    """Fake-quantized values plus the grid they live on.

    values: float64 array, every element exactly on its channel's grid.
    fmt: the minifloat format.
    bias: per-channel integer exponent bias, shape (n_channels,) when
        channel_axis names an axis, 0-d when quantization was per-tensor.
    channel_axis: the axis of `values` the bias vector runs along, or None.
    """

    values: np.ndarray
    fmt: FpFormat
    bias: np.ndarray
    channel_axis: int | None

    def __post_init__(self):
        self.values.setflags(write=False)
        self.bias.setflags(write=False)


def channel_bias(a: np.ndarray, fmt: FpFormat, channel_axis: int | None = -1) -> np.ndarray:
    """Integer exponent bias per channel: largest b with max_val * 2^b <= max|a|.

    Computed from the float exponent (frexp) with a one-step correction, so
    the result is exact even when max|a| sits within rounding distance of a
    power-of-two multiple of max_val.  Scaling a channel by 2^k shifts its
    bias by exactly k.
    """
    a = np.asarray(a, dtype=WORKING_DTYPE)
    if not np.isfinite(a).all():
        raise NumericalError("cannot quantize non-finite values")
    if channel_axis is None:
        amax = np.max(np.abs(a)) if a.size else np.float64(0.0)
    else:
        moved = np.moveaxis(a, channel_axis, -1)
        amax = np.abs(moved).max(axis=tuple(range(moved.ndim - 1)))
    amax = np.asarray(amax, dtype=WORKING_DTYPE)

    max_val = fmt.max_val
    # frexp is exact for every finite float including subnormals, so the
    # exponent difference is always within one step of the true bias; a
    # quotient-based estimate would lose the exponent to underflow for
    # near-denormal data
    _, exp_a = np.frexp(amax)
    _, exp_v = math.frexp(max_val)
    bias = exp_a.astype(np.int64) - exp_v
    bias = np.where(np.ldexp(max_val, bias + 1) <= amax, bias + 1, bias)
    bias = np.where(np.ldexp(max_val, bias) > amax, bias - 1, bias)
    return np.where(amax == 0.0, np.int64(0), bias)


def _snap(mag: np.ndarray, fmt: FpFormat, bias: np.ndarray) -> np.ndarray:
    """Nearest grid point for nonnegative magnitudes, ties away from zero.

    bias must broadcast against mag.  Magnitudes above the grid ceiling
    clamp onto it.
    """
    vmax = np.ldexp(fmt.max_val, bias)
    mag = np.minimum(mag, vmax)
    with np.errstate(divide="ignore"):
        level = np.floor(np.log2(mag)) - bias
    level = np.maximum(level, 1.0)  # linear subnormal ramp below level 1
    exponent = level.astype(np.int64) + (np.asarray(bias) - fmt.n_m)
    scale = np.ldexp(1.0, exponent)
    if not np.all(scale > 0.0):
        raise NumericalError("grid scale underflowed float64; data magnitude too small")
    return np.floor(mag / scale + 0.5) * scale


def minmax_quantize(
    a: np.ndarray, fmt: FpFormat, channel_axis: int | None = -1
) -> QuantizedTensor:
    """Quantize onto per-channel minifloat grids anchored at the channel max.

    channel_axis selects which axis indexes channels (default: last, the
    column convention for 2-D batches and input_dim x output_dim weights);
    None quantizes the whole tensor on a single grid.  Returns the
    fake-quantized values together with the frozen per-channel biases.
    """
    a = np.asarray(a, dtype=WORKING_DTYPE)
    bias = channel_bias(a, fmt, channel_axis)
    if channel_axis is None:
        q = _snap(np.abs(a), fmt, bias)
    else:
        moved = np.moveaxis(a, channel_axis, -1)
        q = np.moveaxis(_snap(np.abs(moved), fmt, bias), -1, channel_axis)
    values = np.where(a < 0, -q, q)
    return QuantizedTensor(values=values, fmt=fmt, bias=bias, channel_axis=channel_axis)


def round_to_grid(x: np.ndarray, bf: BiasedFormat) -> np.ndarray:
    """Snap values onto one fixed biased grid: nearest point, ties away from
    zero, magnitudes beyond the ceiling clamped.  Agrees element-wise with
    minmax_quantize wherever the bias matches."""
    x = np.asarray(x, dtype=WORKING_DTYPE)
    if not np.isfinite(x).all():
        raise NumericalError("cannot quantize non-finite values")
    q = _snap(np.abs(x), bf.fmt, np.int64(bf.bias))
    return np.where(x < 0, -q, q)


def snap_per_channel(x: np.ndarray, fmt: FpFormat, bias: np.ndarray) -> np.ndarray:
    """round_to_grid with a per-element (broadcast) bias array; used where
    each row carries its own frozen grid, e.g. Hessian-ordered rounding."""
    x = np.asarray(x, dtype=WORKING_DTYPE)
    q = _snap(np.abs(x), fmt, np.asarray(bias, dtype=np.int64))
    return np.where(x < 0, -q, q)


def quant_error(a: np.ndarray, q: np.ndarray) -> dict[str, float]:
    """Error metrics between a reference tensor and its quantized version.

    Returns mse, max_abs, sqnr_db, and cosine similarity.  sqnr_db is the
    +inf sentinel when the error is zero or the signal is zero (undefined);
    cosine is 1.0 for identical tensors and 0.0 when exactly one side is
    all zeros.
    """
    a = np.asarray(a, dtype=WORKING_DTYPE)
    q = np.asarray(q, dtype=WORKING_DTYPE)
    if a.shape != q.shape:
        raise ShapeError(f"mismatched shapes {a.shape} and {q.shape}")
    diff = a - q
    mse = float(np.mean(diff * diff)) if a.size else 0.0
    max_abs = float(np.max(np.abs(diff))) if a.size else 0.0
    signal = float(np.mean(a * a)) if a.size else 0.0
    if mse == 0.0 or signal == 0.0:
        sqnr_db = float("inf")
    else:
        sqnr_db = 10.0 * float(np.log10(signal / mse))
    na = float(np.linalg.norm(a.ravel()))
    nq = float(np.linalg.norm(q.ravel()))
    if na == 0.0 and nq == 0.0:
        cosine = 1.0
    elif na == 0.0 or nq == 0.0:
        cosine = 0.0
    else:
        cosine = float(np.dot(a.ravel(), q.ravel()) / (na * nq))
    return {"mse": mse, "max_abs": max_abs, "sqnr_db": sqnr_db, "cosine": cosine}
