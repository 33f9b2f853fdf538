"""Simulated FP and INT quantization of real tensors.

The fast FP path gives every element its own power-of-two scale taken from
the binade the element falls in, rounds ``x / s`` to the nearest integer
and clips to the largest representable value.  ``quantize_fp_oracle`` is
the slow reference: a nearest-grid-point lookup on the enumerated grid.
Both break ties toward the value with an even mantissa code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .formats import FpFormat, IntFormat, QuantGrid, max_representable, pow2_neg_frac

__all__ = [
    "Tensor",
    "QuantizerConfig",
    "quantize_fp",
    "quantize_fp_oracle",
    "quantize_int",
    "empirical_mse",
    "fp_scale",
    "per_channel_shape",
]


@dataclass(frozen=True)
class Tensor:
    """Real-valued array with an optional channel axis."""

    data: np.ndarray
    channel_axis: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1)
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor contains non-finite values")
        ax = self.channel_axis
        if ax is not None:
            if not -data.ndim <= ax < data.ndim:
                raise ValueError(f"channel_axis {ax} out of range for rank {data.ndim}")
            ax %= data.ndim
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_axis", ax)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def num_channels(self) -> int | None:
        return None if self.channel_axis is None else self.data.shape[self.channel_axis]

    def with_data(self, data) -> "Tensor":
        return Tensor(np.asarray(data).reshape(self.shape), self.channel_axis)


@dataclass(frozen=True)
class QuantizerConfig:
    """Format plus optional per-channel bias (FP) or scale (INT) vector.

    Mantissa and exponent widths are shared by all channels; only the bias
    (equivalently the clipping value) varies per channel.
    """

    format: FpFormat | IntFormat
    per_channel: bool = False
    channel_params: np.ndarray | None = None
    channel_axis: int | None = None

    def __post_init__(self):
        if self.per_channel:
            if self.channel_params is None:
                raise ValueError("per-channel config needs a parameter vector")
            p = np.asarray(self.channel_params, dtype=np.float64).ravel()
            if not np.all(np.isfinite(p)):
                raise ValueError("per-channel parameters must be finite")
            object.__setattr__(self, "channel_params", p)


def per_channel_shape(ndim: int, axis: int, n: int) -> tuple[int, ...]:
    shape = [1] * ndim
    shape[axis] = n
    return tuple(shape)


def _unwrap(x):
    if isinstance(x, Tensor):
        return x.data, x
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("input contains non-finite values")
    return arr, None


def _rewrap(result, like):
    return like.with_data(result) if like is not None else result


def _round(v, mode):
    if mode == "even":
        return np.rint(v)
    if mode == "away":
        a = np.abs(v)
        fl = np.floor(a)
        # compare the exact fraction; floor(a + 0.5) misrounds just below .5
        return np.copysign(np.where(a - fl >= 0.5, fl + 1.0, fl), v)
    raise ValueError(f"unknown rounding mode {mode!r}")


def _bias_parts(bias):
    bias = np.asarray(bias, dtype=np.float64)
    k = np.floor(bias)
    frac = bias - k
    base = np.where(frac == 0.0, 1.0, pow2_neg_frac(frac))
    return k.astype(np.int64), base


def fp_scale(x, m: int, bias):
    """Per-element scale exponent in the integer-bias frame.

    Returns ``(y, shift, normal)`` where ``y = x / 2**-frac(bias)``, the
    element scale is ``2**shift * 2**-frac(bias)`` and ``normal`` marks
    elements with ``floor(log2|x| + bias) > 1``.
    """
    k, base = _bias_parts(bias)
    y = x / base
    _, E = np.frexp(y)
    # floor(log2|x| + bias) == floor(log2|y|) + k, exact via frexp
    binade = E.astype(np.int64) - 1 + k
    normal = (binade > 1) & (y != 0)
    shift = np.maximum(binade, 1) - k - m
    return y, shift, normal


def _quantize_fp_array(x, m, e, bias, rounding="even"):
    if np.ndim(x) == 0 and np.ndim(bias) == 0:
        return _quantize_fp_array(np.reshape(x, 1), m, e, bias, rounding)[0]
    k, base = _bias_parts(bias)
    y, shift, _ = fp_scale(x, m, bias)
    v = np.ldexp(y, -shift)
    r = _round(v, rounding)
    if rounding == "even" and np.any(base != 1.0):
        # y = x / base is inexact, so a near-tie in y may sit on the wrong
        # side of the true midpoint; decide those against x directly
        fl = np.floor(v)
        near = np.abs(v - fl - 0.5) < 1e-9
        if np.any(near):
            xb = np.broadcast_to(x, v.shape)[near]
            bb = np.broadcast_to(base, v.shape)[near]
            sh = shift[near]
            f = fl[near]
            lo = np.ldexp(f, sh) * bb
            hi = np.ldexp(f + 1.0, sh) * bb
            dlo, dhi = xb - lo, hi - xb
            lo_even = np.mod(f, 2.0) == 0.0
            r[near] = np.where((dlo < dhi) | ((dlo == dhi) & lo_even), f, f + 1.0)
    q = np.ldexp(r, shift)
    top = np.ldexp(2.0 - 2.0**-m, 2**e - 1 - k)
    q = np.clip(q, -top, top)
    return q * base


def quantize_fp(x, cfg, *, rounding: str = "even"):
    """Quantize ``x`` to a floating-point grid.

    ``cfg`` is an :class:`FpFormat` or a :class:`QuantizerConfig` holding
    one.  For per-channel configs the bias vector is broadcast along the
    channel axis (taken from the config, else from the tensor).
    """
    arr, like = _unwrap(x)
    if isinstance(cfg, FpFormat):
        cfg = QuantizerConfig(cfg)
    f = cfg.format
    if not isinstance(f, FpFormat):
        raise TypeError("quantize_fp needs an FpFormat")
    bias = f.bias
    if cfg.per_channel:
        axis = cfg.channel_axis if cfg.channel_axis is not None else (like.channel_axis if like else None)
        if axis is None:
            raise ValueError("per-channel quantization needs a channel axis")
        n = arr.shape[axis]
        if cfg.channel_params.size != n:
            raise ValueError(f"got {cfg.channel_params.size} biases for {n} channels")
        bias = cfg.channel_params.reshape(per_channel_shape(arr.ndim, axis, n))
    return _rewrap(_quantize_fp_array(arr, f.m, f.e, bias, rounding), like)


def quantize_fp_oracle(x, grid: QuantGrid):
    """Nearest grid value by binary search; ties go to the even mantissa code.

    The mantissa code parity of a grid value equals the parity of its
    distance (in grid steps) from zero, which is what is used here.
    """
    v = grid.values
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    idx = np.clip(np.searchsorted(v, arr, side="left"), 1, v.size - 1) if v.size > 1 else None
    if idx is None:
        out = np.full_like(arr, v[0])
    else:
        lo, hi = v[idx - 1], v[idx]
        dlo, dhi = arr - lo, hi - arr
        zero = int(np.searchsorted(v, 0.0))
        if zero >= v.size or v[zero] != 0.0:
            zero = 0
        lo_even = (np.abs(idx - 1 - zero) % 2) == 0
        take_lo = (dlo < dhi) | ((dlo == dhi) & lo_even)
        out = np.where(take_lo, lo, hi)
        out = np.where(arr <= v[0], v[0], out)
        out = np.where(arr >= v[-1], v[-1], out)
    return float(out[0]) if scalar else out.reshape(np.shape(x))


def quantize_int(x, f: IntFormat | QuantizerConfig, *, rounding: str = "even"):
    """``s * clip(round(x / s), -2**(n-1), 2**(n-1) - 1)``."""
    arr, like = _unwrap(x)
    cfg = f if isinstance(f, QuantizerConfig) else QuantizerConfig(f)
    fmt = cfg.format
    if not isinstance(fmt, IntFormat):
        raise TypeError("quantize_int needs an IntFormat")
    s = fmt.scale
    if cfg.per_channel:
        axis = cfg.channel_axis if cfg.channel_axis is not None else (like.channel_axis if like else None)
        if axis is None:
            raise ValueError("per-channel quantization needs a channel axis")
        n = arr.shape[axis]
        if cfg.channel_params.size != n:
            raise ValueError(f"got {cfg.channel_params.size} scales for {n} channels")
        if np.any(cfg.channel_params <= 0):
            raise ValueError("scales must be positive")
        s = cfg.channel_params.reshape(per_channel_shape(arr.ndim, axis, n))
    q = np.clip(_round(arr / s, rounding), fmt.qmin, fmt.qmax) * s
    return _rewrap(q, like)


def quantize(x, cfg, **kw):
    """Dispatch on the format type."""
    f = cfg.format if isinstance(cfg, QuantizerConfig) else cfg
    if isinstance(f, IntFormat):
        return quantize_int(x, cfg, **kw)
    return quantize_fp(x, cfg, **kw)


def empirical_mse(x, quantized) -> float:
    a, _ = _unwrap(x)
    b, _ = _unwrap(quantized)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty tensor")
    d = a - b
    return float(np.mean(d * d))


def clip_value(f: FpFormat | IntFormat) -> float:
    if isinstance(f, IntFormat):
        return f.qmax * f.scale
    return max_representable(f)
