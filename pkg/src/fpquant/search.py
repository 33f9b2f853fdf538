"""Grid search for MSE-optimal mantissa bits and clipping value on real tensors.

For every ``m`` in 1..6 (``e = 7 - m``) and 111 clipping values evenly
spaced on ``[0.1, 1.2] * absmax`` the reconstruction MSE is measured and the
best cell kept.  Per-channel search picks a clipping value per channel and
a single ``m`` for the whole tensor by majority vote over channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .formats import FpFormat, bias_from_max, min_normal
from .quantsim import Tensor, _quantize_fp_array, empirical_mse, per_channel_shape, quantize_fp

__all__ = ["FormatSearchResult", "MANTISSA_CHOICES", "N_CLIP", "clip_fractions", "eval_candidate", "grid_search_format"]

MANTISSA_CHOICES = (1, 2, 3, 4, 5, 6)
N_CLIP = 111
TOTAL_BITS = 7


def clip_fractions() -> np.ndarray:
    return np.linspace(0.1, 1.2, N_CLIP)


def fmt_for(m: int, c: float) -> FpFormat:
    e = TOTAL_BITS - m
    return FpFormat(m, e, bias_from_max(c, m, e))


@dataclass
class FormatSearchResult:
    m: int
    c: float | np.ndarray
    mse: float | np.ndarray
    per_channel: bool = False
    degenerate: bool = False
    degenerate_channels: list[int] = field(default_factory=list)

    @property
    def e(self) -> int:
        return TOTAL_BITS - self.m

    def format(self, channel: int | None = None) -> FpFormat:
        c = self.c if channel is None else float(np.asarray(self.c)[channel])
        return fmt_for(self.m, float(c))

    def biases(self) -> np.ndarray:
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        return np.array([bias_from_max(float(ci), self.m, self.e) for ci in c])

    def to_json(self) -> dict:
        out = {"m": self.m, "e": self.e}
        if self.per_channel:
            out["c_per_channel"] = [float(v) for v in np.asarray(self.c)]
            out["mse"] = [float(v) for v in np.asarray(self.mse)]
        else:
            out["c"] = float(self.c)
            out["mse"] = float(self.mse)
        out["degenerate_channels"] = list(self.degenerate_channels)
        out["degenerate"] = self.degenerate
        return out


def eval_candidate(x, m: int, c: float) -> float:
    """Reconstruction MSE of ``x`` under ``m``-bit mantissa, clipping value ``c``."""
    if not 1 <= m <= 6:
        raise ValueError("m must be in 1..6")
    if not c > 0:
        raise ValueError("c must be positive")
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    return empirical_mse(arr, quantize_fp(arr, fmt_for(m, c)))


def _degenerate_c(m: int) -> float:
    return min_normal(FpFormat.standard(m, TOTAL_BITS - m))


def _mse_table(arr: np.ndarray, absmax: np.ndarray, axis: int | None) -> np.ndarray:
    """MSE for every (m, c-fraction) cell; shape ``(6, 111)`` or ``(6, 111, C)``."""
    fr = clip_fractions()
    if axis is None:
        table = np.empty((len(MANTISSA_CHOICES), N_CLIP))
    else:
        table = np.empty((len(MANTISSA_CHOICES), N_CLIP, arr.shape[axis]))
        reduce_axes = tuple(i for i in range(arr.ndim) if i != axis)
        bshape = per_channel_shape(arr.ndim, axis, arr.shape[axis])
    for i, m in enumerate(MANTISSA_CHOICES):
        e = TOTAL_BITS - m
        for j, f in enumerate(fr):
            c = f * absmax
            bias = bias_from_max(c, m, e)
            if axis is None:
                q = _quantize_fp_array(arr, m, e, float(bias))
                table[i, j] = np.mean((arr - q) ** 2)
            else:
                q = _quantize_fp_array(arr, m, e, bias.reshape(bshape))
                table[i, j] = np.mean((arr - q) ** 2, axis=reduce_axes)
    return table


def grid_search_format(x, per_channel: bool = False) -> FormatSearchResult:
    """Exhaustive (m, c) search; ties prefer smaller ``m`` then smaller ``c``.

    A tensor (or channel) that is identically zero has no meaningful
    range; it gets ``m = 1`` (or the voted ``m``) with ``c`` set to the
    smallest positive normal of that format under its standard bias, and is
    flagged as degenerate.
    """
    t = x if isinstance(x, Tensor) else Tensor(x)
    arr = t.data
    if arr.size == 0:
        raise ValueError("empty tensor")
    if not per_channel:
        sigma = float(np.max(np.abs(arr)))
        if sigma == 0.0:
            return FormatSearchResult(m=1, c=_degenerate_c(1), mse=0.0, degenerate=True)
        table = _mse_table(arr, np.float64(sigma), None)
        i, j = np.unravel_index(int(np.argmin(table)), table.shape)
        return FormatSearchResult(m=MANTISSA_CHOICES[i], c=float(clip_fractions()[j] * sigma), mse=float(table[i, j]))

    axis = t.channel_axis
    if axis is None:
        raise ValueError("per-channel search needs a tensor with a channel axis")
    reduce_axes = tuple(i for i in range(arr.ndim) if i != axis)
    absmax = np.max(np.abs(arr), axis=reduce_axes)
    degenerate = absmax == 0.0
    nch = absmax.size
    safe = np.where(degenerate, 1.0, absmax)
    table = _mse_table(arr, safe, axis)  # (6, 111, C)
    best_j = np.argmin(table, axis=1)  # (6, C)
    best_mse = np.take_along_axis(table, best_j[:, None, :], axis=1)[:, 0, :]
    live = ~degenerate
    if not np.any(live):
        m = 1
        c = np.full(nch, _degenerate_c(m))
        return FormatSearchResult(
            m=m, c=c, mse=np.zeros(nch), per_channel=True, degenerate=True, degenerate_channels=list(range(nch))
        )
    votes_idx = np.argmin(best_mse[:, live], axis=0)
    counts = np.bincount(votes_idx, minlength=len(MANTISSA_CHOICES))
    cum = best_mse[:, live].sum(axis=1)
    top = counts == counts.max()
    # among the most-voted m: lowest cumulative MSE, then smallest m
    order = np.lexsort((np.arange(len(MANTISSA_CHOICES)), cum, ~top))
    win = int(order[0])
    m = MANTISSA_CHOICES[win]
    fr = clip_fractions()
    c = fr[best_j[win]] * safe
    mse = best_mse[win].copy()
    c[degenerate] = _degenerate_c(m)
    mse[degenerate] = 0.0
    return FormatSearchResult(
        m=m,
        c=c,
        mse=mse,
        per_channel=True,
        degenerate=bool(np.any(degenerate)),
        degenerate_channels=[int(i) for i in np.flatnonzero(degenerate)],
    )
