"""MSE-optimal bias / scale for a (format, distribution) pair."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..formats import FpFormat, IntFormat, bias_from_max, enumerate_grid, enumerate_int_grid
from .distributions import Distribution
from .mse import ErrorBreakdown, expected_mse

__all__ = ["OptimalFormat", "golden_section", "optimal_fp_format", "optimal_int_format", "minmax_format", "candidate_formats"]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OptimalFormat:
    format: FpFormat | IntFormat
    clip: float
    error: ErrorBreakdown

    @property
    def exponent_bits(self) -> int:
        return self.format.e if isinstance(self.format, FpFormat) else 0


def golden_section(f, lo: float, hi: float, rtol: float = 1e-7, max_iter: int = 200):
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= rtol * max(abs(a), abs(b)):
            break
        # ties move right-to-left so the smaller argument is kept
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _scan_then_refine(objective, lo, hi, n_scan=48):
    cs = np.geomspace(lo, hi, n_scan)
    vals = np.array([objective(c) for c in cs])
    i = int(np.argmin(vals))
    a = cs[max(i - 1, 0)]
    b = cs[min(i + 1, n_scan - 1)]
    x, fx = golden_section(objective, a, b)
    if vals[i] < fx:
        return float(cs[i]), float(vals[i])
    return float(x), float(fx)


def optimal_fp_format(m: int, e: int, d: Distribution, method: str = "auto", integer_bias: bool = False) -> OptimalFormat:
    """Search the clipping value ``c`` in ``[0.05, 2] * max|clip range|``.

    A geometric scan locates the basin, golden-section search refines it.
    With ``integer_bias`` the continuous optimum's bias is rounded down and
    up and the better of the two is returned.
    """
    r = d.max_abs

    def objective(c):
        return expected_mse(enumerate_grid(FpFormat(m, e, bias_from_max(c, m, e))), d, method).total

    c, _ = _scan_then_refine(objective, 0.05 * r, 2.0 * r)
    fmt = FpFormat(m, e, bias_from_max(c, m, e))
    if integer_bias:
        cands = [FpFormat(m, e, float(math.floor(fmt.bias))), FpFormat(m, e, float(math.ceil(fmt.bias)))]
        errs = [expected_mse(enumerate_grid(f), d, method) for f in cands]
        j = int(np.argmin([x.total for x in errs]))
        from ..formats import max_representable

        return OptimalFormat(cands[j], max_representable(cands[j]), errs[j])
    return OptimalFormat(fmt, c, expected_mse(enumerate_grid(fmt), d, method))


def optimal_int_format(bits: int, d: Distribution, method: str = "auto") -> OptimalFormat:
    """Same search for an integer grid, parametrised by ``c = qmax * scale``."""
    qmax = 2 ** (bits - 1) - 1
    r = d.max_abs

    def objective(c):
        return expected_mse(enumerate_int_grid(IntFormat(bits, c / qmax)), d, method).total

    c, _ = _scan_then_refine(objective, 0.05 * r, 2.0 * r)
    fmt = IntFormat(bits, c / qmax)
    return OptimalFormat(fmt, c, expected_mse(enumerate_int_grid(fmt), d, method))


def minmax_format(fmt, d: Distribution, method: str = "auto") -> OptimalFormat:
    """Range set by min-max: the largest grid value equals ``max|clip range|``.

    ``fmt`` is an ``(m, e)`` pair or an integer bit width.
    """
    r = d.max_abs
    if isinstance(fmt, int):
        f = IntFormat(fmt, r / (2 ** (fmt - 1) - 1))
        grid = enumerate_int_grid(f)
    else:
        m, e = fmt
        f = FpFormat(m, e, bias_from_max(r, m, e))
        grid = enumerate_grid(f)
    return OptimalFormat(f, r, expected_mse(grid, d, method))


def candidate_formats(include_int8: bool = True):
    """The standard comparison set: INT8 (as bit width 8) and 5M2E..2M5E."""
    fp = [(5, 2), (4, 3), (3, 4), (2, 5)]
    return ([8] if include_int8 else []) + fp
