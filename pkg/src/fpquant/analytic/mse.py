"""Expected quantization error of a grid under a clipped density.

The real line is cut into pieces on which the quantizer output is constant:
for every pair of neighbouring grid points the halves ``[a_i, mid]`` and
``[mid, a_{i+1}]``, plus the two clipping tails.  Each piece contributes
``I(lo, hi, q)`` with ``q`` the grid value it maps to; summing the interior
pieces gives the rounding error, the tails give the clipping error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..formats import QuantGrid
from .distributions import Distribution
from .quadrature import QuadResult, integrate_intervals

__all__ = [
    "ErrorBreakdown",
    "ScalarProductTerms",
    "moment_integral_I",
    "moment_integral_J",
    "rounding_error",
    "clipping_error",
    "expected_mse",
    "quadrature_mse_oracle",
    "scalar_product_terms",
    "scalar_product_mse",
    "scalar_product_mse_approx",
    "sqnr",
    "sqnr_scalar_product",
    "monte_carlo_mse",
]

ROUND, CLIP = 1, 0


@dataclass(frozen=True)
class ErrorBreakdown:
    rounding: float
    clipping: float

    @property
    def total(self) -> float:
        return self.rounding + self.clipping


def _check_interval(d: Distribution, a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(a > b):
        raise ValueError("interval needs a <= b")
    slack = 1e-12 * max(1.0, d.max_abs)
    if np.any(a < d.lo - slack) or np.any(b > d.hi + slack):
        raise ValueError(f"interval must lie inside the clip range [{d.lo}, {d.hi}]")
    return a, b


def moment_integral_I(d: Distribution, a, b, x0):
    """``int_a^b (w - x0)**2 p(w) dw`` for ``lo <= a <= b <= hi``."""
    a, b = _check_interval(d, a, b)
    out = np.where(a == b, 0.0, d.moment_I(a, b, x0))
    return float(out) if out.ndim == 0 else out


def moment_integral_J(d: Distribution, a, b, x0):
    """``int_a^b w (w - x0) p(w) dw`` for ``lo <= a <= b <= hi``."""
    a, b = _check_interval(d, a, b)
    out = np.where(a == b, 0.0, d.moment_J(a, b, x0))
    return float(out) if out.ndim == 0 else out


def _pieces(grid: QuantGrid, d: Distribution):
    """Constant-output pieces ``(a, b, q, kind)`` restricted to the clip range."""
    v = grid.values
    lo, hi = d.lo, d.hi
    mid = 0.5 * (v[:-1] + v[1:])
    a = np.concatenate([[lo], v[:-1], mid, [v[-1]]])
    b = np.concatenate([[v[0]], mid, v[1:], [hi]])
    q = np.concatenate([[v[0]], v[:-1], v[1:], [v[-1]]])
    kind = np.full(a.size, ROUND)
    kind[0] = kind[-1] = CLIP
    a = np.maximum(a, lo)
    b = np.minimum(b, hi)
    keep = a < b
    return a[keep], b[keep], q[keep], kind[keep]


def _piece_integrals(grid, d, which="I", method="auto"):
    a, b, q, kind = _pieces(grid, d)
    if method == "auto":
        method = "closed" if d.has_closed_form else "quad"
    if method == "closed":
        vals = d.moment_I(a, b, q) if which == "I" else d.moment_J(a, b, q)
    else:
        if which == "I":
            f = lambda w, i: (w - q[i]) ** 2 * d.pdf(w)
        else:
            f = lambda w, i: w * (w - q[i]) * d.pdf(w)
        vals = integrate_intervals(f, a, b, atol=1e-13).value
    return np.asarray(vals), kind


def rounding_error(grid: QuantGrid, d: Distribution, method: str = "auto") -> float:
    vals, kind = _piece_integrals(grid, d, "I", method)
    return float(max(np.sum(vals[kind == ROUND]), 0.0))


def clipping_error(grid: QuantGrid, d: Distribution, method: str = "auto") -> float:
    vals, kind = _piece_integrals(grid, d, "I", method)
    return float(max(np.sum(vals[kind == CLIP]), 0.0))


def expected_mse(grid: QuantGrid, d: Distribution, method: str = "auto") -> ErrorBreakdown:
    """Rounding and clipping parts of ``E[(Q(W) - W)**2]``.

    ``method`` is ``"closed"``, ``"quad"`` or ``"auto"`` (closed form when
    the family has one, quadrature otherwise).
    """
    vals, kind = _piece_integrals(grid, d, "I", method)
    r = float(max(np.sum(vals[kind == ROUND]), 0.0))
    c = float(max(np.sum(vals[kind == CLIP]), 0.0))
    return ErrorBreakdown(r, c)


def quadrature_mse_oracle(grid: QuantGrid, d: Distribution, atol: float = 1e-12) -> QuadResult:
    """Adaptive quadrature of ``R(w)**2 p(w)`` piece by piece.

    Never integrates across a rounding midpoint, where the error is not
    smooth.  Returns the value and the accumulated error estimate.
    """
    a, b, q, _ = _pieces(grid, d)
    share = atol / max(a.size, 1)
    res = integrate_intervals(lambda w, i: (w - q[i]) ** 2 * d.pdf(w), a, b, atol=share)
    return QuadResult(float(np.sum(res.value)), float(np.sum(res.error)))


@dataclass(frozen=True)
class ScalarProductTerms:
    m_w: float
    m_x: float
    e_rw: float
    e_rx: float
    e_sw: float
    e_sx: float

    @property
    def full(self) -> float:
        return (
            self.m_x * self.e_rw
            + self.m_w * self.e_rx
            + self.e_rw * self.e_rx
            + 2.0 * self.e_sw * self.e_sx
            + 2.0 * self.e_rw * self.e_sx
            + 2.0 * self.e_rx * self.e_sw
        )

    @property
    def approx(self) -> float:
        return self.e_rw * self.m_x + self.e_rx * self.m_w


def _cross_moment(grid, d, method="auto"):
    # E[w R(w)] with R = Q(w) - w, i.e. minus the sum of J over all pieces
    vals, _ = _piece_integrals(grid, d, "J", method)
    return -float(np.sum(vals))


def scalar_product_terms(grid_w, d_w, grid_x, d_x, method: str = "auto") -> ScalarProductTerms:
    """Moments entering ``E[(Q(W) Q(X) - W X)**2]`` for independent W, X.

    The error terms integrate over the whole clip range, so they include
    clipping as well as rounding.
    """
    return ScalarProductTerms(
        m_w=d_w.second_moment(),
        m_x=d_x.second_moment(),
        e_rw=expected_mse(grid_w, d_w, method).total,
        e_rx=expected_mse(grid_x, d_x, method).total,
        e_sw=_cross_moment(grid_w, d_w, method),
        e_sx=_cross_moment(grid_x, d_x, method),
    )


def scalar_product_mse(grid_w, d_w, grid_x, d_x, method: str = "auto") -> float:
    return scalar_product_terms(grid_w, d_w, grid_x, d_x, method).full


def scalar_product_mse_approx(grid_w, d_w, grid_x, d_x, method: str = "auto") -> float:
    """Leading two terms only: ``E_rw * M_x + E_rx * M_w``."""
    return (
        expected_mse(grid_w, d_w, method).total * d_x.second_moment()
        + expected_mse(grid_x, d_x, method).total * d_w.second_moment()
    )


def _db(signal, noise):
    if noise <= 0.0:
        return math.inf
    return 10.0 * math.log10(signal / noise)


def sqnr(d: Distribution, grid: QuantGrid, method: str = "auto") -> float:
    """``10 log10(E[W**2] / E[(W - Q(W))**2])`` in dB; ``inf`` for zero error."""
    return _db(d.second_moment(), expected_mse(grid, d, method).total)


def sqnr_scalar_product(grid_w, d_w, grid_x, d_x, method: str = "auto") -> float:
    t = scalar_product_terms(grid_w, d_w, grid_x, d_x, method)
    return _db(t.m_w * t.m_x, t.full)


def monte_carlo_mse(d: Distribution, quantizer, n: int, rng: np.random.Generator, chunk: int = 1_000_000):
    """Sample mean and standard error of ``(Q(W) - W)**2`` under the clipped density.

    Draws from the unrestricted family and zeroes samples outside the clip
    range, which matches integrating the restricted (unnormalised) density.
    """
    s1 = s2 = 0.0
    done = 0
    while done < n:
        k = min(chunk, n - done)
        w = d.sample(rng, k)
        inside = (w >= d.lo) & (w <= d.hi)
        w = np.where(inside, w, 0.0)
        err = (quantizer(w) - w) ** 2 * inside
        s1 += float(np.sum(err))
        s2 += float(np.sum(err * err))
        done += k
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    return mean, math.sqrt(var / (n - 1))
