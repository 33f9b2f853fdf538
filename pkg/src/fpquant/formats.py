"""Number formats and their representable-value grids.

An ``FpFormat`` is a signed minifloat with ``m`` mantissa bits, ``e``
exponent bits and a real-valued exponent bias.  The bias absorbs any
per-tensor scale, so ``bias = b - log2(gamma)`` for an integer bias ``b``
and a scale ``gamma``.  Every exponent code encodes a finite value (no
Inf/NaN are reserved) and the all-zero exponent code holds subnormals.

Grid values are computed as ``D * 2**-frac`` where ``D`` is an exact dyadic
rational (integer part of the bias applied with ``ldexp``) and ``frac`` is
the fractional part of the bias.  The quantizer in :mod:`fpquant.quantsim`
uses the same factorisation, so the two agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FpFormat",
    "IntFormat",
    "QuantGrid",
    "max_representable",
    "min_subnormal",
    "min_normal",
    "enumerate_grid",
    "enumerate_int_grid",
    "bias_from_max",
    "MAX_ENUM_BITS",
]

MAX_ENUM_BITS = 16


def pow2_neg_frac(frac):
    """``2**-frac`` for the fractional part of a bias.

    Every module goes through this one function so the grid and the fast
    quantizer see the same rounded constant.
    """
    return np.exp2(-np.asarray(frac, dtype=np.float64))


@dataclass(frozen=True)
class FpFormat:
    """Signed floating-point format ``xMyE`` with a real exponent bias."""

    m: int
    e: int
    bias: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"mantissa bits must be a non-negative integer, got {self.m!r}")
        if int(self.e) != self.e or self.e < 1:
            raise ValueError(f"exponent bits must be an integer >= 1, got {self.e!r}")
        if not math.isfinite(self.bias):
            raise ValueError("bias must be finite")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "e", int(self.e))
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def bits(self) -> int:
        return self.m + self.e + 1

    @property
    def name(self) -> str:
        return f"{self.m}M{self.e}E"

    @classmethod
    def standard(cls, m: int, e: int) -> "FpFormat":
        """Format with the conventional bias ``2**(e-1)``."""
        return cls(m, e, float(2 ** (e - 1)))

    @classmethod
    def from_max(cls, c: float, m: int, e: int) -> "FpFormat":
        return cls(m, e, bias_from_max(c, m, e))

    def split_bias(self) -> tuple[int, float]:
        """Return ``(k, base)`` with ``2**-bias == 2**-k * base`` and ``base in (0.5, 1]``."""
        k = math.floor(self.bias)
        frac = self.bias - k
        base = 1.0 if frac == 0.0 else float(pow2_neg_frac(frac))
        return k, base


@dataclass(frozen=True)
class IntFormat:
    """Signed two's-complement integer grid ``s * [-2**(n-1), 2**(n-1) - 1]``."""

    bits: int
    scale: float = 1.0

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 2:
            raise ValueError(f"bit width must be an integer >= 2, got {self.bits!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale!r}")
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def qmin(self) -> int:
        return -(2 ** (self.bits - 1))

    @property
    def qmax(self) -> int:
        return 2 ** (self.bits - 1) - 1

    @property
    def name(self) -> str:
        return f"INT{self.bits}"


class QuantGrid:
    """Sorted, duplicate-free set of representable values."""

    __slots__ = ("_values",)

    def __init__(self, values):
        v = np.unique(np.asarray(values, dtype=np.float64))
        if v.size == 0:
            raise ValueError("grid must be non-empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        # np.unique already merges -0.0 with 0.0; normalise the sign of zero
        v[v == 0] = 0.0
        v.setflags(write=False)
        self._values = v

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def alpha_min(self) -> float:
        return float(self._values[0])

    @property
    def alpha_max(self) -> float:
        return float(self._values[-1])

    def __len__(self):
        return self._values.size

    def __iter__(self):
        return iter(self._values.tolist())

    def __contains__(self, x):
        i = np.searchsorted(self._values, x)
        return bool(i < self._values.size and self._values[i] == x)

    def __eq__(self, other):
        if not isinstance(other, QuantGrid):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self):
        return f"QuantGrid(n={len(self)}, min={self.alpha_min:g}, max={self.alpha_max:g})"

    def scaled(self, factor: float) -> "QuantGrid":
        return QuantGrid(self._values * factor)

    def to_csv(self) -> str:
        return "".join(f"{v!r}\n" for v in self._values.tolist())


def _positive_dyadics(m: int, e: int) -> np.ndarray:
    """Positive grid values of a format with integer bias 0, exactly."""
    k = np.arange(1, 2**m, dtype=np.float64)
    sub = np.ldexp(k, 1 - m)
    p = np.arange(1, 2**e, dtype=np.float64)
    j = np.arange(2**m, 2 ** (m + 1), dtype=np.float64)
    normal = np.ldexp(j[None, :], (p[:, None] - m).astype(np.int64)).ravel()
    return np.concatenate([sub, normal])


def max_representable(f: FpFormat) -> float:
    """Largest grid value ``c = (2 - 2**-m) * 2**(2**e - bias - 1)``."""
    k, base = f.split_bias()
    top = math.ldexp(2.0 - math.ldexp(1.0, -f.m), 2**f.e - 1 - k)
    return top * base


def min_subnormal(f: FpFormat) -> float:
    """Smallest positive grid value ``2**(1 - bias - m)``."""
    k, base = f.split_bias()
    return math.ldexp(1.0, 1 - f.m - k) * base


def min_normal(f: FpFormat) -> float:
    k, base = f.split_bias()
    return math.ldexp(1.0, 1 - k) * base


def enumerate_grid(f: FpFormat) -> QuantGrid:
    """All distinct values of the format, both signs, zero once."""
    if f.bits > MAX_ENUM_BITS:
        raise ValueError(f"{f.name} has {f.bits} bits; enumeration is limited to {MAX_ENUM_BITS}")
    k, base = f.split_bias()
    with np.errstate(over="ignore"):
        pos = np.ldexp(_positive_dyadics(f.m, f.e), -k) * base
    if not np.all(np.isfinite(pos)) or pos[0] == 0.0:
        raise OverflowError(f"{f.name} with bias {f.bias} is not representable in binary64")
    return QuantGrid(np.concatenate([-pos[::-1], [0.0], pos]))


def enumerate_int_grid(f: IntFormat) -> QuantGrid:
    if f.bits > MAX_ENUM_BITS:
        raise ValueError(f"INT{f.bits} exceeds the enumeration bound of {MAX_ENUM_BITS} bits")
    return QuantGrid(np.arange(f.qmin, f.qmax + 1, dtype=np.float64) * f.scale)


def bias_from_max(c, m: int, e: int):
    """Real bias whose format has ``max_representable == c``.

    Accepts a scalar or an array of clipping values.
    """
    ca = np.asarray(c, dtype=np.float64)
    if not np.all(ca > 0):
        raise ValueError(f"clipping value must be positive, got {c!r}")
    b = 2.0**e - 1.0 + np.log2(2.0 - 2.0**-m) - np.log2(ca)
    return float(b) if b.ndim == 0 else b
