"""Parametric densities restricted to a finite clip range.

The density is restricted to ``[lo, hi]`` as is: no renormalisation and no
relocation of tail mass onto the bounds.  Each family provides the moment
integrals

    I(a, b, x0) = int_a^b (w - x0)**2 p(w) dw
    J(a, b, x0) = int_a^b w (w - x0) p(w) dw

in closed form where available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .quadrature import integrate_intervals
from .special import SERIES_MAX_ABS_Z, hyp2f1

__all__ = ["Distribution", "Gaussian", "Uniform", "StudentT", "parse_distribution"]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Distribution:
    """Base class; subclasses set ``lo``/``hi`` and implement ``pdf``."""

    lo: float
    hi: float
    has_closed_form = True

    def _check_bounds(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("clip bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def clip_range(self) -> tuple[float, float]:
        return self.lo, self.hi

    @property
    def max_abs(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def pdf(self, w):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw from the unrestricted family (callers mask to the clip range)."""
        raise NotImplementedError

    # closed forms; a <= b and both inside [lo, hi] is the caller's job
    def moment_I(self, a, b, x0):
        raise NotImplementedError

    def moment_J(self, a, b, x0):
        raise NotImplementedError

    @property
    def breakpoints(self) -> tuple:
        """Points where ``p`` is not smooth; the quadrature oracle splits there."""
        return ()

    def _quad(self, kernel, a, b, x0, atol, rtol):
        a, b, x0 = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a, b, x0)))
        lo, hi, x0f = a.ravel(), b.ravel(), x0.ravel()
        owner = np.arange(lo.size)
        for c in self.breakpoints:
            cut = (lo < c) & (c < hi)
            tail_hi, tail_owner = hi[cut], owner[cut]
            hi = np.where(cut, c, hi)
            lo = np.concatenate([lo, np.full(tail_hi.size, c)])
            hi = np.concatenate([hi, tail_hi])
            owner = np.concatenate([owner, tail_owner])
        res = integrate_intervals(lambda w, i: kernel(w, x0f[owner[i]]) * self.pdf(w), lo, hi, atol=atol, rtol=rtol)
        out = np.zeros(a.size)
        np.add.at(out, owner, res.value)
        return out.reshape(a.shape)

    def quad_moment_I(self, a, b, x0, atol=1e-13, rtol=1e-14):
        return self._quad(lambda w, x: (w - x) ** 2, a, b, x0, atol, rtol)

    def quad_moment_J(self, a, b, x0, atol=1e-13, rtol=1e-14):
        return self._quad(lambda w, x: w * (w - x), a, b, x0, atol, rtol)

    def second_moment(self) -> float:
        """``int_lo^hi w**2 p(w) dw``."""
        return float(self.moment_I(self.lo, self.hi, 0.0))

    @property
    def label(self) -> str:
        raise NotImplementedError

    @property
    def params(self) -> str:
        raise NotImplementedError


def _gauss_mass(alpha, beta):
    # Phi(beta) - Phi(alpha) without cancellation in either tail
    upper = alpha > 0
    return np.where(upper, special.ndtr(-alpha) - special.ndtr(-beta), special.ndtr(beta) - special.ndtr(alpha))


_CF_FROM = 3.0
_CF_TERMS = 400
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
# GL-20 is exact to rounding once the integrand varies by at most e**_NARROW
_NARROW = 2.0


def _tail_h(z):
    """``h_k(z) = int_z^inf (t - z)**k phi(t) dt / phi(z)`` for k = 0, 1, 2, z >= 0.

    Below ``_CF_FROM`` straight from the Mills ratio; above it from the
    Laplace continued fraction, which gives h1 and h2 without the
    cancellation in ``1 - z R`` and ``(1 + z**2) R - z``.
    """
    z = np.asarray(z, dtype=np.float64)
    small = z < _CF_FROM
    zs = np.where(small, z, 0.0)
    r = math.sqrt(math.pi / 2) * special.erfcx(zs / math.sqrt(2.0))
    h0s, h1s, h2s = r, 1.0 - zs * r, (1.0 + zs * zs) * r - zs
    zl = np.where(small, _CF_FROM, z)
    k = np.zeros_like(zl)
    for n in range(_CF_TERMS, 1, -1):
        k = n / (zl + k)
    k2 = k
    k1 = 1.0 / (zl + k2)
    h0l = 1.0 / (zl + k1)
    h1l = k1 / (zl + k1)
    h2l = k2 / ((zl + k2) * (zl + k1))
    return np.where(small, h0s, h0l), np.where(small, h1s, h1l), np.where(small, h2s, h2l)


def _tail_moments(alpha, beta, z0):
    """``int_alpha^beta (t - z0)**k phi(t) dt`` for k = 1, 2 with 0 <= alpha <= beta."""
    a0, a1, a2 = _tail_h(alpha)
    b0, b1, b2 = _tail_h(beta)
    da, db = z0 - alpha, z0 - beta
    ratio = np.exp(-0.5 * (beta - alpha) * (beta + alpha))
    pa = _INV_SQRT_2PI * np.exp(-0.5 * alpha * alpha)
    m1 = pa * ((a1 - da * a0) - ratio * (b1 - db * b0))
    m2 = pa * ((a2 - 2.0 * da * a1 + da * da * a0) - ratio * (b2 - 2.0 * db * b1 + db * db * b0))
    return m1, m2


@dataclass(frozen=True)
class Gaussian(Distribution):
    mu: float = 0.0
    sigma: float = 1.0
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        # default clip range: mu -/+ 8 sigma
        if self.lo is None:
            object.__setattr__(self, "lo", self.mu - 8.0 * self.sigma)
        if self.hi is None:
            object.__setattr__(self, "hi", self.mu + 8.0 * self.sigma)
        self._check_bounds()

    def pdf(self, w):
        t = (np.asarray(w) - self.mu) / self.sigma
        return _INV_SQRT_2PI / self.sigma * np.exp(-0.5 * t * t)

    def sample(self, rng, n):
        return rng.normal(self.mu, self.sigma, n)

    def _centred_moments(self, a, b, x0):
        """``int (w - x0)**k p(w) dw`` over ``[a, b]`` for k = 1, 2.

        Erf-based antiderivatives between the tails; tail intervals use the
        Mills-ratio partial moments and intervals too narrow for any
        antiderivative difference to keep its digits use Gauss-Legendre.
        """
        a, b, x0 = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a, b, x0)))
        shape = a.shape
        a, b, x0 = a.ravel(), b.ravel(), x0.ravel()
        s = self.sigma
        alpha, beta, z0 = (a - self.mu) / s, (b - self.mu) / s, (x0 - self.mu) / s

        # straddling the mean: no cancellation in the antiderivatives
        pa = _INV_SQRT_2PI * np.exp(-0.5 * alpha * alpha)
        pb = _INV_SQRT_2PI * np.exp(-0.5 * beta * beta)
        t0 = _gauss_mass(alpha, beta)
        t1 = pa - pb
        t2 = t0 + alpha * pa - beta * pb
        m1 = t1 - z0 * t0
        m2 = t2 - 2.0 * z0 * t1 + z0 * z0 * t0

        upper = alpha >= 0
        lower = beta <= 0
        if np.any(upper):
            u1, u2 = _tail_moments(alpha[upper], beta[upper], z0[upper])
            m1[upper], m2[upper] = u1, u2
        if np.any(lower):
            l1, l2 = _tail_moments(-beta[lower], -alpha[lower], -z0[lower])
            m1[lower], m2[lower] = -l1, l2

        width = (beta - alpha) * np.maximum(1.0, np.maximum(np.abs(alpha), np.abs(beta)))
        narrow = width <= _NARROW
        if np.any(narrow):
            # in w units: a - x0 and the half width are exact, the standardised ones are not
            h = 0.5 * (b[narrow] - a[narrow])
            dw = (a[narrow] - x0[narrow] + h)[:, None] + h[:, None] * _GL_NODES
            wp = h[:, None] * _GL_WEIGHTS * self.pdf(x0[narrow][:, None] + dw)
            m1[narrow] = np.sum(wp * dw, axis=1) / s
            m2[narrow] = np.sum(wp * dw * dw, axis=1) / (s * s)
        return (s * m1).reshape(shape), (s * s * m2).reshape(shape)

    def moment_I(self, a, b, x0):
        return self._centred_moments(a, b, x0)[1]

    def moment_J(self, a, b, x0):
        # w (w - x0) = (w - x0)**2 + x0 (w - x0)
        m1, m2 = self._centred_moments(a, b, x0)
        return m2 + np.asarray(x0, dtype=np.float64) * m1

    @property
    def label(self):
        return "gaussian"

    @property
    def params(self):
        return f"mu={self.mu:g};sigma={self.sigma:g}"


@dataclass(frozen=True)
class Uniform(Distribution):
    a: float = -1.0
    b: float = 1.0
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        if self.lo is None:
            object.__setattr__(self, "lo", float(self.a))
        if self.hi is None:
            object.__setattr__(self, "hi", float(self.b))
        self._check_bounds()

    @property
    def density(self) -> float:
        return 1.0 / (self.b - self.a)

    def pdf(self, w):
        w = np.asarray(w)
        return np.where((w >= self.a) & (w <= self.b), self.density, 0.0)

    def sample(self, rng, n):
        return rng.uniform(self.a, self.b, n)

    def _clamp(self, a, b):
        return np.clip(a, self.a, self.b), np.clip(b, self.a, self.b)

    @property
    def breakpoints(self):
        return (float(self.a), float(self.b))

    # factored through (b - a) so narrow intervals keep their digits
    def moment_I(self, a, b, x0):
        a, b = self._clamp(a, b)
        x0 = np.asarray(x0, dtype=np.float64)
        u, v = a - x0, b - x0
        return self.density * (b - a) * (u * u + u * v + v * v) / 3.0

    def moment_J(self, a, b, x0):
        a, b = self._clamp(a, b)
        x0 = np.asarray(x0, dtype=np.float64)
        return self.density * (b - a) * ((a * a + a * b + b * b) / 3.0 - x0 * (a + b) / 2.0)

    @property
    def label(self):
        return "uniform"

    @property
    def params(self):
        return f"a={self.a:g};b={self.b:g}"


@dataclass(frozen=True)
class StudentT(Distribution):
    """Standard Student's-t with ``nu`` degrees of freedom.

    Closed forms go through ``2F1`` and are only used where the series is
    comfortable (``x**2 / nu <= SERIES_MAX_ABS_Z``); elsewhere the moment
    integrals fall back to adaptive quadrature, which is also the path
    :func:`fpquant.analytic.expected_mse` takes for this family.
    """

    nu: float = 2.0
    lo: float = -100.0
    hi: float = 100.0
    has_closed_form = False

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        self._check_bounds()

    @property
    def norm(self) -> float:
        nu = self.nu
        return math.sqrt(nu) * math.exp(math.lgamma(0.5) + math.lgamma(nu / 2) - math.lgamma((nu + 1) / 2))

    def pdf(self, w):
        w = np.asarray(w, dtype=np.float64)
        nu = self.nu
        return np.exp(-(nu + 1) / 2 * np.log1p(w * w / nu)) / self.norm

    def sample(self, rng, n):
        return rng.standard_t(self.nu, n)

    # antiderivatives of p, t*p and t**2*p (the first and last vanish at 0)
    def _g0(self, x):
        nu = self.nu
        return x * hyp2f1(0.5, (nu + 1) / 2, 1.5, -x * x / nu) / self.norm

    def _g1(self, x):
        nu = self.nu
        if nu == 1.0:
            return 0.5 * np.log1p(x * x) / self.norm
        return nu / (1.0 - nu) * np.exp((1.0 - nu) / 2 * np.log1p(x * x / nu)) / self.norm

    def _g2(self, x):
        nu = self.nu
        return x**3 / 3.0 * hyp2f1(1.5, (nu + 1) / 2, 2.5, -x * x / nu) / self.norm

    def series_ok(self, *xs) -> bool:
        return all(np.all(np.asarray(x) ** 2 / self.nu <= SERIES_MAX_ABS_Z) for x in xs)

    def closed_moment_I(self, a, b, x0):
        a, b, x0 = (np.asarray(v, dtype=np.float64) for v in (a, b, x0))
        g0 = self._g0(b) - self._g0(a)
        g1 = self._g1(b) - self._g1(a)
        g2 = self._g2(b) - self._g2(a)
        return g2 - 2.0 * x0 * g1 + x0 * x0 * g0

    def closed_moment_J(self, a, b, x0):
        a, b, x0 = (np.asarray(v, dtype=np.float64) for v in (a, b, x0))
        g1 = self._g1(b) - self._g1(a)
        g2 = self._g2(b) - self._g2(a)
        return g2 - x0 * g1

    def moment_I(self, a, b, x0):
        if self.series_ok(a, b):
            return self.closed_moment_I(a, b, x0)
        return self.quad_moment_I(a, b, x0)

    def moment_J(self, a, b, x0):
        if self.series_ok(a, b):
            return self.closed_moment_J(a, b, x0)
        return self.quad_moment_J(a, b, x0)

    @property
    def label(self):
        return "student_t"

    @property
    def params(self):
        return f"nu={self.nu:g}"


def parse_distribution(text: str) -> Distribution:
    """Parse ``gauss:mu=0,sigma=1,lo=-8,hi=8``, ``uniform:a=-1,b=1`` or ``t:nu=2,lo=-100,hi=100``."""
    name, _, rest = text.partition(":")
    kw = {}
    for item in filter(None, rest.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"bad distribution parameter {item!r}")
        kw[key.strip()] = float(val)
    name = name.strip().lower()
    try:
        if name in ("gauss", "gaussian", "normal"):
            return Gaussian(**kw)
        if name in ("uniform", "unif"):
            return Uniform(**kw)
        if name in ("t", "student", "student_t", "studentt"):
            return StudentT(**kw)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name!r}: {exc}") from None
    raise ValueError(f"unknown distribution {name!r}")
