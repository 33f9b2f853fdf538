"""Gauss hypergeometric function for non-positive arguments.

Only what the Student's-t moment integrals need: ``2F1(a, b; c; z)`` for
``z <= 0``, evaluated by the Pfaff transformation

    2F1(a, b; c; z) = (1 - z)**-a * 2F1(a, c - b; c; z / (z - 1))

which maps ``z <= 0`` onto ``[0, 1)`` where the power series converges.
Convergence slows as ``|z|`` grows; callers should stay within moderate
``|z|`` (see ``SERIES_MAX_ABS_Z``) and fall back to quadrature beyond.
"""

from __future__ import annotations

import numpy as np

__all__ = ["hyp2f1", "SeriesConvergenceError", "SERIES_MAX_ABS_Z"]

SERIES_MAX_ABS_Z = 24.0


class SeriesConvergenceError(ArithmeticError):
    pass


def _series(a, b, c, w, tol, max_terms):
    w = np.asarray(w, dtype=np.float64)
    term = np.ones_like(w)
    total = np.ones_like(w)
    for k in range(max_terms):
        term = term * (a + k) * (b + k) / ((c + k) * (k + 1)) * w
        total = total + term
        if np.all(np.abs(term) <= tol * np.abs(total)):
            return total
    raise SeriesConvergenceError(f"2F1 series did not converge in {max_terms} terms (max w={np.max(w):.4f})")


def hyp2f1(a: float, b: float, c: float, z, tol: float = 1e-17, max_terms: int = 20000):
    """``2F1(a, b; c; z)`` for ``z <= 0`` (array-valued ``z`` allowed)."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z > 0):
        raise ValueError("hyp2f1 here is only implemented for z <= 0")
    w = z / (z - 1.0)
    return (1.0 - z) ** (-a) * _series(a, c - b, c, w, tol, max_terms)
