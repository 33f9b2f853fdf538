"""Learnable FP quantizer: clipping value ``c`` and mantissa bits ``m``.

The forward pass is the ordinary FP quantizer with ``round(m)`` mantissa
bits, ``7 - round(m)`` exponent bits and the bias implied by ``c``.
Gradients:

* inputs get the straight-through gradient (1 inside ``[-c, c]``, else 0);
* ``c`` and ``m`` get the piecewise expressions below, with the binade
  index ``floor(log2|x| + bias)`` treated as a constant.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .formats import FpFormat, bias_from_max, pow2_neg_frac
from .quantsim import Tensor, _quantize_fp_array, fp_scale

__all__ = [
    "LearnState",
    "Trajectory",
    "DivergenceError",
    "forward",
    "grad_x",
    "grad_c",
    "grad_m",
    "loss_and_grads",
    "sgd_learn",
    "line_search_mse",
    "DEFAULT_LR_C",
    "DEFAULT_LR_M",
]

TOTAL_BITS = 7
M_MIN, M_MAX = 1.0, 6.0
# largest lr_c that keeps c within 10% of the N(0,1) optimum for 500 steps
DEFAULT_LR_C = 1e4
DEFAULT_LR_M = 1e-2
_LN2 = math.log(2.0)


def round_half_up(m: float) -> int:
    return int(math.floor(m + 0.5))


@dataclass(frozen=True)
class LearnState:
    c: float
    m: float
    iteration: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 1 <= round_half_up(self.m) <= 6:
            raise ValueError(f"round(m) must be in 1..6, got m={self.m}")

    @classmethod
    def from_format(cls, m: int, e: int, bias: float) -> "LearnState":
        from .formats import max_representable

        if m + e != TOTAL_BITS:
            raise ValueError("learning works on 8-bit formats (m + e == 7)")
        return cls(c=max_representable(FpFormat(m, e, bias)), m=float(m))

    @property
    def m_int(self) -> int:
        return round_half_up(self.m)

    @property
    def e(self) -> int:
        return TOTAL_BITS - self.m_int

    @property
    def bias(self) -> float:
        return bias_from_max(self.c, self.m_int, self.e)

    @property
    def format(self) -> FpFormat:
        return FpFormat(self.m_int, self.e, self.bias)


def _arr(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def forward(x, state: LearnState):
    arr = _arr(x)
    out = _quantize_fp_array(arr, state.m_int, state.e, state.bias)
    return x.with_data(out) if isinstance(x, Tensor) else out


def grad_x(x, state: LearnState) -> np.ndarray:
    arr = _arr(x)
    return ((arr >= -state.c) & (arr <= state.c)).astype(np.float64)


def _residual(arr, state):
    """Scale ``s``, rounding residual ``round(xc/s) - xc/s`` and normal mask.

    The residual is taken from the quantized value itself, ``(Q(xc) - xc) / s``,
    so it is exactly zero on grid points and follows the forward tie rule.
    """
    xc = np.clip(arr, -state.c, state.c)
    bias = state.bias
    _, shift, normal = fp_scale(xc, state.m_int, bias)
    s = np.ldexp(1.0, shift) * pow2_neg_frac(bias - math.floor(bias))
    q = _quantize_fp_array(xc, state.m_int, state.e, bias)
    return s, (q - xc) / s, normal


def grad_c(x, state: LearnState) -> np.ndarray:
    """dF/dc: ``(s/c) * residual`` (normal), ``1/(c ln 2)`` (subnormal), -1 / +1 when clipped."""
    arr = _arr(x)
    c = state.c
    s, r, normal = _residual(arr, state)
    g = np.where(normal, s / c * r, 1.0 / (c * _LN2))
    g = np.where(arr < -c, -1.0, g)
    return np.where(arr > c, 1.0, g)


def grad_m(x, state: LearnState) -> np.ndarray:
    """dF/dm: ``s ln 2 * residual * (2**(7 - round(m)) + 2**-m / (2 - 2**-m))``."""
    arr = _arr(x)
    m = state.m
    s, r, _ = _residual(arr, state)
    k = 2.0 ** (TOTAL_BITS - state.m_int) + 2.0**-m / (2.0 - 2.0**-m)
    return s * _LN2 * r * k


def loss_and_grads(x, state: LearnState):
    """Mean squared reconstruction error and its gradients w.r.t. ``c`` and ``m``."""
    arr = _arr(x)
    diff = arr - forward(arr, state)
    loss = float(np.mean(diff * diff))
    # dL/dtheta = mean(-2 (x - F) dF/dtheta); np.mean uses pairwise summation
    dc = float(np.mean(-2.0 * diff * grad_c(arr, state)))
    dm = float(np.mean(-2.0 * diff * grad_m(arr, state)))
    return loss, dc, dm


class DivergenceError(RuntimeError):
    pass


@dataclass
class Trajectory:
    iters: list[int] = field(default_factory=list)
    c: list[float] = field(default_factory=list)
    m: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    final: LearnState | None = None

    def append(self, state: LearnState, loss: float):
        self.iters.append(state.iteration)
        self.c.append(state.c)
        self.m.append(state.m)
        self.loss.append(loss)

    def __len__(self):
        return len(self.iters)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "c", "m", "loss"])
        for row in zip(self.iters, self.c, self.m, self.loss):
            w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
        return buf.getvalue()


def sgd_learn(
    samples,
    init: LearnState,
    lr_c: float = DEFAULT_LR_C,
    lr_m: float = DEFAULT_LR_M,
    iters: int = 500,
    c_floor: float = 1e-12,
) -> Trajectory:
    """Full-batch SGD on ``c`` and ``m``.

    Row ``i`` of the trajectory holds the state used at iteration ``i`` and
    its loss; ``final`` is the state after the last update.  ``c`` is kept
    above ``c_floor`` and ``m`` inside ``[1, 6]``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if lr_c < 0 or lr_m < 0:
        raise ValueError("learning rates must be non-negative")
    arr = _arr(samples).ravel()
    state = replace(init, iteration=0)
    traj = Trajectory()
    first = None
    for _ in range(iters):
        loss, dc, dm = loss_and_grads(arr, state)
        if first is None:
            first = loss
        elif loss > 1e6 * max(first, np.finfo(float).tiny):
            raise DivergenceError(f"loss {loss:g} exceeded 1e6 x initial {first:g} at iteration {state.iteration}")
        traj.append(state, loss)
        c = max(state.c - lr_c * dc, c_floor)
        m = min(max(state.m - lr_m * dm, M_MIN), M_MAX)
        state = LearnState(c=c, m=m, iteration=state.iteration + 1)
    traj.final = state
    return traj


def line_search_mse(samples, n_c: int = 1000, lo: float = 0.05, hi: float = 1.2, chunk: int = 25):
    """Exhaustive search over ``m`` in 1..6 and ``n_c`` clipping values.

    The clipping grid spans ``[lo, hi] * absmax`` and also contains absmax
    itself, the min-max choice.  Ties prefer smaller ``m``, then smaller
    ``c``.  Returns ``(m, c, mse)``.
    """
    arr = _arr(samples).ravel()
    if arr.size == 0:
        raise ValueError("empty sample")
    amax = float(np.max(np.abs(arr)))
    if amax == 0.0:
        raise ValueError("all-zero sample has no range to search")
    cs = np.unique(np.append(np.linspace(lo, hi, n_c) * amax, amax))
    best = (math.inf, 0, 0.0)
    for m in range(1, 7):
        e = TOTAL_BITS - m
        for i in range(0, cs.size, chunk):
            cc = cs[i : i + chunk]
            q = _quantize_fp_array(arr[None, :], m, e, bias_from_max(cc, m, e)[:, None])
            mse = np.mean((arr[None, :] - q) ** 2, axis=1)
            j = int(np.argmin(mse))
            if mse[j] < best[0]:
                best = (float(mse[j]), m, float(cc[j]))
    return best[1], best[2], best[0]
