"""Low-bit floating-point and integer quantization: simulation, analytic error, format search and learning."""

from .formats import (
    FpFormat,
    IntFormat,
    QuantGrid,
    bias_from_max,
    enumerate_grid,
    enumerate_int_grid,
    max_representable,
    min_normal,
    min_subnormal,
)
from .quantsim import QuantizerConfig, Tensor, empirical_mse, quantize, quantize_fp, quantize_fp_oracle, quantize_int

__version__ = "0.1.0"

__all__ = [
    "FpFormat",
    "IntFormat",
    "QuantGrid",
    "QuantizerConfig",
    "Tensor",
    "bias_from_max",
    "empirical_mse",
    "enumerate_grid",
    "enumerate_int_grid",
    "max_representable",
    "min_normal",
    "min_subnormal",
    "quantize",
    "quantize_fp",
    "quantize_fp_oracle",
    "quantize_int",
]
