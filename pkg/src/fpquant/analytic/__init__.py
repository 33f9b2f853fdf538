"""Analytic expected quantization error for clipped parametric densities."""

from .distributions import Distribution, Gaussian, StudentT, Uniform, parse_distribution
from .mse import (
    ErrorBreakdown,
    ScalarProductTerms,
    clipping_error,
    expected_mse,
    monte_carlo_mse,
    moment_integral_I,
    moment_integral_J,
    quadrature_mse_oracle,
    rounding_error,
    scalar_product_mse,
    scalar_product_mse_approx,
    scalar_product_terms,
    sqnr,
    sqnr_scalar_product,
)
from .optimize import OptimalFormat, candidate_formats, golden_section, minmax_format, optimal_fp_format, optimal_int_format
from .quadrature import QuadResult, QuadratureWarning, integrate, integrate_intervals
