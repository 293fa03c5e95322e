"""Simulation toolkit for time-fractional stochastic heat equations with fractional noise."""

__version__ = "0.1.0"

from .additive_solver import SolutionField, second_moment_mc, solve_additive
from .errors import (CapExceeded, ConvergenceError, DimensionMismatch, DomainError, FracHeatError,
                     NegativeMoment, NoConvergence, NotPositiveDefinite, PoleError, SingularTime,
                     TruncationError)
from .fbm_field import FieldRealization, Grid, HurstVector, SeedSpec, apply_M, fbm_covariance, sample_fbm
from .heat_kernels import HeatParams, deterministic_part, kernel_table, noise_kernel
from .mildness import Verdict, classify, exponent_test, g_norm_sq, refinement_experiment
from .special_functions import caputo_l1, gamma_fn, mittag_leffler
from .volterra_solver import picard_solve, truncation_bound
from .wis_integral import Integrand, MomentEstimate, isometry_norm, k_constant, l2_upper_bound

__all__ = [
    "__version__",
    "SolutionField", "second_moment_mc", "solve_additive",
    "CapExceeded", "ConvergenceError", "DimensionMismatch", "DomainError", "FracHeatError",
    "NegativeMoment", "NoConvergence", "NotPositiveDefinite", "PoleError", "SingularTime",
    "TruncationError",
    "FieldRealization", "Grid", "HurstVector", "SeedSpec", "apply_M", "fbm_covariance", "sample_fbm",
    "HeatParams", "deterministic_part", "kernel_table", "noise_kernel",
    "Verdict", "classify", "exponent_test", "g_norm_sq", "refinement_experiment",
    "caputo_l1", "gamma_fn", "mittag_leffler",
    "picard_solve", "truncation_bound",
    "Integrand", "MomentEstimate", "isometry_norm", "k_constant", "l2_upper_bound",
]
