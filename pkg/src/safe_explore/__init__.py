"""Safe exploration of unknown constraints with GP models.

Public surface: GP regression (:mod:`safe_explore.gp`), the safe set
(:mod:`safe_explore.safety`), the information-gain pair search
(:mod:`safe_explore.acquisition`), grid and line baselines, benchmark
environments, and the experiment harness with its CLI.
"""

from .acquisition import (
    AcquisitionChoice,
    OptimizerConfig,
    b_function,
    b_inverse,
    entropy_approx,
    entropy_exact,
    expected_post_entropy,
    mi_upper_bound,
    mutual_info,
    mutual_info_rewritten,
    select_next,
)
from .baselines import BaselineChoice, LipschitzConfig, select_next_baseline
from .domain import Box, GridDomain
from .environments import (
    Environment,
    bump_env,
    cartpole_env,
    exponential_env,
    gp_sample_env,
    pendulum_env,
)
from .gp import (
    Dataset,
    GpState,
    Kernel,
    NoiseModel,
    NumericalDegeneracyError,
    condition,
    cross_correlation,
    noise_variance,
    posterior,
)
from .safety import SafetyModel, confidence_interval, is_safe, posterior_mean_bound_check
from .subspace import LineRestriction, sample_lines, select_next_on_lines

__all__ = [
    "AcquisitionChoice",
    "BaselineChoice",
    "Box",
    "Dataset",
    "Environment",
    "GpState",
    "GridDomain",
    "Kernel",
    "LineRestriction",
    "LipschitzConfig",
    "NoiseModel",
    "NumericalDegeneracyError",
    "OptimizerConfig",
    "SafetyModel",
    "b_function",
    "b_inverse",
    "bump_env",
    "cartpole_env",
    "condition",
    "confidence_interval",
    "cross_correlation",
    "entropy_approx",
    "entropy_exact",
    "expected_post_entropy",
    "exponential_env",
    "gp_sample_env",
    "is_safe",
    "mi_upper_bound",
    "mutual_info",
    "mutual_info_rewritten",
    "noise_variance",
    "pendulum_env",
    "posterior",
    "posterior_mean_bound_check",
    "select_next",
    "select_next_baseline",
    "select_next_on_lines",
    "sample_lines",
]
