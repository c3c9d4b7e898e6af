"""High-probability confidence intervals and the safe set they induce.

A point is classified safe when its lower confidence bound clears the
safety threshold; the initial safe seed is a member by definition,
regardless of data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .domain import as_points
from .gp import GpState

SEED_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SafetyModel:
    """Confidence-scale schedule plus the a-priori safe seed.

    ``beta`` may be a constant (the experimental default is 2, a
    per-iteration rather than anytime guarantee) or a schedule
    ``n -> beta_n``, which must be non-decreasing.
    """

    safe_seed: np.ndarray
    beta: Union[float, Callable[[int], float]] = 2.0
    threshold: float = 0.0
    seed_tol: float = SEED_TOLERANCE

    def __post_init__(self):
        seed = np.atleast_1d(np.asarray(self.safe_seed, dtype=float))
        seed.setflags(write=False)
        object.__setattr__(self, "safe_seed", seed)
        if not callable(self.beta) and self.beta < 0:
            raise ValueError("beta must be non-negative")

    def beta_at(self, n: int) -> float:
        if callable(self.beta):
            b = float(self.beta(n))
            if n > 0 and b < float(self.beta(n - 1)):
                raise ValueError("beta schedule must be non-decreasing")
            if b < 0:
                raise ValueError("beta schedule must be non-negative")
            return b
        return float(self.beta)

    def is_seed(self, x) -> np.ndarray:
        pts = as_points(x, self.safe_seed.shape[0])
        return np.all(np.abs(pts - self.safe_seed) <= self.seed_tol, axis=1)


def confidence_interval(gp: GpState, safety: SafetyModel, n: int, x):
    """``[mu - beta*sigma, mu + beta*sigma]`` at ``x`` (scalar or batch)."""
    mean, var = gp.posterior(x)
    half = safety.beta_at(n) * np.sqrt(var)
    return mean - half, mean + half


def is_safe(gp: GpState, safety: SafetyModel, n: int, x):
    """Membership in the current safe set.

    True iff the lower confidence bound is at or above the threshold, or
    ``x`` coincides with the safe seed within coordinate tolerance.
    """
    single = np.asarray(x).ndim == 1
    pts = as_points(x, safety.safe_seed.shape[0])
    lo, _ = confidence_interval(gp, safety, n, pts)
    out = (lo >= safety.threshold) | safety.is_seed(pts)
    if single:
        return bool(out[0])
    return out


def posterior_mean_bound_check(gp: GpState, safety: SafetyModel, n: int, probes) -> bool:
    """Diagnostic: |mu_n| <= 2 * beta_n * prior_std on every probe point.

    Holds with high probability when observations really come from a
    function inside the model's confidence tube; a False return signals a
    badly misspecified model or adversarial data.
    """
    pts = as_points(probes, gp.dim)
    mean, _ = gp.posterior(pts)
    prior_std = np.sqrt(gp.kernel.outputscale)
    return bool(np.all(np.abs(mean) <= 2.0 * safety.beta_at(n) * prior_std))
