"""Grid-based safe exploration baselines.

All three variants pick the highest-variance point from a candidate set:
the whole safe set (uncertainty sampling), safe points that could reach an
unsafe point under a Lipschitz bound in the kernel metric, or safe points
whose optimistic hypothetical observation would enlarge the safe set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial import cKDTree

from .domain import GridDomain
from .gp import GpState
from .safety import SafetyModel, is_safe

BASELINE_KINDS = ("stageopt", "heuristic", "uncertainty")


@dataclass(frozen=True)
class LipschitzConfig:
    """Lipschitz constant for expander detection, in kernel-metric units."""

    lipschitz: float = 1.0

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ValueError("Lipschitz constant must be non-negative")


@dataclass(frozen=True)
class BaselineChoice:
    x_next: np.ndarray
    index: int
    score: float
    expander_fallback: bool
    expander_count: int


def _grid_stats(gp: GpState, safety: SafetyModel, n: int, grid: GridDomain, stats=None):
    """Posterior mean/std on the grid plus the safe-set mask."""
    if stats is None:
        mu, var = gp.posterior(grid.points)
    else:
        mu, var = stats
    sd = np.sqrt(np.maximum(var, 0.0))
    safe = (mu - safety.beta_at(n) * sd >= safety.threshold) | safety.is_seed(grid.points)
    return mu, sd, safe


def _lipschitz_expander_mask(gp, beta, threshold, points, mu, sd, safe, lipschitz):
    """Safe points whose optimistic value still clears the threshold at the
    kernel-metric distance of the nearest unsafe point."""
    mask = np.zeros(points.shape[0], dtype=bool)
    if not safe.any() or safe.all():
        return mask
    ls = gp.kernel._scale(points.shape[1])
    scaled = points / ls
    tree = cKDTree(scaled[~safe])
    dist, _ = tree.query(scaled[safe])
    metric = gp.kernel.metric_from_scaled_dist(dist)
    ucb = mu[safe] + beta * sd[safe]
    mask[np.flatnonzero(safe)] = ucb - lipschitz * metric >= threshold
    return mask


def _heuristic_expander_mask(gp, beta, threshold, points, mu, var, safe, chunk=512):
    """Safe points where observing mu + beta*sigma would newly classify at
    least one currently-unsafe point as safe (one-step posterior update)."""
    mask = np.zeros(points.shape[0], dtype=bool)
    sd = np.sqrt(np.maximum(var, 0.0))
    # Only optimistically-reachable unsafe points can flip; everything else
    # stays unsafe under any single update.
    band = ~safe & (mu + beta * sd >= threshold)
    if not safe.any() or not band.any():
        return mask
    safe_idx = np.flatnonzero(safe)
    band_pts = points[band]
    mu_b, var_b = mu[band], var[band]
    if gp.n:
        v_band = solve_triangular(gp.chol, gp.kernel.gram(band_pts, gp.data.points).T, lower=True)
    noise = gp.noise_variance_at(points[safe_idx])
    for lo in range(0, safe_idx.size, chunk):
        idx = safe_idx[lo:lo + chunk]
        pts = points[idx]
        cov = gp.kernel.gram(pts, band_pts)
        if gp.n:
            v_pts = solve_triangular(gp.chol, gp.kernel.gram(pts, gp.data.points).T, lower=True)
            cov -= v_pts.T @ v_band
        denom = var[idx] + noise[lo:lo + chunk]
        gain = beta * sd[idx] / denom
        mu_plus = mu_b[None, :] + cov * gain[:, None]
        var_plus = np.maximum(var_b[None, :] - cov**2 / denom[:, None], 0.0)
        flips = mu_plus - beta * np.sqrt(var_plus) >= threshold
        mask[idx] = flips.any(axis=1)
    return mask


def stageopt_expanders(gp: GpState, safety: SafetyModel, n: int, grid: GridDomain,
                       cfg: LipschitzConfig, stats=None) -> np.ndarray:
    """Indices of grid points in the Lipschitz expander set (may be empty)."""
    mu, sd, safe = _grid_stats(gp, safety, n, grid, stats)
    mask = _lipschitz_expander_mask(gp, safety.beta_at(n), safety.threshold,
                                    grid.points, mu, sd, safe, cfg.lipschitz)
    return np.flatnonzero(mask)


def heuristic_expanders(gp: GpState, safety: SafetyModel, n: int, grid: GridDomain,
                        stats=None) -> np.ndarray:
    """Indices of grid points in the posterior-based expander set."""
    mu, sd, safe = _grid_stats(gp, safety, n, grid, stats)
    mask = _heuristic_expander_mask(gp, safety.beta_at(n), safety.threshold,
                                    grid.points, mu, sd**2, safe)
    return np.flatnonzero(mask)


def select_next_baseline(kind: str, gp: GpState, safety: SafetyModel, n: int,
                         grid: GridDomain, cfg: Optional[LipschitzConfig] = None,
                         stats=None) -> BaselineChoice:
    """Highest-variance point of the kind's candidate set.

    The exact safe seed participates as a virtual candidate (reported with
    index ``len(grid)``) so the discretized algorithms always have a safe
    point even when no grid node clears the confidence test. An empty
    expander set stalls the method: selection falls back to the most
    uncertain already-evaluated safe point (a re-evaluation), flagged so
    the stall stays visible in run metrics and coverage curves.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}")
    mu, sd, safe = _grid_stats(gp, safety, n, grid, stats)
    if kind == "stageopt":
        expanders = _lipschitz_expander_mask(gp, safety.beta_at(n), safety.threshold,
                                             grid.points, mu, sd, safe,
                                             (cfg or LipschitzConfig()).lipschitz)
    elif kind == "heuristic":
        expanders = _heuristic_expander_mask(gp, safety.beta_at(n), safety.threshold,
                                             grid.points, mu, sd**2, safe)
    else:
        expanders = safe
    count = int(expanders.sum())
    fallback = kind != "uncertainty" and count == 0
    cand_idx = np.flatnonzero(safe if kind == "uncertainty" else expanders)
    if cand_idx.size:
        best = cand_idx[int(np.argmax(sd[cand_idx]))]
        return BaselineChoice(
            x_next=grid.points[best].copy(),
            index=int(best),
            score=float(sd[best]),
            expander_fallback=fallback,
            expander_count=count,
        )
    evaluated = [safety.safe_seed[None, :]]
    if gp.n:
        pts = gp.data.points
        mask = is_safe(gp, safety, n, pts)
        if mask.any():
            evaluated.append(pts[mask])
    evaluated = np.vstack(evaluated)
    _, evar = gp.posterior(evaluated)
    best = int(np.argmax(evar))
    return BaselineChoice(
        x_next=evaluated[best].copy(),
        index=len(grid),
        score=float(np.sqrt(max(evar[best], 0.0))),
        expander_fallback=kind != "uncertainty",
        expander_count=count,
    )
