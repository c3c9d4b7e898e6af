"""Constraint oracles with hidden ground truth.

Each environment exposes a domain box, an a-priori safe seed, a noisy
``evaluate`` channel for the explorer, and a ``true_constraint`` channel
reserved for metrics. Safety thresholds are folded into the constraint so
that safe always means f >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .domain import Box, GridDomain, as_points
from .gp import Kernel, NoiseModel, chol_with_jitter


class SeedRedrawError(RuntimeError):
    """Could not draw a sample with a strictly safe seed within the cap."""


class EnvironmentNumericalError(RuntimeError):
    """Simulation produced a non-finite trajectory; treat the query as unsafe."""


@dataclass
class Environment:
    """A hidden constraint f with noisy evaluations.

    ``true_constraint`` is a metrics-only channel: selection code must never
    see it, which the harness enforces by passing environments to nothing
    but the evaluation loop. The internal generator makes the environment
    single-owner per run.
    """

    name: str
    box: Box
    safe_seed: np.ndarray
    noise: NoiseModel
    _truth: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    rng: np.random.Generator = field(repr=False, default=None)
    meta: dict = field(default_factory=dict)

    def true_constraint(self, x):
        """Ground-truth constraint value; for metrics only, never selection."""
        single = np.asarray(x).ndim == 1
        out = self._truth(as_points(x, self.box.dim))
        if single:
            return float(out[0])
        return out

    def evaluate(self, x) -> float:
        """Noisy observation y = f(x) + Gaussian noise with the declared model."""
        pts = as_points(x, self.box.dim)
        f = self._truth(pts)
        if not np.all(np.isfinite(f)):
            raise EnvironmentNumericalError(f"{self.name}: non-finite constraint value at {pts}")
        nv = self.noise.variance_at(pts)
        return float(f[0] + self.rng.normal(0.0, np.sqrt(nv[0])))


def gp_sample_env(kernel: Kernel, grid: GridDomain, rng_seed: int,
                  noise: NoiseModel, safe_seed=None, max_redraws: int = 100) -> Environment:
    """Ground truth drawn from the kernel's prior on a finite grid.

    f is the noiseless interpolant of the joint draw (everywhere defined and
    kernel-consistent); draws are repeated until the seed is strictly safe.
    """
    pts = grid.points
    seed_point = np.zeros(grid.box.dim) if safe_seed is None else np.asarray(safe_seed, dtype=float)
    if not grid.box.contains(seed_point)[0]:
        raise ValueError("safe seed must lie inside the box")
    gram = kernel.gram(pts, pts)
    chol, _ = chol_with_jitter(gram, kernel.outputscale, start_frac=0.0)
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_redraws):
        sample = chol @ rng.standard_normal(len(pts))
        alpha = solve_triangular(chol.T, solve_triangular(chol, sample, lower=True), lower=False)

        def truth(x, _alpha=alpha, _pts=pts, _kernel=kernel):
            out = np.empty(x.shape[0])
            for lo in range(0, x.shape[0], 4096):
                block = x[lo:lo + 4096]
                out[lo:lo + 4096] = _kernel.gram(block, _pts) @ _alpha
            return out

        if truth(seed_point[None, :])[0] > 0.0:
            return Environment(
                name="gp_sample",
                box=grid.box,
                safe_seed=seed_point,
                noise=noise,
                _truth=truth,
                rng=np.random.default_rng(rng.integers(2**63)),
                meta={"grid_values": sample},
            )
    raise SeedRedrawError(f"no strictly safe seed after {max_redraws} draws")


def exponential_env(rng_seed: int = 0, lo: float = -5.0, hi: float = 5.0) -> Environment:
    """1-D constraint exp(-x) + 0.05: never truly unsafe, but the margin
    shrinks forever on the right while growing fast on the left."""

    def truth(x):
        return np.exp(-x[:, 0]) + 0.05

    return Environment(
        name="exponential",
        box=Box(np.array([lo]), np.array([hi])),
        safe_seed=np.zeros(1),
        noise=NoiseModel.homoskedastic(0.05),
        _truth=truth,
        rng=np.random.default_rng(rng_seed),
    )


# Bump centers shared by the higher-dimensional constraint families: both
# lie on the first coordinate axis.
BUMP_CENTER_1 = 2.7
BUMP_CENTER_2 = 6.0
BUMP_BOX_HALF_WIDTH = 8.0


def bump_env(kind: str, dimension: int, rng_seed: int = 0,
             half_width: float = BUMP_BOX_HALF_WIDTH) -> Environment:
    """Sum-of-Gaussian-bumps constraints for mid/high-dimensional runs.

    ``fived``: bumps of weight 1, 2, 5 at the origin and at the two centers,
    shifted down by 0.2 (unsafe far from the bumps); seed at (-0.2, ..., -0.2).
    ``heteroskedastic``: symmetric bumps 0.5 / 1 / 3 shifted up by 0.2 (never
    truly unsafe), seed at the origin, and a noise variance of 0.05 on the
    half-space with non-negative first coordinate vs 0.5 on the other half.
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    c1 = np.zeros(dimension)
    c1[0] = BUMP_CENTER_1
    c2 = np.zeros(dimension)
    c2[0] = BUMP_CENTER_2
    box = Box(np.full(dimension, -half_width), np.full(dimension, half_width))

    if kind == "fived":
        def truth(x):
            return (
                np.exp(-(x**2).sum(axis=1))
                + 2.0 * np.exp(-((x - c1) ** 2).sum(axis=1))
                + 5.0 * np.exp(-((x - c2) ** 2).sum(axis=1))
                - 0.2
            )

        seed = np.full(dimension, -0.2)
        noise = NoiseModel.homoskedastic(0.5)
    elif kind == "heteroskedastic":
        def truth(x):
            return (
                0.5 * np.exp(-(x**2).sum(axis=1))
                + np.exp(-((x - c1) ** 2).sum(axis=1))
                + np.exp(-((x + c1) ** 2).sum(axis=1))
                + 3.0 * np.exp(-((x - c2) ** 2).sum(axis=1))
                + 3.0 * np.exp(-((x + c2) ** 2).sum(axis=1))
                + 0.2
            )

        seed = np.zeros(dimension)
        noise = NoiseModel.halfspace(coord=0, positive=0.05, negative=0.5)
    else:
        raise ValueError(f"unknown bump kind {kind!r}")

    return Environment(
        name=f"bump_{kind}_{dimension}d",
        box=box,
        safe_seed=seed,
        noise=noise,
        _truth=truth,
        rng=np.random.default_rng(rng_seed),
    )


@dataclass(frozen=True)
class PendulumParams:
    """Rigid pendulum near the upright equilibrium with torque control.

    ``speed_limit`` saturates the angular velocity (a scaled-down version
    of the usual simulator's velocity clamp); it bounds how far the
    constraint can drop on falling trajectories, keeping the constraint
    range compatible with the model's prior variance.
    """

    gravity: float = 9.81
    mass: float = 1.0
    length: float = 1.0
    dt: float = 0.05
    steps: int = 400
    torque_limit: float = 2.0
    speed_limit: float = 1.0
    theta0: float = 0.1
    omega0: float = 0.0
    omega_max: float = 0.5
    signed: bool = True
    noise_var: float = 0.04
    box_lo: tuple = (-6.2, -2.1)
    box_hi: tuple = (-4.4, -0.8)
    seed_alpha: tuple = (-5.8, -1.5)


def simulate_pendulum(alphas, params: PendulumParams) -> np.ndarray:
    """Peak angular velocity per gain pair (batch over controllers).

    Torque u = a1*theta + a2*omega, clipped to the limit; semi-implicit
    Euler on theta'' = (3g/2l) sin(theta) + 3u/(m l^2).
    """
    a = np.atleast_2d(np.asarray(alphas, dtype=float))
    m = a.shape[0]
    th = np.full(m, params.theta0)
    om = np.full(m, params.omega0)
    grav = 3.0 * params.gravity / (2.0 * params.length)
    gain = 3.0 / (params.mass * params.length**2)
    peak = np.abs(om) if not params.signed else om.copy()
    for _ in range(params.steps):
        u = np.clip(a[:, 0] * th + a[:, 1] * om, -params.torque_limit, params.torque_limit)
        om = om + params.dt * (grav * np.sin(th) + gain * u)
        np.clip(om, -params.speed_limit, params.speed_limit, out=om)
        th = th + params.dt * om
        np.maximum(peak, np.abs(om) if not params.signed else om, out=peak)
    return peak


def pendulum_env(params: Optional[PendulumParams] = None, rng_seed: int = 0) -> Environment:
    """Constraint: the peak episode angular velocity stays below the limit,
    encoded as f(alpha) = omega_max - max_t omega_t(alpha)."""
    p = params or PendulumParams()

    def truth(x):
        peak = simulate_pendulum(x, p)
        return p.omega_max - peak

    return Environment(
        name="pendulum",
        box=Box(np.asarray(p.box_lo), np.asarray(p.box_hi)),
        safe_seed=np.asarray(p.seed_alpha, dtype=float),
        noise=NoiseModel.homoskedastic(p.noise_var),
        _truth=truth,
        rng=np.random.default_rng(rng_seed),
        meta={"params": p},
    )


@dataclass(frozen=True)
class CartPoleParams:
    """Pole on a cart with a continuous push force.

    ``force_gain`` scales the controller output into Newtons, matching the
    fixed push magnitude of the discrete original; its sign orients the
    push so that the published seed gains are stabilizing (under a
    positive gain and positive start angle the domain box contains no safe
    controller at all). Episodes terminate once the pole passes
    ``terminate_angle``, and the constraint is reported scaled by
    ``constraint_scale`` so both its safe plateau and its unsafe depth sit
    within a couple of prior standard deviations of the published model.
    """

    masscart: float = 1.0
    masspole: float = 0.1
    half_length: float = 0.5
    gravity: float = 9.8
    dt: float = 0.02
    steps: int = 200
    force_gain: float = -10.0
    theta0: float = -0.05
    theta_max: float = 0.28
    terminate_angle: float = 0.6
    constraint_scale: float = 10.0
    signed: bool = True
    noise_var: float = 0.05
    box_lo: tuple = (-2.0, -2.0, -2.0)
    box_hi: tuple = (0.0, 1.5, 7.0)
    seed_alpha: tuple = (-0.0073, -1.39, 2.01)


def simulate_cartpole(alphas, params: CartPoleParams) -> np.ndarray:
    """Peak pole angle per gain triple (batch over controllers).

    Force u = a1*theta + a2*theta_dot + a3*cart_velocity; the standard
    pole-on-cart equations integrated with explicit Euler. Diverged
    trajectories report NaN.
    """
    a = np.atleast_2d(np.asarray(alphas, dtype=float))
    m = a.shape[0]
    th = np.full(m, params.theta0)
    thdot = np.zeros(m)
    xdot = np.zeros(m)
    total = params.masscart + params.masspole
    pml = params.masspole * params.half_length
    peak = np.abs(th) if not params.signed else th.copy()
    alive = np.ones(m, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(params.steps):
            u = params.force_gain * (a[:, 0] * th + a[:, 1] * thdot + a[:, 2] * xdot)
            sin, cos = np.sin(th), np.cos(th)
            temp = (u + pml * thdot**2 * sin) / total
            thacc = (params.gravity * sin - cos * temp) / (
                params.half_length * (4.0 / 3.0 - params.masspole * cos**2 / total)
            )
            xacc = temp - pml * thacc * cos / total
            step = params.dt * alive
            th = th + step * thdot
            thdot = thdot + step * thacc
            xdot = xdot + step * xacc
            np.maximum(peak, np.abs(th) if not params.signed else th, out=peak)
            alive &= np.abs(th) <= params.terminate_angle
            if not alive.any():
                break
    peak[~np.isfinite(peak)] = np.nan
    return np.minimum(peak, params.terminate_angle)


def cartpole_env(params: Optional[CartPoleParams] = None, rng_seed: int = 0) -> Environment:
    """Constraint: the pole angle stays below the limit over the episode,
    encoded as f(alpha) = theta_max - max_t theta_t(alpha)."""
    p = params or CartPoleParams()

    def truth(x):
        peak = simulate_cartpole(x, p)
        return p.constraint_scale * (p.theta_max - peak)

    return Environment(
        name="cartpole",
        box=Box(np.asarray(p.box_lo), np.asarray(p.box_hi)),
        safe_seed=np.asarray(p.seed_alpha, dtype=float),
        noise=NoiseModel.homoskedastic(p.noise_var),
        _truth=truth,
        rng=np.random.default_rng(rng_seed),
        meta={"params": p},
    )
