"""Exact Gaussian-process regression with incremental conditioning.

Zero prior mean throughout; observation noise may vary over the input
space. States are immutable: conditioning returns a new state backed by
an extended triangular factor, with a full refactorization every
``REFIT_PERIOD`` updates to bound numerical drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .domain import as_points

REFIT_PERIOD = 50

# Jitter ladder relative to the prior variance: start tiny, double until the
# factorization succeeds, give up past JITTER_MAX_FRAC.
JITTER_START_FRAC = 1e-10
JITTER_MAX_FRAC = 1e-4

# Posterior variances at or below this fraction of the prior variance are
# treated as exhausted: correlations against them are defined to be zero.
# Sits above the jitter floor (JITTER_START_FRAC) that bounds how far a
# factored posterior variance can actually collapse.
VARIANCE_FLOOR_FRAC = 1e-9


class NumericalDegeneracyError(RuntimeError):
    """Gram matrix stayed non-positive-definite through the jitter ladder."""


@dataclass(frozen=True)
class Kernel:
    """Radial-basis-function kernel with per-dimension lengthscales.

    ``k(x, x') = outputscale * exp(-0.5 * sum_i ((x_i - x'_i) / lengthscale_i)^2)``

    so ``k(x, x) = outputscale`` everywhere and ``|k(x, x')| <= outputscale``.
    """

    lengthscale: np.ndarray
    outputscale: float = 1.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be positive")
        if self.outputscale <= 0:
            raise ValueError("outputscale must be positive")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscale", ls)
        object.__setattr__(self, "outputscale", float(self.outputscale))

    @staticmethod
    def rbf(lengthscale, outputscale: float = 1.0, dim: int | None = None) -> "Kernel":
        ls = np.atleast_1d(np.asarray(lengthscale, dtype=float))
        if dim is not None and ls.shape[0] == 1:
            ls = np.full(dim, ls[0])
        return Kernel(lengthscale=ls, outputscale=outputscale)

    def _scale(self, dim: int) -> np.ndarray:
        ls = self.lengthscale
        if ls.shape[0] == 1 and dim > 1:
            ls = np.full(dim, ls[0])
        if ls.shape[0] != dim:
            raise ValueError(f"kernel lengthscale dimension {ls.shape[0]} != point dimension {dim}")
        return ls

    def gram(self, a, b) -> np.ndarray:
        """Kernel matrix between two point sets, shape (len(a), len(b))."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        ls = self._scale(a.shape[1])
        sa = a / ls
        sb = b / ls
        d2 = (
            (sa * sa).sum(axis=1)[:, None]
            + (sb * sb).sum(axis=1)[None, :]
            - 2.0 * sa @ sb.T
        )
        np.maximum(d2, 0.0, out=d2)
        return self.outputscale * np.exp(-0.5 * d2)

    def pair(self, a, b) -> np.ndarray:
        """Row-wise kernel values k(a_i, b_i), shape (len(a),)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        ls = self._scale(a.shape[1])
        d2 = (((a - b) / ls) ** 2).sum(axis=1)
        return self.outputscale * np.exp(-0.5 * d2)

    def metric(self, a, b) -> np.ndarray:
        """Row-wise kernel-induced metric sqrt(k(a,a) + k(b,b) - 2k(a,b))."""
        arg = 2.0 * self.outputscale - 2.0 * self.pair(a, b)
        return np.sqrt(np.maximum(arg, 0.0))

    def metric_from_scaled_dist(self, r: np.ndarray) -> np.ndarray:
        """Kernel metric as a function of lengthscale-scaled Euclidean distance."""
        return np.sqrt(2.0 * self.outputscale * -np.expm1(-0.5 * np.asarray(r) ** 2))


@dataclass(frozen=True)
class NoiseModel:
    """Observation-noise variance as a function of the input point."""

    kind: str
    _variance_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=None)

    @staticmethod
    def homoskedastic(variance: float) -> "NoiseModel":
        if variance <= 0:
            raise ValueError("noise variance must be positive")
        v = float(variance)
        return NoiseModel(kind="homoskedastic", _variance_fn=lambda pts: np.full(pts.shape[0], v))

    @staticmethod
    def heteroskedastic(fn: Callable[[np.ndarray], np.ndarray]) -> "NoiseModel":
        return NoiseModel(kind="heteroskedastic", _variance_fn=fn)

    @staticmethod
    def halfspace(coord: int = 0, positive: float = 0.05, negative: float = 0.5) -> "NoiseModel":
        """Two noise levels split on the sign of one coordinate."""
        if positive <= 0 or negative <= 0:
            raise ValueError("noise variances must be positive")

        def fn(pts: np.ndarray) -> np.ndarray:
            return np.where(pts[:, coord] >= 0.0, positive, negative)

        return NoiseModel(kind="heteroskedastic", _variance_fn=fn)

    def variance_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        out = np.asarray(self._variance_fn(pts), dtype=float)
        if out.shape != (pts.shape[0],):
            raise ValueError("noise model returned wrong shape")
        if np.any(out <= 0):
            raise ValueError("noise model produced a non-positive variance")
        return out


@dataclass(frozen=True)
class Dataset:
    """Evaluation history: points, noisy observations, per-point noise variances."""

    points: np.ndarray
    observations: np.ndarray
    noise_variances: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        obs = np.asarray(self.observations, dtype=float)
        nv = np.asarray(self.noise_variances, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be (n, d)")
        if obs.shape != (pts.shape[0],) or nv.shape != (pts.shape[0],):
            raise ValueError("observations / noise variances must match point count")
        if np.any(nv <= 0):
            raise ValueError("per-point noise variances must be positive")
        for arr in (pts, obs, nv):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "noise_variances", nv)

    @staticmethod
    def empty(dim: int) -> "Dataset":
        return Dataset(np.empty((0, dim)), np.empty(0), np.full(0, 1.0))

    def __len__(self) -> int:
        return self.points.shape[0]

    def extended(self, x: np.ndarray, y: float, noise_variance: float) -> "Dataset":
        return Dataset(
            np.vstack([self.points, x[None, :]]),
            np.append(self.observations, y),
            np.append(self.noise_variances, noise_variance),
        )


def chol_with_jitter(mat: np.ndarray, scale: float, start_frac: float = JITTER_START_FRAC,
                     max_frac: float = JITTER_MAX_FRAC):
    """Lower-triangular factor of ``mat + jitter*I``, escalating jitter on failure.

    Returns ``(L, jitter)``. ``start_frac`` of 0 attempts an exact
    factorization before entering the ladder.
    """
    n = mat.shape[0]
    if n == 0:
        return np.empty((0, 0)), 0.0
    frac = start_frac
    while True:
        jitter = frac * scale
        try:
            L = cholesky(mat + jitter * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        if frac == 0.0:
            frac = JITTER_START_FRAC
        else:
            frac *= 2.0
        if frac > max_frac:
            raise NumericalDegeneracyError(
                f"Gram matrix not positive definite up to jitter {max_frac * scale:g}"
            )


@dataclass(frozen=True)
class GpState:
    """Immutable snapshot of a zero-mean GP conditioned on a dataset.

    Holds the lower-triangular factor ``L`` of ``K + diag(noise) + jitter*I``
    together with the whitened observations, so posterior queries are
    triangular solves.
    """

    kernel: Kernel
    noise: NoiseModel
    data: Dataset
    chol: np.ndarray = field(repr=False)
    white_y: np.ndarray = field(repr=False)
    jitter: float
    updates_since_refit: int = 0

    @staticmethod
    def fit(kernel: Kernel, noise: NoiseModel, data: Dataset | None = None, dim: int | None = None) -> "GpState":
        if data is None:
            if dim is None:
                raise ValueError("need a dataset or an input dimension")
            data = Dataset.empty(dim)
        n = len(data)
        if n == 0:
            return GpState(kernel, noise, data, np.empty((0, 0)), np.empty(0), 0.0)
        gram = kernel.gram(data.points, data.points) + np.diag(data.noise_variances)
        L, jitter = chol_with_jitter(gram, kernel.outputscale)
        white = solve_triangular(L, data.observations, lower=True)
        for arr in (L, white):
            arr.setflags(write=False)
        return GpState(kernel, noise, data, L, white, jitter)

    @property
    def dim(self) -> int:
        return self.data.points.shape[1]

    @property
    def n(self) -> int:
        return len(self.data)

    def _var_floor(self) -> float:
        return VARIANCE_FLOOR_FRAC * self.kernel.outputscale

    def posterior(self, x):
        """Posterior mean and variance at one point or an (m, d) batch."""
        single = np.asarray(x).ndim == 1
        pts = as_points(x, self.dim)
        if self.n == 0:
            mean = np.zeros(pts.shape[0])
            var = np.full(pts.shape[0], self.kernel.outputscale)
        else:
            kxd = self.kernel.gram(pts, self.data.points)
            v = solve_triangular(self.chol, kxd.T, lower=True)
            mean = v.T @ self.white_y
            var = self.kernel.outputscale - np.einsum("ij,ij->j", v, v)
            np.maximum(var, 0.0, out=var)
        if single:
            return float(mean[0]), float(var[0])
        return mean, var

    def posterior_pair_cov(self, x, z):
        """Posterior covariance cov(f(x_i), f(z_i)) for paired rows."""
        single = np.asarray(x).ndim == 1
        xs = as_points(x, self.dim)
        zs = as_points(z, self.dim)
        prior = self.kernel.pair(xs, zs)
        if self.n == 0:
            cov = prior
        else:
            vx = solve_triangular(self.chol, self.kernel.gram(xs, self.data.points).T, lower=True)
            vz = solve_triangular(self.chol, self.kernel.gram(zs, self.data.points).T, lower=True)
            cov = prior - np.einsum("ij,ij->j", vx, vz)
        if single:
            return float(cov[0])
        return cov

    def condition(self, x, y: float) -> "GpState":
        """Return a new state additionally conditioned on an observation at x.

        Extends the triangular factor by one row; falls back to a full refit
        when the extension degenerates or the refit period elapses.
        """
        xv = np.asarray(x, dtype=float).reshape(-1)
        nv = float(self.noise.variance_at(xv[None, :])[0])
        new_data = self.data.extended(xv, float(y), nv)
        if self.n == 0 or self.updates_since_refit + 1 >= REFIT_PERIOD:
            state = GpState.fit(self.kernel, self.noise, new_data)
            return state
        kxd = self.kernel.gram(xv[None, :], self.data.points)[0]
        c = solve_triangular(self.chol, kxd, lower=True)
        d2 = self.kernel.outputscale + nv + self.jitter - c @ c
        if d2 <= self._var_floor():
            return GpState.fit(self.kernel, self.noise, new_data)
        d = np.sqrt(d2)
        n = self.n
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.chol
        L[n, :n] = c
        L[n, n] = d
        white = np.append(self.white_y, (float(y) - c @ self.white_y) / d)
        for arr in (L, white):
            arr.setflags(write=False)
        return GpState(self.kernel, self.noise, new_data, L, white, self.jitter,
                       self.updates_since_refit + 1)

    def noise_variance_at(self, x):
        single = np.asarray(x).ndim == 1
        out = self.noise.variance_at(as_points(x, self.dim) if self.dim else np.asarray(x))
        if single:
            return float(out[0])
        return out


def posterior(gp: GpState, x):
    """Posterior mean and variance of the constraint model at ``x``."""
    return gp.posterior(x)


def cross_correlation(gp: GpState, x, z):
    """Posterior correlation of f(x) and f(z), clamped to [-1, 1].

    Points whose posterior variance has collapsed to (numerical) zero carry
    no further information, so their correlation is defined to be 0.
    """
    single = np.asarray(x).ndim == 1
    xs = as_points(x, gp.dim)
    zs = as_points(z, gp.dim)
    _, vx = gp.posterior(xs)
    _, vz = gp.posterior(zs)
    cov = gp.posterior_pair_cov(xs, zs)
    floor = gp._var_floor()
    ok = (vx > floor) & (vz > floor)
    rho = np.zeros(xs.shape[0])
    rho[ok] = np.clip(cov[ok] / np.sqrt(vx[ok] * vz[ok]), -1.0, 1.0)
    if single:
        return float(rho[0])
    return rho


def condition(gp: GpState, x, y: float) -> GpState:
    """New GP state conditioned on one more observation; ``gp`` is unchanged."""
    return gp.condition(x, y)


def noise_variance(gp: GpState, x):
    """Observation-noise variance the model assumes at ``x``."""
    return gp.noise_variance_at(x)
