import numpy as np
import pytest

from safe_explore.gp import Dataset, GpState, Kernel, NoiseModel


def make_gp(points, observations, lengthscale=1.0, outputscale=1.0, noise=0.1, dim=None):
    """GP state fitted to explicit data with homoskedastic noise."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        pts = pts.reshape(0, dim or 1)
    kernel = Kernel.rbf(lengthscale, outputscale, dim=pts.shape[1])
    nm = NoiseModel.homoskedastic(noise)
    data = Dataset(pts, np.asarray(observations, dtype=float), nm.variance_at(pts)
                   if len(pts) else np.empty(0))
    return GpState.fit(kernel, nm, data)


def random_gp_state(rng, dim=None, max_points=8, noise_lo=0.1, noise_hi=1.0,
                    scale_lo=0.5, scale_hi=3.0):
    """Small random GP state over [-2, 2]^d, used by the property sweeps.

    Noise is kept away from zero so the 64-node quadrature oracle stays
    inside its convergence range.
    """
    if dim is None:
        dim = int(rng.integers(1, 3))
    ls = rng.uniform(0.3, 2.0)
    s = rng.uniform(scale_lo, scale_hi)
    noise = rng.uniform(noise_lo, noise_hi)
    n = int(rng.integers(0, max_points + 1))
    pts = rng.uniform(-2.0, 2.0, (n, dim))
    y = rng.normal(0.0, np.sqrt(s), n)
    return make_gp(pts, y, lengthscale=ls, outputscale=s, noise=noise, dim=dim)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
