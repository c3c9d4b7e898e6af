import numpy as np
import pytest

from safe_explore.gp import (
    Dataset,
    GpState,
    Kernel,
    NoiseModel,
    NumericalDegeneracyError,
    chol_with_jitter,
    condition,
    cross_correlation,
    noise_variance,
    posterior,
)

from conftest import make_gp


def dense_posterior(kernel, pts, y, noise_var, query):
    """Independent dense-solve reference for the posterior equations."""
    K = kernel.gram(pts, pts) + np.diag(np.full(len(pts), noise_var))
    kq = kernel.gram(np.atleast_2d(query), pts)
    sol = np.linalg.solve(K, kq.T)
    mean = kq @ np.linalg.solve(K, y)
    var = kernel.outputscale - np.einsum("ij,ji->i", kq, sol)
    return mean, var


def test_prior_recovery_empty_dataset():
    gp = make_gp([], [], outputscale=2.5, dim=2)
    mean, var = posterior(gp, np.array([0.3, -1.0]))
    assert mean == 0.0
    assert var == pytest.approx(2.5)


def test_noiseless_interpolation():
    gp = make_gp([[0.5]], [1.7], noise=1e-12)
    mean, var = posterior(gp, np.array([0.5]))
    assert mean == pytest.approx(1.7, abs=1e-5)
    assert var < 1e-8


def test_posterior_matches_dense_solve():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1, 1, (3, 2))
    y = rng.normal(0, 1, 3)
    gp = make_gp(pts, y, lengthscale=0.8, outputscale=1.0, noise=0.2)
    grid = rng.uniform(-1, 1, (40, 2))
    mean, var = posterior(gp, grid)
    ref_mean, ref_var = dense_posterior(gp.kernel, pts, y, 0.2, grid)
    assert np.abs(mean - ref_mean).max() < 1e-10
    assert np.abs(var - ref_var).max() < 1e-10


def test_cross_correlation_self_is_one():
    gp = make_gp([[0.0, 0.0]], [1.0], noise=0.3)
    x = np.array([0.7, -0.2])
    assert cross_correlation(gp, x, x) == pytest.approx(1.0, abs=1e-12)


def test_cross_correlation_far_apart_prior():
    gp = make_gp([], [], lengthscale=0.5, dim=1)
    assert abs(cross_correlation(gp, np.array([-4.0]), np.array([4.0]))) < 1e-6


def test_cross_correlation_matches_dense_joint_solve():
    rng = np.random.default_rng(11)
    pts = rng.uniform(-1, 1, (5, 2))
    y = rng.normal(0, 1, 5)
    noise = 0.15
    gp = make_gp(pts, y, lengthscale=0.7, outputscale=1.3, noise=noise)
    for _ in range(25):
        x = rng.uniform(-1, 1, 2)
        z = rng.uniform(-1, 1, 2)
        K = gp.kernel.gram(pts, pts) + noise * np.eye(5)
        kq = gp.kernel.gram(np.stack([x, z]), pts)
        joint = gp.kernel.gram(np.stack([x, z]), np.stack([x, z])) - kq @ np.linalg.solve(K, kq.T)
        ref = joint[0, 1] / np.sqrt(joint[0, 0] * joint[1, 1])
        assert cross_correlation(gp, x, z) == pytest.approx(ref, abs=1e-9)


def test_condition_returns_new_state_and_matches_scratch():
    rng = np.random.default_rng(3)
    gp = make_gp([], [], lengthscale=0.9, outputscale=1.0, noise=0.1, dim=2)
    pts = rng.uniform(-1, 1, (5, 2))
    ys = rng.normal(0, 1, 5)
    for p, y in zip(pts, ys):
        before = gp
        gp = condition(gp, p, y)
        assert before.n == gp.n - 1  # original untouched
    scratch = make_gp(pts, ys, lengthscale=0.9, outputscale=1.0, noise=0.1)
    q = rng.uniform(-1, 1, (30, 2))
    m1, v1 = posterior(gp, q)
    m2, v2 = posterior(scratch, q)
    assert np.abs(m1 - m2).max() < 1e-8 * max(1.0, np.abs(m2).max())
    assert np.abs(v1 - v2).max() < 1e-8


def test_condition_near_training_point_with_tiny_noise():
    gp = make_gp([], [], noise=1e-10, dim=1)
    gp = condition(gp, np.array([0.2]), 3.3)
    mean, _ = posterior(gp, np.array([0.2]))
    assert mean == pytest.approx(3.3, abs=1e-4)


def test_conditioning_reduces_variance_nearby():
    gp = make_gp([], [], dim=1)
    probe = np.array([0.4])
    _, v0 = posterior(gp, probe)
    gp2 = condition(gp, np.array([0.1]), 0.5)
    _, v1 = posterior(gp2, probe)
    assert v1 < v0


def test_incremental_equals_scratch_many_sequences():
    rng = np.random.default_rng(42)
    for trial in range(100):
        dim = int(rng.integers(1, 3))
        n = int(rng.integers(1, 21))
        ls = rng.uniform(0.4, 1.5)
        noise = rng.uniform(0.05, 0.5)
        pts = rng.uniform(-2, 2, (n, dim))
        ys = rng.normal(0, 1, n)
        gp = make_gp([], [], lengthscale=ls, noise=noise, dim=dim)
        for p, y in zip(pts, ys):
            gp = condition(gp, p, y)
        scratch = make_gp(pts, ys, lengthscale=ls, noise=noise)
        q = rng.uniform(-2, 2, (10, dim))
        m1, v1 = posterior(gp, q)
        m2, v2 = posterior(scratch, q)
        denom = max(1.0, np.abs(m2).max())
        assert np.abs(m1 - m2).max() / denom < 1e-8
        assert np.abs(v1 - v2).max() < 1e-8


def test_variance_never_increases_with_conditioning():
    rng = np.random.default_rng(5)
    gp = make_gp([], [], dim=2)
    probes = rng.uniform(-1, 1, (50, 2))
    _, prev = posterior(gp, probes)
    for _ in range(12):
        x = rng.uniform(-1, 1, 2)
        gp = condition(gp, x, rng.normal())
        _, cur = posterior(gp, probes)
        assert np.all(cur <= prev + 1e-10)
        prev = cur


def test_variance_bounded_by_prior():
    rng = np.random.default_rng(9)
    gp = make_gp(rng.uniform(-1, 1, (6, 2)), rng.normal(0, 1, 6), outputscale=1.7)
    _, var = posterior(gp, rng.uniform(-1, 1, (100, 2)))
    assert np.all(var >= 0.0)
    assert np.all(var <= 1.7 + 1e-12)


def test_jitter_insensitivity_of_mean():
    rng = np.random.default_rng(13)
    pts = rng.uniform(-1, 1, (8, 2))
    y = rng.normal(0, 1, 8)
    kernel = Kernel.rbf(0.8, 1.0, dim=2)
    nm = NoiseModel.homoskedastic(0.1)
    data = Dataset(pts, y, nm.variance_at(pts))
    gram = kernel.gram(pts, pts) + np.diag(data.noise_variances)
    q = rng.uniform(-1, 1, (20, 2))
    means = []
    for frac in (1e-10, 1e-8):
        L = np.linalg.cholesky(gram + frac * np.eye(8))
        kq = kernel.gram(q, pts)
        means.append(kq @ np.linalg.solve(gram + frac * np.eye(8), y))
    assert np.abs(means[0] - means[1]).max() < 1e-6


def test_correlation_bounds_property():
    rng = np.random.default_rng(17)
    for _ in range(30):
        n = int(rng.integers(0, 8))
        gp = make_gp(rng.uniform(-1, 1, (n, 2)), rng.normal(0, 1, n),
                     lengthscale=0.6, noise=0.2, dim=2)
        x = rng.uniform(-1, 1, (20, 2))
        z = rng.uniform(-1, 1, (20, 2))
        rho = cross_correlation(gp, x, z)
        assert np.all(rho**2 <= 1.0 + 1e-12)


def test_noise_variance_examples():
    gp = make_gp([[0.0]], [0.0], noise=0.05)
    assert noise_variance(gp, np.array([0.7])) == pytest.approx(0.05)
    assert noise_variance(gp, np.array([-0.7])) == pytest.approx(0.05)

    nm = NoiseModel.halfspace(coord=0, positive=0.05, negative=0.5)
    kernel = Kernel.rbf(1.0, 1.0, dim=2)
    gp2 = GpState.fit(kernel, nm, dim=2)
    assert noise_variance(gp2, np.array([0.5, -1.0])) == pytest.approx(0.05)
    assert noise_variance(gp2, np.array([-0.5, 1.0])) == pytest.approx(0.5)
    assert noise_variance(gp2, np.array([0.0, 0.0])) == pytest.approx(0.05)


def test_refit_period_keeps_posterior_consistent():
    rng = np.random.default_rng(23)
    gp = make_gp([], [], noise=0.1, dim=1)
    pts = rng.uniform(-2, 2, (60, 1))
    ys = rng.normal(0, 1, 60)
    for p, y in zip(pts, ys):
        gp = condition(gp, p, y)
    scratch = make_gp(pts, ys, noise=0.1)
    q = rng.uniform(-2, 2, (15, 1))
    m1, v1 = posterior(gp, q)
    m2, v2 = posterior(scratch, q)
    assert np.abs(m1 - m2).max() < 1e-7
    assert np.abs(v1 - v2).max() < 1e-7


def test_chol_jitter_ladder_raises_on_indefinite_matrix():
    mat = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalue -1, beyond any jitter
    with pytest.raises(NumericalDegeneracyError):
        chol_with_jitter(mat, scale=1.0)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.zeros(3), np.full(2, 0.1))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.zeros(2), np.array([0.1, 0.0]))


def test_kernel_validation_and_symmetry():
    with pytest.raises(ValueError):
        Kernel.rbf(-1.0, 1.0)
    with pytest.raises(ValueError):
        Kernel.rbf(1.0, 0.0)
    k = Kernel.rbf([0.5, 2.0], 1.5)
    a = np.random.default_rng(0).uniform(-1, 1, (6, 2))
    G = k.gram(a, a)
    assert np.allclose(G, G.T)
    assert np.allclose(np.diag(G), 1.5)
    assert np.all(G <= 1.5 + 1e-12)
    assert np.all(np.linalg.eigvalsh(G) > -1e-10)


def test_state_arrays_are_write_protected():
    gp = make_gp([[0.1], [0.5]], [1.0, 2.0], noise=0.1)
    with pytest.raises(ValueError):
        gp.data.points[0, 0] = 9.9
    with pytest.raises(ValueError):
        gp.chol[0, 0] = 9.9
