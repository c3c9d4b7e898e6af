import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss

from safe_explore.acquisition import (
    C1,
    C2,
    LN2,
    DegenerateStatisticsError,
    _fd_gradient,
    _mi_from_ratios,
    b_function,
    b_inverse,
    entropy_approx,
    expected_post_entropy,
    mi_upper_bound,
    mutual_info,
    mutual_info_rewritten,
)
from safe_explore.gp import posterior

from conftest import make_gp, random_gp_state

GH_NODES, GH_WEIGHTS = hermgauss(64)


def quadrature_expected_entropy(gp, x, z):
    """64-node Gauss-Hermite average of the surrogate entropy at z under the
    one-step posterior update for a noisy observation at x. Independent of
    the closed form it checks."""
    mu, var = gp.posterior(np.stack([x, z]))
    cov = gp.posterior_pair_cov(x, z)
    noise = gp.noise_variance_at(x)
    s2 = var[0] + noise
    y = mu[0] + np.sqrt(2.0 * s2) * GH_NODES
    mu_plus = mu[1] + cov / s2 * (y - mu[0])
    var_plus = var[1] - cov**2 / s2
    vals = LN2 * np.exp(-C1 * mu_plus**2 / var_plus)
    return float((GH_WEIGHTS * vals).sum() / np.sqrt(np.pi))


def sample_query_pair(rng, gp):
    x = rng.uniform(-2, 2, gp.dim)
    z = rng.uniform(-2, 2, gp.dim)
    return x, z


def test_constants():
    assert C1 == pytest.approx(1.0 / (np.pi * LN2))
    assert C2 == pytest.approx(2.0 * C1 - 1.0)
    assert C1 > 0
    assert -1.0 < C2 < 0.0


def test_zero_correlation_transfers_nothing():
    gp = make_gp([], [], lengthscale=0.3, dim=1)
    x, z = np.array([-4.0]), np.array([4.0])
    muz, varz = posterior(gp, z)
    assert expected_post_entropy(gp, x, z) == pytest.approx(
        entropy_approx(muz, np.sqrt(varz)), abs=1e-12)
    assert mutual_info(gp, x, z) == pytest.approx(0.0, abs=1e-12)


def combined_correlation(gp, x, z):
    mu, var = gp.posterior(np.stack([x, z]))
    cov = gp.posterior_pair_cov(x, z)
    noise = gp.noise_variance_at(x)
    if min(var) <= 1e-9:
        return 1.0
    return (cov**2 / (var[0] * var[1])) * var[0] / (noise + var[0])


def test_expected_post_entropy_matches_quadrature():
    # The 64-node rule is itself converged to well below 1e-6 only while the
    # combined correlation factor stays away from 1 (the integrand narrows
    # as rho_tilde^2 -> 1); states beyond that are outside the oracle's
    # validity and are redrawn.
    rng = np.random.default_rng(101)
    worst = 0.0
    checked = 0
    while checked < 1000:
        gp = random_gp_state(rng)
        x, z = sample_query_pair(rng, gp)
        _, varz = gp.posterior(z)
        if varz <= 1e-8 or combined_correlation(gp, x, z) > 0.9:
            continue
        closed = expected_post_entropy(gp, x, z)
        quad = quadrature_expected_entropy(gp, x, z)
        worst = max(worst, abs(closed - quad))
        checked += 1
    assert worst <= 1e-6


def test_uninformative_noise_limit():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (4, 1))
    gp = make_gp(pts, rng.normal(0, 1, 4), noise=1e9)
    x, z = np.array([0.2]), np.array([0.4])
    muz, varz = posterior(gp, z)
    assert expected_post_entropy(gp, x, z) == pytest.approx(
        entropy_approx(muz, np.sqrt(varz)), abs=1e-6)


def test_mutual_info_equals_rewritten_form():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(1000):
        gp = random_gp_state(rng)
        x, z = sample_query_pair(rng, gp)
        worst = max(worst, abs(mutual_info(gp, x, z) - mutual_info_rewritten(gp, x, z)))
    assert worst <= 1e-9


def test_self_pair_analytic_value():
    # Fresh prior with unit variance and noise 0.05: the information an
    # observation carries about its own location has a closed value.
    gp = make_gp([], [], outputscale=1.0, noise=0.05, dim=1)
    x = np.array([0.3])
    expected = LN2 * (1.0 - np.sqrt(0.05 / (2.0 * C1 + 0.05)))
    assert mutual_info(gp, x, x) == pytest.approx(expected, abs=1e-12)
    assert mutual_info_rewritten(gp, x, x) == pytest.approx(expected, abs=1e-12)


def test_degenerate_target_scores_zero():
    assert _mi_from_ratios(4.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    gp = make_gp([[0.0]], [1.0], noise=1e-10)
    # target variance collapses at the (almost noiseless) training point
    assert mutual_info(gp, np.array([0.5]), np.array([0.0])) == 0.0


def test_expected_post_entropy_degenerate_target_raises():
    gp = make_gp([[0.0]], [1.0], noise=1e-12)
    with pytest.raises(DegenerateStatisticsError):
        expected_post_entropy(gp, np.array([0.5]), np.array([0.0]))


def test_upper_bound_examples_and_dominance():
    gp = make_gp([], [], outputscale=0.05, noise=0.05, dim=1)
    assert mi_upper_bound(gp, np.array([0.0])) == pytest.approx(LN2, abs=1e-12)

    rng = np.random.default_rng(303)
    for _ in range(1000):
        g = random_gp_state(rng)
        x, z = sample_query_pair(rng, g)
        assert mutual_info(g, x, z) <= mi_upper_bound(g, x) + 1e-9


def test_positivity_and_zero_condition():
    rng = np.random.default_rng(404)
    for _ in range(1000):
        g = random_gp_state(rng)
        x, z = sample_query_pair(rng, g)
        assert mutual_info(g, x, z) >= 0.0
    # function-level: zero iff the combined correlation factor vanishes
    r2 = np.linspace(0.0, 9.0, 40)
    assert np.allclose(_mi_from_ratios(r2, np.zeros_like(r2)), 0.0, atol=1e-15)
    vals = _mi_from_ratios(np.full(50, 1.3), np.linspace(1e-8, 0.999, 50))
    assert np.all(vals > 0.0)


def test_monotone_decreasing_in_mean_variance_ratio():
    rho_grid = np.linspace(0.0, 0.999, 25)
    r2_grid = np.linspace(0.0, 16.0, 50)
    for rt in rho_grid:
        vals = _mi_from_ratios(r2_grid, np.full_like(r2_grid, rt))
        assert np.all(np.diff(vals) <= 1e-14)


def test_monotone_increasing_in_correlation_factor():
    r2_grid = np.linspace(0.0, 9.0, 25)
    rho_grid = np.linspace(0.0, 1.0, 60)
    for r2 in r2_grid:
        vals = _mi_from_ratios(np.full_like(rho_grid, r2), rho_grid)
        assert np.all(np.diff(vals) >= -1e-14)


def test_signal_noise_factor_increases_with_variance():
    noise = 0.3
    var = np.linspace(0.0, 5.0, 200)
    rho_nu2 = var / (noise + var)
    assert np.all(np.diff(rho_nu2) > 0)


def test_mi_increases_with_variance_at_x():
    # With everything else held fixed, a noisier-prior evaluation point is
    # more informative (through the signal-to-noise factor).
    noise = 0.2
    var_x = np.linspace(0.01, 4.0, 100)
    rho2 = 0.7
    vals = _mi_from_ratios(1.0, rho2 * var_x / (noise + var_x))
    assert np.all(np.diff(vals) > -1e-14)


def test_b_function_examples():
    assert b_function(1e-8, 0.5, 0.1) < 1e-12
    eta = np.linspace(1e-3, 10.0, 100)
    vals = b_function(eta, 0.5, 0.1)
    assert np.all(np.diff(vals) > 0.0)
    assert np.all(vals < LN2)


def test_b_inverse_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        m = rng.uniform(0.0, 2.0)
        noise = rng.uniform(0.05, 1.0)
        eta = rng.uniform(1e-3, 50.0)
        target = b_function(eta, m, noise)
        inv = b_inverse(target, m, noise)
        assert inv == pytest.approx(eta, rel=1e-8, abs=1e-10)
        assert b_function(inv, m, noise) == pytest.approx(target, abs=1e-10 * max(1.0, target))


def test_b_inverse_edge_cases():
    assert 0.0 < b_inverse(0.0, 0.5, 0.1) < 1e-6
    targets = np.linspace(0.01, 0.6, 30)
    invs = [b_inverse(t, 0.5, 0.1) for t in targets]
    assert np.all(np.diff(invs) > 0.0)
    with pytest.raises(ValueError):
        b_inverse(LN2, 0.5, 0.1)
    with pytest.raises(ValueError):
        b_inverse(1.0, 0.5, 0.1)


def test_b_inverse_curves_ordered_by_noise():
    targets = np.linspace(0.02, 0.55, 20)
    curves = {nv: np.array([b_inverse(t, 0.5, nv) for t in targets])
              for nv in (0.1, 0.5, 1.0)}
    for t_idx in range(len(targets)):
        assert curves[0.1][t_idx] < curves[0.5][t_idx] < curves[1.0][t_idx]
    for curve in curves.values():
        assert np.all(np.diff(curve) > 0)


def test_gradient_matches_independent_finite_differences():
    rng = np.random.default_rng(808)
    from safe_explore.acquisition import _mi_batch

    checked = 0
    for _ in range(200):
        gp = random_gp_state(rng, max_points=6)
        x, z = sample_query_pair(rng, gp)
        v = np.concatenate([x, z])[None, :]

        def value(u):
            k = u.shape[1] // 2
            return _mi_batch(gp, u[:, :k], u[:, k:])

        g_fast = _fd_gradient(value, v, 1e-6)[0]
        g_ref = _fd_gradient(value, v, 1e-5)[0]
        norm = np.linalg.norm(g_ref)
        if norm < 1e-6:
            continue
        checked += 1
        assert np.linalg.norm(g_fast - g_ref) <= 1e-4 * norm + 1e-8
    assert checked >= 50
