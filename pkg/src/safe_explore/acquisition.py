"""Information-gain acquisition over the safety indicator.

The score of an evaluation candidate x against a target z is the expected
reduction in the entropy of the binary "is z safe" indicator after one
noisy observation at x. A Gaussian-shaped surrogate for that entropy makes
the expectation available in closed form, so the score and its bounds are
cheap enough to optimize directly over (x, z) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import erfc, xlogy

from .domain import Box, as_points
from .gp import GpState
from .safety import SafetyModel

LN2 = float(np.log(2.0))

# Curvature-matching constants of the Gaussian entropy surrogate: C1 makes
# the surrogate's second derivative at mean/std = 0 equal to the exact
# indicator entropy's (-2/pi); C2 is the combination that appears in the
# closed-form expected post-observation entropy. Derived, never configurable.
C1 = 1.0 / (np.pi * LN2)
C2 = 2.0 * C1 - 1.0


class DegenerateStatisticsError(ValueError):
    """Entropy of the safety indicator queried with non-positive spread."""


def entropy_exact(mean, std):
    """Entropy (nats) of the indicator 1{f >= 0} for f ~ N(mean, std^2)."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise DegenerateStatisticsError("std must be positive")
    r = mean / std
    p_unsafe = 0.5 * erfc(r / np.sqrt(2.0))
    out = -(xlogy(p_unsafe, p_unsafe) + xlogy(1.0 - p_unsafe, 1.0 - p_unsafe))
    if out.ndim == 0:
        return float(out)
    return out


def entropy_approx(mean, std):
    """Gaussian-shaped surrogate ln(2) * exp(-C1 * (mean/std)^2).

    Matches :func:`entropy_exact` in value and second derivative at
    mean/std = 0 and decays to zero in both tails.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise DegenerateStatisticsError("std must be positive")
    r = mean / std
    out = LN2 * np.exp(-C1 * r * r)
    if out.ndim == 0:
        return float(out)
    return out


def _mi_from_ratios(r2, rho_tilde2):
    """Information gain as a function of r2 = (mean/std)^2 at the target and
    rho_tilde2 = rho_nu^2(x) * rho^2(x, z) in [0, 1]."""
    r2 = np.asarray(r2, dtype=float)
    rho_tilde2 = np.asarray(rho_tilde2, dtype=float)
    den = 1.0 + C2 * rho_tilde2
    ratio = np.maximum(1.0 - rho_tilde2, 0.0) / den
    val = LN2 * (np.exp(-C1 * r2) - np.sqrt(ratio) * np.exp(-C1 * r2 / den))
    return val


def _pair_stats(gp: GpState, x, z):
    """Posterior statistics needed by the information-gain formulas.

    Returns arrays (mu_z, var_z, var_x, rho2, noise_x) for paired rows.
    One stacked solve covers means, variances and the pair covariance.
    """
    xs = as_points(x, gp.dim)
    zs = as_points(z, gp.dim)
    m = xs.shape[0]
    prior_cov = gp.kernel.pair(xs, zs)
    if gp.n == 0:
        s = gp.kernel.outputscale
        mu_z = np.zeros(m)
        var_x = np.full(m, s)
        var_z = np.full(m, s)
        cov = prior_cov
    else:
        both = np.vstack([xs, zs])
        v = solve_triangular(gp.chol, gp.kernel.gram(both, gp.data.points).T, lower=True)
        mean = v.T @ gp.white_y
        var = np.maximum(gp.kernel.outputscale - np.einsum("ij,ij->j", v, v), 0.0)
        var_x, var_z = var[:m], var[m:]
        mu_z = mean[m:]
        cov = prior_cov - np.einsum("ij,ij->j", v[:, :m], v[:, m:])
    floor = gp._var_floor()
    ok = (var_x > floor) & (var_z > floor)
    rho2 = np.zeros(m)
    rho2[ok] = np.minimum(cov[ok] ** 2 / (var_x[ok] * var_z[ok]), 1.0)
    noise_x = gp.noise_variance_at(xs)
    return mu_z, var_z, var_x, rho2, noise_x


def expected_post_entropy(gp: GpState, x, z):
    """Expected surrogate entropy at z after one noisy observation at x.

    Closed form of the Gaussian integral over the unseen observation value;
    the observation enters through the posterior correlation of f(x), f(z)
    and the signal-to-noise ratio at x.
    """
    single = np.asarray(x).ndim == 1
    mu_z, var_z, var_x, rho2, noise_x = _pair_stats(gp, x, z)
    if np.any(var_z <= gp._var_floor()):
        raise DegenerateStatisticsError("posterior variance at z is (numerically) zero")
    num = noise_x + var_x * (1.0 - rho2)
    den = noise_x + var_x * (1.0 + C2 * rho2)
    r2 = mu_z * mu_z / var_z
    out = LN2 * np.sqrt(num / den) * np.exp(-C1 * r2 * (noise_x + var_x) / den)
    if single:
        return float(out[0])
    return out


def _mi_batch(gp: GpState, x, z):
    """Information gain for paired rows; degenerate rows evaluate to 0."""
    mu_z, var_z, var_x, rho2, noise_x = _pair_stats(gp, x, z)
    floor = gp._var_floor()
    valid = var_z > floor
    out = np.zeros(mu_z.shape[0])
    if np.any(valid):
        h_now = LN2 * np.exp(-C1 * mu_z[valid] ** 2 / var_z[valid])
        num = noise_x[valid] + var_x[valid] * (1.0 - rho2[valid])
        den = noise_x[valid] + var_x[valid] * (1.0 + C2 * rho2[valid])
        r2 = mu_z[valid] ** 2 / var_z[valid]
        h_post = LN2 * np.sqrt(num / den) * np.exp(-C1 * r2 * (noise_x[valid] + var_x[valid]) / den)
        out[valid] = np.maximum(h_now - h_post, 0.0)
    return out


def mutual_info(gp: GpState, x, z):
    """Approximate information an observation at x carries about the safety of z.

    Difference of the surrogate entropy at z and its expected value after
    observing at x, floored at zero. Targets whose posterior variance has
    collapsed carry nothing left to learn and score 0.
    """
    single = np.asarray(x).ndim == 1
    out = _mi_batch(gp, x, z)
    if single:
        return float(out[0])
    return out


def mutual_info_rewritten(gp: GpState, x, z):
    """Same information gain via the factored signal-to-noise form.

    Independent evaluation path used to cross-check :func:`mutual_info`:
    expresses the score through rho_nu^2 = var_x / (noise + var_x) and the
    squared posterior correlation alone.
    """
    single = np.asarray(x).ndim == 1
    mu_z, var_z, var_x, rho2, noise_x = _pair_stats(gp, x, z)
    floor = gp._var_floor()
    valid = var_z > floor
    out = np.zeros(mu_z.shape[0])
    if np.any(valid):
        rho_nu2 = var_x[valid] / (noise_x[valid] + var_x[valid])
        r2 = mu_z[valid] ** 2 / var_z[valid]
        out[valid] = np.maximum(_mi_from_ratios(r2, rho_nu2 * rho2[valid]), 0.0)
    if single:
        return float(out[0])
    return out


def mi_upper_bound(gp: GpState, x):
    """Noise-relative variance bound ln(2) * var(x) / noise(x) on the score."""
    single = np.asarray(x).ndim == 1
    xs = as_points(x, gp.dim)
    _, var = gp.posterior(xs)
    out = LN2 * var / gp.noise_variance_at(xs)
    if single:
        return float(out[0])
    return out


def b_function(eta, m_bound: float, noise_variance: float):
    """Monotone lower bound on the best achievable information gain when the
    largest safe-set variance is ``eta`` and posterior means stay within
    ``m_bound`` in absolute value."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise ValueError("eta must be positive")
    if noise_variance <= 0:
        raise ValueError("noise variance must be positive")
    out = LN2 * np.exp(-C1 * m_bound**2 / eta) * (
        1.0 - np.sqrt(noise_variance / (2.0 * C1 * eta + noise_variance))
    )
    if out.ndim == 0:
        return float(out)
    return out


def b_inverse(target: float, m_bound: float, noise_variance: float) -> float:
    """Bisection inverse of :func:`b_function` in its (increasing) argument."""
    if target < 0:
        raise ValueError("target must be non-negative")
    if target >= LN2:
        raise ValueError(f"target {target} is at or above the supremum ln(2)")
    lo = 0.0
    hi = 1.0
    grows = 0
    while b_function(hi, m_bound, noise_variance) < target:
        hi *= 2.0
        grows += 1
        if grows > 2000:
            raise ValueError("target unreachable within floating-point range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if b_function(mid, m_bound, noise_variance) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) if lo > 0.0 else hi


@dataclass(frozen=True)
class OptimizerConfig:
    """Multi-start projected gradient ascent settings for the pair search.

    Restart starts are the best-scoring pairs from a cheap randomized
    candidate pool, so the ascent polishes points spread over the whole
    safe frontier instead of wherever random restarts happen to land.
    ``initial_step`` of None scales the first step to the kernel
    lengthscale.
    """

    restarts: int = 20
    max_steps: int = 80
    initial_step: Optional[float] = None   # fraction of normalized width
    min_step: float = 1e-7
    fd_step: float = 1e-6            # central-difference step, normalized units
    step_growth: float = 1.3
    safe_draw_cap: int = 500
    shrink_tries: int = 20
    pool_size: int = 1500
    selection_margin: float = 0.5    # extra beta units required of evaluated points
    seed: int = 0


@dataclass(frozen=True)
class AcquisitionDiagnostics:
    mi_upper_bound: float
    entropy_at_z: float
    rho: float
    rho_nu: float
    degenerate_search: bool = False


@dataclass(frozen=True)
class AcquisitionChoice:
    x_next: np.ndarray
    z_star: np.ndarray
    mi_value: float
    restarts_used: int
    diagnostics: AcquisitionDiagnostics


def _fd_gradient(value_fn, u: np.ndarray, h: float) -> np.ndarray:
    """Central finite-difference gradient of a batched scalar function."""
    m, k = u.shape
    eye = np.eye(k)
    plus = (u[:, None, :] + h * eye[None, :, :]).reshape(m * k, k)
    minus = (u[:, None, :] - h * eye[None, :, :]).reshape(m * k, k)
    f_plus = value_fn(plus).reshape(m, k)
    f_minus = value_fn(minus).reshape(m, k)
    return (f_plus - f_minus) / (2.0 * h)


def _ascend_unit(value_fn, project_fn, starts: np.ndarray, cfg: OptimizerConfig,
                 initial_step: float = 0.1):
    """Gradient ascent on the unit cube for a batch of restarts in lockstep.

    ``value_fn`` maps (m, k) unit-cube rows to scalars. ``project_fn`` takes
    (proposal, current) and returns a feasible proposal (it may pull rows
    back toward the current iterate, which is always feasible).
    """
    cur = np.clip(np.asarray(starts, dtype=float), 0.0, 1.0)
    val = value_fn(cur)
    m = cur.shape[0]
    step = np.full(m, initial_step)
    for _ in range(cfg.max_steps):
        live = step >= cfg.min_step
        if not live.any():
            break
        grad = np.zeros_like(cur)
        grad[live] = _fd_gradient(value_fn, cur[live], cfg.fd_step)
        norms = np.linalg.norm(grad, axis=1)
        stalled = live & (norms <= 0.0)
        step[stalled] = 0.0
        live = step >= cfg.min_step
        if not live.any():
            break
        direction = np.zeros_like(cur)
        direction[live] = grad[live] / norms[live, None]
        prop = cur + step[:, None] * direction
        np.clip(prop, 0.0, 1.0, out=prop)
        prop = project_fn(prop, cur)
        new_val = value_fn(prop)
        improved = live & (new_val > val)
        cur[improved] = prop[improved]
        val[improved] = new_val[improved]
        step[improved] = np.minimum(step[improved] * cfg.step_growth, initial_step)
        rejected = live & ~improved
        step[rejected] *= 0.5
    return cur, val


def _margin_feasibility(gp: GpState, safety: SafetyModel, n: int, margin: float):
    """Membership test for the inner selection set: the safe-set rule with
    ``margin`` extra beta units. Selecting from this subset keeps the
    optimizer from riding the exact certification boundary, where every
    evaluation would carry the full confidence-tail risk."""
    beta = safety.beta_at(n) + margin

    def feasible(pts):
        pts = as_points(pts, gp.dim)
        mean, var = gp.posterior(pts)
        return (mean - beta * np.sqrt(var) >= safety.threshold) | safety.is_seed(pts)

    return feasible


def _safe_candidate_pool(gp, safety, n, box, cfg, rng, feasible):
    """Pool of feasible x candidates: rejection sampling over the box, plus
    lengthscale-scale jitters of every already-evaluated safe point, plus
    the bare seed. Returns (points, degenerate) where degenerate means
    nothing but the seed turned out feasible."""
    dim = box.dim
    ls = gp.kernel._scale(dim)
    draws = box.sample(rng, cfg.safe_draw_cap)
    pool = [draws[feasible(draws)]]
    anchors = [safety.safe_seed[None, :]]
    if gp.n:
        evaluated = gp.data.points
        safe_eval = feasible(evaluated)
        if safe_eval.any():
            anchors.append(evaluated[safe_eval])
    anchors = np.vstack(anchors)
    copies = max(2, int(np.ceil((cfg.pool_size - len(pool[0])) / anchors.shape[0])))
    jittered = anchors[None, :, :] + rng.normal(0.0, 1.0, (copies, anchors.shape[0], dim)) * ls
    jittered = box.clip(jittered.reshape(-1, dim))
    pool.append(jittered[feasible(jittered)])
    pts = np.vstack([*pool, safety.safe_seed[None, :]])
    degenerate = pts.shape[0] == 1
    return pts[: cfg.pool_size], degenerate


def select_next(gp: GpState, safety: SafetyModel, n: int, domain: Box,
                config: Optional[OptimizerConfig] = None,
                rng: Optional[np.random.Generator] = None) -> AcquisitionChoice:
    """Jointly maximize the information gain over safe x and unrestricted z.

    Multi-start projected gradient ascent; x stays inside the current safe
    set (steps that leave it are shrunk back), z anywhere in the box. The
    evaluation point is additionally required to clear the confidence test
    with ``selection_margin`` extra beta units, a strictly-inner subset of
    the safe set, so returned points never sit exactly on the certification
    boundary. The result is deterministic for a fixed generator state, with
    value ties resolved toward the lowest restart index.
    """
    cfg = config or OptimizerConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    dim = domain.dim
    widths = np.concatenate([domain.width, domain.width])
    los = np.concatenate([domain.lo, domain.lo])
    ls = gp.kernel._scale(dim)
    feasible = _margin_feasibility(gp, safety, n, cfg.selection_margin)

    # Score a randomized candidate pool and polish the best pairs: each safe
    # x candidate is paired with a nearby z (within a lengthscale, where an
    # observation can still move the belief) and a uniform one.
    pool_x, degenerate = _safe_candidate_pool(gp, safety, n, domain, cfg, rng, feasible)
    z_local = domain.clip(pool_x + rng.normal(0.0, 1.0, pool_x.shape) * ls)
    z_far = domain.sample(rng, pool_x.shape[0])
    pairs_x = np.vstack([pool_x, pool_x])
    pairs_z = np.vstack([z_local, z_far])
    scores = _mi_batch(gp, pairs_x, pairs_z)
    top = np.argsort(scores)[::-1][: cfg.restarts]
    x_starts = pairs_x[top]
    z_starts = pairs_z[top]
    if x_starts.shape[0] < cfg.restarts:
        pad = cfg.restarts - x_starts.shape[0]
        x_starts = np.vstack([x_starts, np.tile(safety.safe_seed, (pad, 1))])
        z_starts = np.vstack([z_starts, domain.sample(rng, pad)])

    starts_u = (np.hstack([x_starts, z_starts]) - los) / widths

    def value_fn(u):
        v = los + u * widths
        return _mi_batch(gp, v[:, :dim], v[:, dim:])

    def project_fn(prop, cur):
        out = prop.copy()
        x_prop = los[:dim] + out[:, :dim] * widths[:dim]
        bad = ~feasible(x_prop)
        tries = 0
        while bad.any() and tries < cfg.shrink_tries:
            out[bad, :dim] = 0.5 * (out[bad, :dim] + cur[bad, :dim])
            x_prop = los[:dim] + out[bad, :dim] * widths[:dim]
            still = ~feasible(x_prop)
            idx = np.flatnonzero(bad)
            bad[idx] = still
            tries += 1
        if bad.any():
            out[bad, :dim] = cur[bad, :dim]
        return out

    initial_step = cfg.initial_step
    if initial_step is None:
        initial_step = float(np.clip(np.max(ls / domain.width), 1e-3, 0.1))
    final_u, _ = _ascend_unit(value_fn, project_fn, starts_u, cfg, initial_step)
    final = los + final_u * widths
    xs, zs = final[:, :dim], final[:, dim:]
    vals = _mi_batch(gp, xs, zs)
    best = int(np.argmax(vals))
    x_best = xs[best].copy()
    z_best = zs[best].copy()
    value = float(vals[best])
    if safety.is_seed(x_best)[0]:
        x_best = safety.safe_seed.copy()  # exact seed, not its unit-cube round trip

    mu_z, var_z, var_x, rho2, noise_x = _pair_stats(gp, x_best[None, :], z_best[None, :])
    rho = float(np.sign(gp.posterior_pair_cov(x_best, z_best)) * np.sqrt(rho2[0]))
    rho_nu = float(np.sqrt(var_x[0] / (noise_x[0] + var_x[0])))
    ent_z = float(LN2 * np.exp(-C1 * mu_z[0] ** 2 / var_z[0])) if var_z[0] > gp._var_floor() else 0.0
    diag = AcquisitionDiagnostics(
        mi_upper_bound=float(mi_upper_bound(gp, x_best)),
        entropy_at_z=ent_z,
        rho=rho,
        rho_nu=rho_nu,
        degenerate_search=degenerate,
    )
    return AcquisitionChoice(x_best, z_best, value, cfg.restarts, diag)
