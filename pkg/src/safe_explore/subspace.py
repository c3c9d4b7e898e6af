"""One-dimensional random subspace restriction for high-dimensional runs.

Each iteration draws a handful of lines through an anchor point, optimizes
the acquisition on every line independently and keeps the best line's
choice. Lines are seeded per index, so enlarging the line count never
perturbs (or worsens) the earlier lines' searches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .acquisition import (
    C1,
    LN2,
    AcquisitionChoice,
    AcquisitionDiagnostics,
    OptimizerConfig,
    _ascend_unit,
    _margin_feasibility,
    _mi_batch,
    mi_upper_bound,
)
from .baselines import (
    BaselineChoice,
    LipschitzConfig,
    _heuristic_expander_mask,
    _lipschitz_expander_mask,
)
from .domain import Box
from .gp import GpState, cross_correlation
from .safety import SafetyModel, is_safe

LINE_KINDS = ("ise", "stageopt", "heuristic", "uncertainty")
DEFAULT_LINE_COUNT = 4
DEFAULT_POINTS_PER_LINE = 201


class NoSafePointOnLinesError(RuntimeError):
    """No line carries a safe point and the anchor itself is unsafe."""


@dataclass(frozen=True)
class LineRestriction:
    """Segment ``anchor + t * direction`` for t in [t_lo, t_hi], inside the box."""

    anchor: np.ndarray
    direction: np.ndarray
    t_lo: float
    t_hi: float

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(direction)
        if not np.isclose(norm, 1.0, atol=1e-9):
            raise ValueError("direction must be a unit vector")
        if self.t_lo > 0.0 or self.t_hi < 0.0:
            raise ValueError("interval must contain t = 0 (the anchor)")
        anchor.setflags(write=False)
        direction.setflags(write=False)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "direction", direction)

    def point_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.anchor + t[..., None] * self.direction


def _clip_interval(anchor: np.ndarray, direction: np.ndarray, box: Box):
    t_lo, t_hi = -np.inf, np.inf
    for i in range(box.dim):
        u = direction[i]
        if abs(u) < 1e-300:
            continue
        a = (box.lo[i] - anchor[i]) / u
        b = (box.hi[i] - anchor[i]) / u
        t_lo = max(t_lo, min(a, b))
        t_hi = min(t_hi, max(a, b))
    return float(t_lo), float(t_hi)


def sample_lines(anchor, count: int, box: Box,
                 rng: Union[int, np.random.Generator, None] = None) -> list[LineRestriction]:
    """``count`` uniformly-oriented lines through ``anchor``, clipped to the box.

    Directions are drawn sequentially, so the first k lines of a larger
    sample coincide with a smaller sample from the same generator state.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    anchor = np.asarray(anchor, dtype=float)
    if not box.contains(anchor)[0]:
        raise ValueError("anchor must lie inside the box")
    lines = []
    for _ in range(count):
        direction = rng.normal(size=box.dim)
        norm = np.linalg.norm(direction)
        while norm < 1e-12:
            direction = rng.normal(size=box.dim)
            norm = np.linalg.norm(direction)
        direction = direction / norm
        t_lo, t_hi = _clip_interval(anchor, direction, box)
        lines.append(LineRestriction(anchor, direction, t_lo, t_hi))
    return lines


def _direction_lengthscale(gp: GpState, direction: np.ndarray) -> float:
    ls = gp.kernel._scale(direction.shape[0])
    rate = np.linalg.norm(direction / ls)
    return 1.0 / max(rate, 1e-12)


def _ise_on_line(gp, safety, n, line: LineRestriction, cfg: OptimizerConfig,
                 rng: np.random.Generator, restarts: int):
    width = line.t_hi - line.t_lo
    if width <= 0:
        return None
    feasible = _margin_feasibility(gp, safety, n, cfg.selection_margin)

    def xs_of(ts):
        return line.point_at(ts)

    t_starts = []
    draws = 0
    cap = max(50, cfg.safe_draw_cap // 4)
    while len(t_starts) < restarts and draws < cap:
        chunk = min(32, cap - draws)
        ts = rng.uniform(line.t_lo, line.t_hi, chunk)
        draws += chunk
        mask = feasible(xs_of(ts))
        t_starts.extend(ts[mask].tolist())
    if not t_starts:
        if not is_safe(gp, safety, n, line.anchor):
            return None
        t_starts = [0.0]
    t_starts = np.asarray(t_starts[:restarts])
    m = t_starts.shape[0]
    tz = rng.uniform(line.t_lo, line.t_hi, m)
    odd = np.arange(m) % 2 == 1
    if odd.any():
        ls_t = _direction_lengthscale(gp, line.direction)
        tz[odd] = np.clip(t_starts[odd] + rng.normal(0.0, ls_t, int(odd.sum())),
                          line.t_lo, line.t_hi)

    starts_u = np.stack([(t_starts - line.t_lo) / width, (tz - line.t_lo) / width], axis=1)

    def value_fn(u):
        ts = line.t_lo + u * width
        return _mi_batch(gp, xs_of(ts[:, 0]), xs_of(ts[:, 1]))

    def project_fn(prop, cur):
        out = prop.copy()
        bad = ~feasible(xs_of(line.t_lo + out[:, 0] * width))
        tries = 0
        while bad.any() and tries < cfg.shrink_tries:
            out[bad, 0] = 0.5 * (out[bad, 0] + cur[bad, 0])
            still = ~feasible(xs_of(line.t_lo + out[bad, 0] * width))
            idx = np.flatnonzero(bad)
            bad[idx] = still
            tries += 1
        if bad.any():
            out[bad, 0] = cur[bad, 0]
        return out

    initial_step = cfg.initial_step
    if initial_step is None:
        initial_step = float(np.clip(_direction_lengthscale(gp, line.direction) / width, 1e-3, 0.1))
    final_u, _ = _ascend_unit(value_fn, project_fn, starts_u, cfg, initial_step)
    ts = line.t_lo + final_u * width
    xs, zs = xs_of(ts[:, 0]), xs_of(ts[:, 1])
    vals = _mi_batch(gp, xs, zs)
    best = int(np.argmax(vals))
    return xs[best].copy(), zs[best].copy(), float(vals[best])


def select_next_on_lines(method: str, gp: GpState, safety: SafetyModel, n: int,
                         lines: Sequence[LineRestriction],
                         config: Optional[OptimizerConfig] = None,
                         rng: Optional[np.random.Generator] = None,
                         baseline_cfg: Optional[LipschitzConfig] = None,
                         points_per_line: int = DEFAULT_POINTS_PER_LINE):
    """Best acquisition choice across the lines.

    ``method`` "ise" runs the pair search with both the evaluation point and
    the target restricted to the same line; baseline kinds run on a uniform
    per-line discretization of the union of lines. Ties across lines resolve
    to the lowest line index.
    """
    if not lines:
        raise ValueError("need at least one line")
    if method == "ise":
        cfg = config or OptimizerConfig()
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        restarts = max(4, cfg.restarts // len(lines))
        children = rng.spawn(len(lines))
        best = None
        for i, (line, child) in enumerate(zip(lines, children)):
            res = _ise_on_line(gp, safety, n, line, cfg, child, restarts)
            if res is None:
                continue
            x, z, val = res
            if best is None or val > best[2]:
                best = (x, z, val, i)
        if best is None:
            anchor = lines[0].anchor
            if is_safe(gp, safety, n, anchor):
                best = (anchor.copy(), anchor.copy(),
                        float(_mi_batch(gp, anchor[None, :], anchor[None, :])[0]), -1)
            else:
                raise NoSafePointOnLinesError("no safe point found on any line")
        x, z, val, _ = best
        mu_z, var_z = gp.posterior(z)
        _, var_x = gp.posterior(x)
        noise_x = gp.noise_variance_at(x)
        ent_z = 0.0 if var_z <= gp._var_floor() else float(LN2 * np.exp(-C1 * mu_z**2 / var_z))
        diag = AcquisitionDiagnostics(
            mi_upper_bound=float(mi_upper_bound(gp, x)),
            entropy_at_z=ent_z,
            rho=cross_correlation(gp, x, z),
            rho_nu=float(np.sqrt(var_x / (noise_x + var_x))),
            degenerate_search=False,
        )
        return AcquisitionChoice(x, z, val, restarts * len(lines), diag)

    if method not in LINE_KINDS:
        raise ValueError(f"unknown line method {method!r}")

    pts = []
    for line in lines:
        ts = np.linspace(line.t_lo, line.t_hi, points_per_line)
        pts.append(line.point_at(ts))
    pts.append(lines[0].anchor[None, :])
    points = np.vstack(pts)
    mu, var = gp.posterior(points)
    sd = np.sqrt(np.maximum(var, 0.0))
    beta = safety.beta_at(n)
    safe = (mu - beta * sd >= safety.threshold) | safety.is_seed(points)
    if is_safe(gp, safety, n, lines[0].anchor):
        safe[-1] = True
    if not safe.any():
        raise NoSafePointOnLinesError("no safe point found on any line")
    if method == "stageopt":
        expanders = _lipschitz_expander_mask(gp, beta, safety.threshold, points, mu, sd,
                                             safe, (baseline_cfg or LipschitzConfig()).lipschitz)
    elif method == "heuristic":
        expanders = _heuristic_expander_mask(gp, beta, safety.threshold, points, mu, sd**2, safe)
    else:
        expanders = safe
    count = int(expanders.sum())
    fallback = method != "uncertainty" and count == 0
    cand_idx = np.flatnonzero(safe if method == "uncertainty" else expanders)
    if not cand_idx.size:
        # Stalled: re-evaluate the anchor rather than silently switching
        # to uncertainty sampling, so the stall shows up in coverage.
        anchor = lines[0].anchor
        _, avar = gp.posterior(anchor)
        return BaselineChoice(
            x_next=anchor.copy(),
            index=len(points) - 1,
            score=float(np.sqrt(max(avar, 0.0))),
            expander_fallback=True,
            expander_count=count,
        )
    best_i = cand_idx[int(np.argmax(sd[cand_idx]))]
    return BaselineChoice(
        x_next=points[best_i].copy(),
        index=int(best_i),
        score=float(sd[best_i]),
        expander_fallback=fallback,
        expander_count=count,
    )
