"""The four figure families rendered from run CSVs.

coverage   mean safe-coverage curves with standard-error bands, one line
           per method found in the inputs
snapshot   2-D view of one run: observation-supported safe region, every
           evaluated point, the latest pick (green dot) and the campaign
           start (black cross)
regret     simple-regret curves at the probe iterations, mean with
           standard-error band per method
entropy-compare
           the exact indicator entropy against its Gaussian surrogate as
           a function of mean/std (no CSV input needed)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import RunSeries, read_runs

FIGURE_KINDS = ("coverage", "snapshot", "regret", "entropy-compare")

LN2 = float(np.log(2.0))
_PNG_METADATA = {"Software": "safe-explore-plots"}


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    inputs: tuple
    output: str
    title: str | None = None
    dpi: int = 120

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if self.kind != "entropy-compare" and not self.inputs:
            raise ValueError(f"figure kind {self.kind!r} needs at least one run CSV")
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))


@dataclass
class RenderResult:
    """Output path plus the data series behind the figure, for assertions."""

    path: Path
    series: dict = field(default_factory=dict)


def _group_by_method(runs: list[RunSeries]):
    groups = {}
    for run in runs:
        groups.setdefault(run.method, []).append(run)
    return groups


def _mean_band(values_per_run):
    horizon = max(len(v) for v in values_per_run)
    mean, sem = np.full(horizon, np.nan), np.full(horizon, np.nan)
    for i in range(horizon):
        vals = np.array([v[i] for v in values_per_run if len(v) > i])
        mean[i] = vals.mean()
        sem[i] = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return mean, sem


def _render_coverage(spec: PlotSpec) -> RenderResult:
    runs = read_runs(spec.inputs)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    series = {}
    for method, group in sorted(_group_by_method(runs).items()):
        mean, sem = _mean_band([r.coverage_pct for r in group])
        n = np.arange(len(mean))
        ax.plot(n, mean, label=f"{method} ({len(group)} runs)")
        ax.fill_between(n, mean - sem, mean + sem, alpha=0.25)
        series[method] = {"mean": mean, "sem": sem}
    ax.set_xlabel("iteration")
    ax.set_ylabel("domain classified safe [%]")
    ax.set_title(spec.title or "safe-set expansion")
    ax.legend(fontsize=8)
    return _save(fig, spec, series)


def _render_snapshot(spec: PlotSpec) -> RenderResult:
    run = read_runs(spec.inputs)[0]
    if run.x.shape[1] != 2:
        raise ValueError("snapshot figures need a 2-D parameter space")
    fig, ax = plt.subplots(figsize=(5, 4.4))
    pts = run.x
    lo = pts.min(axis=0) - 0.5
    hi = pts.max(axis=0) + 0.5
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], 160), np.linspace(lo[1], hi[1], 160))
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    # observation-supported safe region: inverse-distance-weighted sign of
    # the observed values, clipped to the neighborhood of the data
    d2 = ((grid[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    bandwidth = np.median(np.sqrt(d2.min(axis=1))) * 2.0 + 1e-9
    w = np.exp(-0.5 * d2 / bandwidth**2)
    est = (w * run.y[None, :]).sum(axis=1) / np.maximum(w.sum(axis=1), 1e-300)
    supported = w.max(axis=1) > np.exp(-2.0)
    safe_mask = (est > 0) & supported
    ax.contourf(gx, gy, safe_mask.reshape(gx.shape).astype(float),
                levels=[0.5, 1.5], colors=["#9ecae1"], alpha=0.8)
    ax.plot(pts[:-1, 0], pts[:-1, 1], "x", color="#555555", ms=4,
            label="evaluations")
    ax.plot(pts[-1, 0], pts[-1, 1], "o", color="green", ms=9, label="latest pick")
    ax.plot(pts[0, 0], pts[0, 1], "X", color="black", ms=11, mew=2, label="start")
    ax.set_title(spec.title or f"safe region snapshot ({run.run_id})")
    ax.legend(fontsize=8, loc="best")
    series = {
        "safe_fraction": float(safe_mask.mean()),
        "latest": pts[-1].copy(),
        "start": pts[0].copy(),
        "evaluations": pts.copy(),
    }
    return _save(fig, spec, series)


def _render_regret(spec: PlotSpec) -> RenderResult:
    runs = read_runs(spec.inputs)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    series = {}
    for method, group in sorted(_group_by_method(runs).items()):
        horizon = max(len(r.regret) for r in group)
        xs, means, sems = [], [], []
        for i in range(horizon):
            vals = [r.regret[i] for r in group if len(r.regret) > i and r.regret[i] is not None]
            if not vals:
                continue
            xs.append(i)
            means.append(float(np.mean(vals)))
            sems.append(float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0)
        xs, means, sems = np.array(xs), np.array(means), np.array(sems)
        ax.plot(xs, means, marker="o", ms=3, label=f"{method} ({len(group)} runs)")
        ax.fill_between(xs, means - sems, means + sems, alpha=0.25)
        series[method] = {"n": xs, "mean": means, "sem": sems}
    ax.set_xlabel("iteration")
    ax.set_ylabel("simple regret")
    ax.set_title(spec.title or "safe-optimum regret at probe iterations")
    ax.legend(fontsize=8)
    return _save(fig, spec, series)


def _render_entropy_compare(spec: PlotSpec) -> RenderResult:
    import math

    r = np.linspace(-6.0, 6.0, 1201)
    p = 0.5 * np.vectorize(math.erfc)(r / np.sqrt(2.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = np.where((p > 0.0) & (p < 1.0),
                         -(p * np.log(p) + (1.0 - p) * np.log(1.0 - p)), 0.0)
    approx = LN2 * np.exp(-(r**2) / (np.pi * LN2))
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].plot(r, exact, label="exact")
    axes[0].plot(r, approx, "--", label="surrogate")
    axes[0].axhline(LN2, color="gray", lw=0.5)
    axes[0].set_xlabel("mean / std")
    axes[0].set_ylabel("indicator entropy [nats]")
    axes[0].legend(fontsize=8)
    axes[1].plot(r, exact - approx, color="#7a0d0d")
    axes[1].set_xlabel("mean / std")
    axes[1].set_ylabel("exact - surrogate")
    fig.suptitle(spec.title or "safety-indicator entropy and its Gaussian surrogate")
    series = {"ratio": r, "exact": exact, "approx": approx}
    return _save(fig, spec, series)


def _save(fig, spec: PlotSpec, series: dict) -> RenderResult:
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out, dpi=spec.dpi, metadata=_PNG_METADATA)
    plt.close(fig)
    return RenderResult(path=out, series=series)


_RENDERERS = {
    "coverage": _render_coverage,
    "snapshot": _render_snapshot,
    "regret": _render_regret,
    "entropy-compare": _render_entropy_compare,
}


def render(spec: PlotSpec) -> RenderResult:
    """Render one figure; deterministic for fixed inputs."""
    return _RENDERERS[spec.kind](spec)
