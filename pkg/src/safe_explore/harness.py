"""Experiment orchestration: campaigns, metrics, CSV records, aggregation.

A campaign runs the select / evaluate / condition loop for a fixed number
of iterations, logging per-iteration safety, coverage, information-gain
and regret metrics. Everything is keyed off the configured seed so that a
rerun reproduces its outputs byte for byte (timing capture is off by
default for that reason).
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .acquisition import LN2, OptimizerConfig, select_next
from .baselines import LipschitzConfig, select_next_baseline
from .domain import Box, GridDomain
from .environments import (
    Environment,
    EnvironmentNumericalError,
    bump_env,
    cartpole_env,
    exponential_env,
    gp_sample_env,
    pendulum_env,
)
from .gp import GpState, Kernel, NoiseModel, NumericalDegeneracyError
from .safety import SafetyModel, is_safe
from .subspace import sample_lines, select_next_on_lines

SCHEMA_VERSION = "1"
CSV_COLUMNS = [
    "schema_version", "run_id", "n", "x", "y", "f_true", "violated", "score",
    "coverage_pct", "true_safe_coverage_pct", "info_gain_sum", "regret", "wall_ms",
]

GRID_METHODS = ("stageopt", "heuristic", "uncertainty")
LINE_METHODS = ("line-ise", "line-stageopt", "line-heuristic", "line-uncertainty")
MAX_GRID_POINTS = 2_000_000
_REFERENCE_SEED = 1_234_567

# Explorer-model hyperparameters used when the config does not pin them.
DEFAULT_GP_BY_ENV = {
    "gp_sample": {"lengthscale": 0.1, "outputscale": 150.0},
    "exponential": {"lengthscale": 1.2, "outputscale": 100.0},
    "bump": {"lengthscale": 1.6, "outputscale": 1.0},
    "pendulum": {"lengthscale": 1.3, "outputscale": 6.6},
    "cartpole": {"lengthscale": 0.8, "outputscale": 5.0},
}


class ConfigError(ValueError):
    """Configuration file failed validation or cannot be applied."""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    iterations: int
    environment: dict
    method: dict
    run_id: str | None = None
    replications: int = 1
    beta: float = 2.0
    regret_probe_period: int = 10
    record_timing: bool = False
    gp: dict = field(default_factory=dict)
    methods: tuple = ()
    coverage: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        validate_config(raw)
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        kwargs = {k: v for k, v in raw.items() if k in known}
        if "methods" in kwargs:
            kwargs["methods"] = tuple(kwargs["methods"])
        return ExperimentConfig(**kwargs)

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return ExperimentConfig.from_dict(raw)

    def method_list(self) -> list[dict]:
        return list(self.methods) if self.methods else [self.method]


def validate_config(raw: dict) -> None:
    schema = json.loads(
        resources.files("safe_explore").joinpath("schemas/config.schema.json").read_text()
    )
    try:
        jsonschema.validate(raw, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config does not match schema: {exc.message}") from exc
    env = raw["environment"]
    if env["name"] == "bump" and "kind" not in env:
        raise ConfigError("bump environment requires a 'kind'")
    for method in [raw["method"], *raw.get("methods", [])]:
        name = method["name"]
        if name in GRID_METHODS:
            dim = _environment_dim(env)
            ppd = raw.get("coverage", {}).get("grid_points_per_dim")
            ppd = ppd or _default_grid_ppd(dim)
            if ppd**dim > MAX_GRID_POINTS:
                raise ConfigError(
                    f"grid method {name!r} needs a discretized domain; "
                    f"{ppd}^{dim} grid points exceed the {MAX_GRID_POINTS} cap"
                )


def _environment_dim(env_cfg: dict) -> int:
    name = env_cfg["name"]
    if name == "exponential":
        return 1
    if name == "gp_sample":
        return len(env_cfg.get("box", [[-2.5, -2.5], [2.5, 2.5]])[0])
    if name == "bump":
        return int(env_cfg.get("dimension", 5))
    if name == "pendulum":
        return 2
    if name == "cartpole":
        return 3
    raise ConfigError(f"unknown environment {name!r}")


def _default_grid_ppd(dim: int) -> int:
    return {1: 500, 2: 200}.get(dim, 40)


def build_environment(env_cfg: dict, seed: int) -> Environment:
    name = env_cfg["name"]
    if name == "exponential":
        return exponential_env(rng_seed=seed, lo=env_cfg.get("lo", -5.0), hi=env_cfg.get("hi", 5.0))
    if name == "gp_sample":
        box_cfg = env_cfg.get("box", [[-2.5, -2.5], [2.5, 2.5]])
        box = Box(np.asarray(box_cfg[0], float), np.asarray(box_cfg[1], float))
        kernel = Kernel.rbf(env_cfg.get("lengthscale", 0.1),
                            env_cfg.get("outputscale", 150.0), dim=box.dim)
        grid = GridDomain(box, env_cfg.get("sample_points_per_dim", 51))
        noise = NoiseModel.homoskedastic(env_cfg.get("noise", 0.05))
        return gp_sample_env(kernel, grid, rng_seed=seed, noise=noise)
    if name == "bump":
        return bump_env(env_cfg["kind"], int(env_cfg.get("dimension", 5)), rng_seed=seed)
    if name == "pendulum":
        return pendulum_env(rng_seed=seed)
    if name == "cartpole":
        return cartpole_env(rng_seed=seed)
    raise ConfigError(f"unknown environment {name!r}")


def build_kernel(cfg: ExperimentConfig, env: Environment) -> Kernel:
    defaults = DEFAULT_GP_BY_ENV[cfg.environment["name"]]
    if cfg.environment["name"] == "gp_sample":
        defaults = {
            "lengthscale": cfg.environment.get("lengthscale", defaults["lengthscale"]),
            "outputscale": cfg.environment.get("outputscale", defaults["outputscale"]),
        }
    ls = cfg.gp.get("lengthscale", defaults["lengthscale"])
    s = cfg.gp.get("outputscale", defaults["outputscale"])
    return Kernel.rbf(ls, s, dim=env.box.dim)


@dataclass
class RunRecord:
    """Per-iteration log of one campaign."""

    run_id: str
    method: str
    environment: str
    seed: int
    replication: int
    n: list = field(default_factory=list)
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    f_true: list = field(default_factory=list)
    violated: list = field(default_factory=list)
    score: list = field(default_factory=list)
    coverage_pct: list = field(default_factory=list)
    true_safe_coverage_pct: list = field(default_factory=list)
    info_gain_sum: list = field(default_factory=list)
    regret: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    incomplete: bool = False

    def __len__(self):
        return len(self.n)

    @property
    def violation_pct(self) -> float:
        if not self.n:
            return 0.0
        return 100.0 * sum(self.violated) / len(self.violated)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(len(self.n)):
            writer.writerow([
                SCHEMA_VERSION,
                self.run_id,
                self.n[i],
                ";".join(repr(float(v)) for v in self.x[i]),
                repr(float(self.y[i])),
                repr(float(self.f_true[i])),
                int(self.violated[i]),
                repr(float(self.score[i])),
                repr(float(self.coverage_pct[i])),
                repr(float(self.true_safe_coverage_pct[i])),
                repr(float(self.info_gain_sum[i])),
                "" if self.regret[i] is None else repr(float(self.regret[i])),
                int(self.wall_ms[i]),
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def read_run_csv(path) -> RunRecord:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ConfigError(f"unexpected CSV columns in {path}")
        rec = None
        for row in reader:
            if row["schema_version"] != SCHEMA_VERSION:
                raise ConfigError(
                    f"unsupported schema_version {row['schema_version']!r} in {path}"
                )
            if rec is None:
                run_id = row["run_id"]
                parts = run_id.split(":")
                rec = RunRecord(run_id=run_id,
                                method=parts[0] if parts else "unknown",
                                environment=parts[1] if len(parts) > 1 else "unknown",
                                seed=0, replication=0)
            rec.n.append(int(row["n"]))
            rec.x.append(np.array([float(v) for v in row["x"].split(";")]))
            rec.y.append(float(row["y"]))
            rec.f_true.append(float(row["f_true"]))
            rec.violated.append(bool(int(row["violated"])))
            rec.score.append(float(row["score"]))
            rec.coverage_pct.append(float(row["coverage_pct"]))
            rec.true_safe_coverage_pct.append(float(row["true_safe_coverage_pct"]))
            rec.info_gain_sum.append(float(row["info_gain_sum"]))
            rec.regret.append(None if row["regret"] == "" else float(row["regret"]))
            rec.wall_ms.append(int(row["wall_ms"]))
        if rec is None:
            raise ConfigError(f"empty run CSV {path}")
    return rec


class GridPosteriorCache:
    """Posterior mean/variance over a fixed point set, updated in lockstep
    with incremental GP conditioning instead of re-solving from scratch."""

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        self._n = -1
        self._gp_id = None
        self._V = None
        self._mu = None
        self._var = None

    def stats(self, gp: GpState):
        if self._gp_id == id(gp) and self._n == gp.n:
            return self._mu, self._var
        self._gp_id = id(gp)
        if gp.n == 0:
            mu = np.zeros(len(self.points))
            var = np.full(len(self.points), gp.kernel.outputscale)
            self._n, self._V = 0, np.empty((0, len(self.points)))
            self._mu, self._var = mu, var
            return mu, var
        fresh_extension = (
            self._V is not None
            and gp.n == self._n + 1
            and gp.updates_since_refit > 0
        )
        if fresh_extension:
            c = gp.chol[-1, :-1]
            d = gp.chol[-1, -1]
            k_new = gp.kernel.gram(gp.data.points[-1:], self.points)[0]
            row = (k_new - c @ self._V) / d
            self._V = np.vstack([self._V, row[None, :]])
            self._mu = self._mu + gp.white_y[-1] * row
            self._var = np.maximum(self._var - row**2, 0.0)
        else:
            kxd = gp.kernel.gram(gp.data.points, self.points)
            self._V = solve_triangular(gp.chol, kxd, lower=True)
            self._mu = self._V.T @ gp.white_y
            self._var = np.maximum(
                gp.kernel.outputscale - np.einsum("ij,ij->j", self._V, self._V), 0.0
            )
        self._n = gp.n
        return self._mu, self._var


def coverage(gp: GpState, safety: SafetyModel, n: int, reference: np.ndarray,
             truth_values: np.ndarray | None = None, stats=None):
    """(percent of reference classified safe, percent of the truly-safe
    reference classified safe)."""
    reference = np.asarray(reference, dtype=float)
    if reference.size == 0:
        raise ValueError("reference point set must be nonempty")
    if stats is None:
        mu, var = gp.posterior(reference)
    else:
        mu, var = stats
    safe = (mu - safety.beta_at(n) * np.sqrt(var) >= safety.threshold)
    safe = safe | safety.is_seed(reference)
    classified = 100.0 * float(np.mean(safe))
    if truth_values is None:
        return classified, float("nan")
    truly = np.asarray(truth_values) >= 0.0
    of_true = 100.0 * float(np.mean(safe[truly])) if truly.any() else 0.0
    return classified, of_true


def true_safe_optimum(env: Environment, reference: np.ndarray | None = None,
                      reference_values: np.ndarray | None = None,
                      samples: int = 10000, refine_top: int = 5) -> float:
    """Best truly-safe constraint value, by candidate search plus local
    refinement on the truth channel (metrics only)."""
    if "f_star" in env.meta:
        return env.meta["f_star"]
    cands = [env.safe_seed[None, :]]
    vals = [env.true_constraint(cands[0])]
    if reference is not None:
        cands.append(np.asarray(reference, dtype=float))
        vals.append(np.asarray(reference_values, dtype=float) if reference_values is not None
                    else env.true_constraint(cands[-1]))
    if reference is None or env.box.dim >= 3:
        mc = env.box.sample(np.random.default_rng(_REFERENCE_SEED), samples)
        cands.append(mc)
        vals.append(env.true_constraint(mc))
    for axis in range(env.box.dim):
        ts = np.linspace(env.box.lo[axis], env.box.hi[axis], 2001)
        pts = np.tile(env.safe_seed, (ts.size, 1))
        pts[:, axis] = ts
        cands.append(pts)
        vals.append(env.true_constraint(pts))
    cands = np.vstack(cands)
    vals = np.concatenate(vals)
    finite = np.isfinite(vals)
    order = np.flatnonzero(finite)[np.argsort(vals[finite])[::-1]]
    best = float(vals[order[0]])
    bounds = list(zip(env.box.lo, env.box.hi))
    for idx in order[:refine_top]:
        res = minimize(lambda p: -env.true_constraint(p[None, :])[0],
                       cands[idx], method="L-BFGS-B", bounds=bounds)
        if np.isfinite(res.fun):
            best = max(best, float(-res.fun))
    env.meta["f_star"] = best
    return best


def regret_probe(gp: GpState, safety: SafetyModel, n: int, env: Environment,
                 reference: np.ndarray | None = None, stats=None,
                 reference_values: np.ndarray | None = None) -> float:
    """Simple regret of the best point currently certifiable as safe.

    The incumbent maximizes the upper confidence bound over the current
    safe set (reference points plus everything evaluated); regret is
    measured against the true safe optimum on the truth channel.
    """
    if reference is None:
        reference = env.box.sample(np.random.default_rng(_REFERENCE_SEED), 2000)
        stats = None
    reference = np.asarray(reference, dtype=float)
    extra = [env.safe_seed[None, :]]
    if gp.n:
        extra.append(gp.data.points)
    extra = np.vstack(extra)
    if stats is not None:
        mu_e, var_e = gp.posterior(extra)
        mu = np.concatenate([stats[0], mu_e])
        var = np.concatenate([stats[1], var_e])
    else:
        mu, var = gp.posterior(np.vstack([reference, extra]))
    cands = np.vstack([reference, extra])
    beta = safety.beta_at(n)
    sd = np.sqrt(var)
    safe = (mu - beta * sd >= safety.threshold) | safety.is_seed(cands)
    if not safe.any():
        safe = safety.is_seed(cands)
    idx = np.flatnonzero(safe)
    best = idx[int(np.argmax(mu[idx] + beta * sd[idx]))]
    f_star = true_safe_optimum(env, reference, reference_values)
    return float(f_star - env.true_constraint(cands[best]))


def _coverage_reference(env: Environment, cfg: ExperimentConfig):
    """Reference point set for coverage metrics: dense grid up to 2-D,
    fixed-seed Monte Carlo above."""
    dim = env.box.dim
    ppd = cfg.coverage.get("grid_points_per_dim")
    if dim <= 2:
        grid = GridDomain(env.box, ppd or _default_grid_ppd(dim))
        return grid.points, grid
    mc = cfg.coverage.get("mc_samples", 10000)
    rng = np.random.default_rng(np.random.SeedSequence([_REFERENCE_SEED, dim]))
    return env.box.sample(rng, mc), None


def _selection_grid(env: Environment, cfg: ExperimentConfig, reference_grid):
    if reference_grid is not None:
        return reference_grid
    ppd = cfg.coverage.get("grid_points_per_dim") or _default_grid_ppd(env.box.dim)
    if ppd**env.box.dim > MAX_GRID_POINTS:
        raise ConfigError("grid method infeasible for this environment dimension")
    return GridDomain(env.box, ppd)


def _anchor_point(gp: GpState, safety: SafetyModel, n: int) -> np.ndarray:
    """Most recent evaluated point still classified safe, else the seed."""
    for i in range(gp.n - 1, -1, -1):
        pt = gp.data.points[i]
        if is_safe(gp, safety, n, pt):
            return pt.copy()
    return safety.safe_seed.copy()


def run_campaign(cfg: ExperimentConfig, replication: int = 0) -> RunRecord:
    """Run one exploration campaign; deterministic for (config, seed, rep)."""
    method_cfg = cfg.method
    method = method_cfg["name"]
    root = np.random.SeedSequence([cfg.seed, replication])
    env_seed, loop_seed = root.spawn(2)
    env = build_environment(cfg.environment, int(env_seed.generate_state(1)[0]))
    kernel = build_kernel(cfg, env)
    gp = GpState.fit(kernel, env.noise, dim=env.box.dim)
    safety = SafetyModel(safe_seed=env.safe_seed, beta=cfg.beta)

    reference, ref_grid = _coverage_reference(env, cfg)
    truth_ref = env.true_constraint(reference)
    cache = GridPosteriorCache(reference)

    grid = _selection_grid(env, cfg, ref_grid) if method in GRID_METHODS else None

    opt_cfg = OptimizerConfig(
        restarts=method_cfg.get("restarts", 20),
        max_steps=method_cfg.get("max_steps", 80),
        selection_margin=method_cfg.get("selection_margin", 0.5),
    )
    lips_cfg = LipschitzConfig(method_cfg.get("lipschitz", 1.0))
    n_lines = method_cfg.get("lines", 4)
    ppl = method_cfg.get("points_per_line", 201)

    run_id = cfg.run_id or f"{method}:{env.name}:s{cfg.seed}:r{replication}"
    record = RunRecord(run_id=run_id, method=method, environment=env.name,
                       seed=cfg.seed, replication=replication)
    loop_rng = np.random.default_rng(loop_seed)

    info_gain_sum = 0.0
    for n in range(cfg.iterations):
        t0 = time.perf_counter()
        iter_rng = np.random.default_rng(loop_rng.integers(2**63))
        try:
            stats = cache.stats(gp)
            if method == "ise":
                choice = select_next(gp, safety, n, env.box, opt_cfg, iter_rng)
                x, score = choice.x_next, choice.mi_value
            elif method in GRID_METHODS:
                grid_stats = stats if grid is ref_grid else None
                choice = select_next_baseline(method, gp, safety, n, grid,
                                              lips_cfg, stats=grid_stats)
                x, score = choice.x_next, choice.score
            elif method in LINE_METHODS:
                anchor = _anchor_point(gp, safety, n)
                lines = sample_lines(anchor, n_lines, env.box, iter_rng)
                kind = method.split("-", 1)[1]
                choice = select_next_on_lines(kind, gp, safety, n, lines,
                                              config=opt_cfg, rng=iter_rng,
                                              baseline_cfg=lips_cfg,
                                              points_per_line=ppl)
                x = choice.x_next
                score = choice.mi_value if kind == "ise" else choice.score
            else:
                raise ConfigError(f"unknown method {method!r}")

            _, var_x = gp.posterior(x)
            nv_x = gp.noise_variance_at(x)
            y = env.evaluate(x)
            f_true = env.true_constraint(x)
            gp = gp.condition(x, y)
            stats = cache.stats(gp)
        except EnvironmentNumericalError:
            record.incomplete = True
            record.n.append(n)
            record.x.append(np.asarray(x, dtype=float))
            record.y.append(float("nan"))
            record.f_true.append(float("nan"))
            record.violated.append(True)
            record.score.append(score)
            record.coverage_pct.append(record.coverage_pct[-1] if record.coverage_pct else 0.0)
            record.true_safe_coverage_pct.append(
                record.true_safe_coverage_pct[-1] if record.true_safe_coverage_pct else 0.0)
            record.info_gain_sum.append(info_gain_sum)
            record.regret.append(None)
            record.wall_ms.append(_elapsed_ms(t0, cfg.record_timing))
            break
        except NumericalDegeneracyError:
            record.incomplete = True
            break

        # Empirical information-gain sum from the posterior variance at the
        # chosen point; the weight reduces to a constant for homoskedastic
        # noise and is applied per-point otherwise.
        weight = LN2 / (nv_x * math.log1p(1.0 / nv_x))
        info_gain_sum += weight * math.log1p(var_x / nv_x)

        cov_pct, true_cov_pct = coverage(gp, safety, n, reference, truth_ref, stats=stats)
        probe = None
        if (n + 1) % cfg.regret_probe_period == 0:
            probe = regret_probe(gp, safety, n, env, reference, stats=stats,
                                 reference_values=truth_ref)

        record.n.append(n)
        record.x.append(np.asarray(x, dtype=float))
        record.y.append(float(y))
        record.f_true.append(float(f_true))
        record.violated.append(bool(f_true < 0.0))
        record.score.append(float(score))
        record.coverage_pct.append(cov_pct)
        record.true_safe_coverage_pct.append(true_cov_pct)
        record.info_gain_sum.append(info_gain_sum)
        record.regret.append(probe)
        record.wall_ms.append(_elapsed_ms(t0, cfg.record_timing))
    return record


def _elapsed_ms(t0: float, record_timing: bool) -> int:
    if not record_timing:
        return 0
    return int(round(1000.0 * (time.perf_counter() - t0)))


def _mean_sem_std(values: np.ndarray):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0, 0.0
    std = float(values.std(ddof=1))
    return mean, std / math.sqrt(values.size), std


SUMMARY_COLUMNS = [
    "schema_version", "method", "n", "runs",
    "coverage_mean", "coverage_stderr", "coverage_std",
    "true_safe_coverage_mean",
    "violation_pct_mean", "violation_pct_stderr", "violation_pct_std",
    "regret_mean", "regret_stderr", "regret_median",
]


def aggregate(records: list[RunRecord], path=None) -> str:
    """Per-method mean / spread of coverage, violation and regret curves.

    Violation percentages are per-run totals (repeated on every row of the
    method for convenience); regret statistics appear only at probe
    iterations. Both standard error and standard deviation are reported.
    """
    if not records:
        raise ValueError("need at least one record")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    methods = []
    for rec in records:
        if rec.method not in methods:
            methods.append(rec.method)
    for method in methods:
        group = [r for r in records if r.method == method]
        viol = _mean_sem_std([r.violation_pct for r in group])
        horizon = max(len(r) for r in group)
        for n in range(horizon):
            covs = [r.coverage_pct[n] for r in group if len(r) > n]
            tcovs = [r.true_safe_coverage_pct[n] for r in group if len(r) > n]
            cov = _mean_sem_std(covs)
            regs = [r.regret[n] for r in group if len(r) > n and r.regret[n] is not None]
            if regs:
                reg = _mean_sem_std(regs)
                reg_row = [repr(reg[0]), repr(reg[1]), repr(float(np.median(regs)))]
            else:
                reg_row = ["", "", ""]
            tc = [v for v in tcovs if not math.isnan(v)]
            writer.writerow([
                SCHEMA_VERSION, method, n, len(covs),
                repr(cov[0]), repr(cov[1]), repr(cov[2]),
                repr(float(np.mean(tc))) if tc else "",
                repr(viol[0]), repr(viol[1]), repr(viol[2]),
                *reg_row,
            ])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
