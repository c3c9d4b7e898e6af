"""Readers for the versioned run-CSV interface.

This package deliberately re-implements the reading side: it talks to the
explorer only through its published CSV schema, so a schema bump is an
explicit, detectable break rather than a silent drift.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

KNOWN_SCHEMA_VERSIONS = ("1",)

RUN_COLUMNS = [
    "schema_version", "run_id", "n", "x", "y", "f_true", "violated", "score",
    "coverage_pct", "true_safe_coverage_pct", "info_gain_sum", "regret", "wall_ms",
]


class SchemaVersionError(ValueError):
    """The CSV declares a schema this renderer does not understand."""


@dataclass
class RunSeries:
    """One campaign's rows, parsed into arrays."""

    run_id: str
    method: str
    n: np.ndarray
    x: np.ndarray
    y: np.ndarray
    f_true: np.ndarray
    violated: np.ndarray
    coverage_pct: np.ndarray
    regret: list = field(default_factory=list)  # None where not probed


def read_run(path) -> RunSeries:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RUN_COLUMNS:
            raise SchemaVersionError(f"{path}: unexpected column set {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty run CSV")
    for row in rows:
        if row["schema_version"] not in KNOWN_SCHEMA_VERSIONS:
            raise SchemaVersionError(
                f"{path}: schema_version {row['schema_version']!r} not in {KNOWN_SCHEMA_VERSIONS}"
            )
    run_id = rows[0]["run_id"]
    method = run_id.split(":")[0] if ":" in run_id else run_id
    return RunSeries(
        run_id=run_id,
        method=method,
        n=np.array([int(r["n"]) for r in rows]),
        x=np.array([[float(v) for v in r["x"].split(";")] for r in rows]),
        y=np.array([float(r["y"]) for r in rows]),
        f_true=np.array([float(r["f_true"]) for r in rows]),
        violated=np.array([bool(int(r["violated"])) for r in rows]),
        coverage_pct=np.array([float(r["coverage_pct"]) for r in rows]),
        regret=[None if r["regret"] == "" else float(r["regret"]) for r in rows],
    )


def read_runs(paths) -> list[RunSeries]:
    return [read_run(p) for p in paths]
