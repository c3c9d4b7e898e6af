"""Figure rendering for safe-explore run CSVs (batch CLI, no runtime
dependency on the explorer package)."""

from .io import RunSeries, SchemaVersionError, read_run, read_runs
from .render import FIGURE_KINDS, PlotSpec, RenderResult, render

__all__ = [
    "FIGURE_KINDS",
    "PlotSpec",
    "RenderResult",
    "RunSeries",
    "SchemaVersionError",
    "read_run",
    "read_runs",
    "render",
]
