"""Batch plotting for pipelined-optimization trace CSVs."""

__version__ = "0.1.0"

from .data import (
    EXPECTED_HEADER,
    FilterError,
    SchemaError,
    TraceTable,
    aggregate_regret,
    load_trace_csv,
    superiority_ratios,
)
from .render import PLOT_KINDS, PlotSpec, RenderResult, render

__all__ = [
    "__version__",
    "EXPECTED_HEADER",
    "FilterError",
    "PLOT_KINDS",
    "PlotSpec",
    "RenderResult",
    "SchemaError",
    "TraceTable",
    "aggregate_regret",
    "load_trace_csv",
    "render",
    "superiority_ratios",
]
