# Knockoff filter thresholds, selection metrics and multi-run aggregation
from analytics.metrics import EvalMetrics, FrequencyReport, aggregate_runs, evaluate
from analytics.selection import (
    SelectionReport,
    estimated_fdp,
    knockoff_plus_threshold,
    knockoff_threshold,
    run_selection,
    select,
)

__all__ = [
    "EvalMetrics",
    "FrequencyReport",
    "SelectionReport",
    "aggregate_runs",
    "estimated_fdp",
    "evaluate",
    "knockoff_plus_threshold",
    "knockoff_threshold",
    "run_selection",
    "select",
]
