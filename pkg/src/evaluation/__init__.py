"""
Evaluation module - PR curves, the evaluation grid and accounting

This module provides:
- pr_curve / best_f1 / average_curves: precision-recall with adversarial as positive
- evaluate_grid / EvalReport: detector x source x attack x epsilon x seed cells
- write_report / load_report / verify_report: CSV, JSON and SVG report files
- overhead_report / latency_bench: parameter overhead and per-batch latency
"""

from src.evaluation.pr import (
    RECALL_GRID_POINTS,
    PRCurve,
    PRPoint,
    average_curves,
    best_f1,
    interpolated_precision,
    pr_curve,
)
from src.evaluation.grid import (
    CELL_COLUMNS,
    POSITIVE_MODES,
    BatchKey,
    CellResult,
    EvalReport,
    balanced_pool,
    evaluate_cell,
    evaluate_grid,
    grid_jobs,
)
from src.evaluation.overhead import (
    LatencyStats,
    OverheadReport,
    aux_parameter_counts,
    environment_descriptor,
    latency_bench,
    latency_table,
    overhead_report,
)
from src.evaluation.report import (
    load_report,
    read_cell_scores,
    read_latency,
    verify_report,
    write_latency,
    write_report,
)

__all__ = [
    "RECALL_GRID_POINTS",
    "PRCurve",
    "PRPoint",
    "average_curves",
    "best_f1",
    "interpolated_precision",
    "pr_curve",
    "CELL_COLUMNS",
    "POSITIVE_MODES",
    "BatchKey",
    "CellResult",
    "EvalReport",
    "balanced_pool",
    "evaluate_cell",
    "evaluate_grid",
    "grid_jobs",
    "LatencyStats",
    "OverheadReport",
    "aux_parameter_counts",
    "environment_descriptor",
    "latency_bench",
    "latency_table",
    "overhead_report",
    "load_report",
    "read_cell_scores",
    "read_latency",
    "verify_report",
    "write_latency",
    "write_report",
]
