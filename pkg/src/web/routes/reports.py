"""Read-only views of the latest evaluation report."""

from __future__ import annotations

from flask import Blueprint, current_app, jsonify

from src.evaluation.report import find_cell, load_report, read_latency
from src.exceptions import UcanError
from src.logger import get_logger
from src.pipeline import ArtifactPaths

reports_bp = Blueprint("reports", __name__)
logger = get_logger(__name__)


def _paths() -> ArtifactPaths:
    return ArtifactPaths(current_app.config["UCAN_RUN_CONFIG"].out_dir)


def _load():
    return load_report(_paths().report_dir)


@reports_bp.errorhandler(UcanError)
def handle_error(e: UcanError):
    logger.warning("Report request failed: %s", e)
    status = 404 if e.exit_code == 3 else 400
    return jsonify({"error": str(e), "code": e.code, "details": e.details}), status


@reports_bp.get("/summary")
def summary():
    report = _load()
    return jsonify({
        "seeds": report.seeds,
        "positives": report.positives,
        "recall_grid_points": report.curve_grid,
        "cells": len(report.cells),
        "failed": len(report.failed_cells()),
        "averages": report.averages(),
    })


@reports_bp.get("/cells")
def cells():
    return jsonify([dict(cell.to_row(), cell_id=cell.cell_id) for cell in _load().cells])


@reports_bp.get("/cells/<cell_id>/curve")
def cell_curve(cell_id: str):
    cell = find_cell(_load(), cell_id)
    if cell is None:
        return jsonify({"error": f"Unknown cell '{cell_id}'"}), 404
    if cell.curve is None:
        return jsonify({"error": f"Cell '{cell_id}' failed: {cell.error}"}), 409
    return jsonify({"cell_id": cell_id, "best_f1": cell.best_f1, "threshold": cell.threshold,
                    "points": cell.curve.to_rows()})


@reports_bp.get("/curves")
def averaged_curves():
    return jsonify({method: {"recall": grid.tolist(), "precision": precision.tolist()}
                    for method, (grid, precision) in _load().averaged_curves().items()})


@reports_bp.get("/overhead")
def overhead():
    paths = _paths()
    report = _load()
    latency = read_latency(paths.latency) if paths.latency.exists() else []
    return jsonify({"overhead": report.overhead, "latency": latency})
