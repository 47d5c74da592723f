"""
Writing and reading evaluation reports.

Layout under a report directory:
    cells.csv              one row per grid cell, CELL_COLUMNS order
    averages.csv           mean best-F1 per method/attack/epsilon and overall
    report.json            structured summary (seeds, cells, averages, overhead)
    scores/<cell>.csv      raw detector scores with benign/adversarial labels
    curves/<cell>.csv      per-cell precision-recall points
    averaged_curves.csv    interpolated precision per method on the recall grid
    pr_<method>.svg        averaged curve plot per method
    overhead.csv           aux parameter counts per layer (when known)

Floats are written in shortest round-trip form so reruns are byte-identical
and recomputation from the files is exact.
"""

import csv
import math
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.evaluation.grid import CELL_COLUMNS, STATUS_OK, CellResult, EvalReport  # noqa: E402
from src.evaluation.pr import best_f1, pr_curve  # noqa: E402
from src.exceptions import FormatError, ResolutionError  # noqa: E402
from src.logger import get_logger  # noqa: E402
from src.storage import read_json, write_json  # noqa: E402

logger = get_logger(__name__)

PathLike = Union[str, Path]

CELLS_FILE = "cells.csv"
AVERAGES_FILE = "averages.csv"
REPORT_FILE = "report.json"
AVERAGED_CURVES_FILE = "averaged_curves.csv"
OVERHEAD_FILE = "overhead.csv"
SCORES_DIR = "scores"
CURVES_DIR = "curves"

F1_TOLERANCE = 1e-9


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else repr(float(value))
    return str(value)


def write_rows(path: PathLike, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row[c]) for c in columns])
    return path


def read_rows(path: PathLike) -> List[dict]:
    path = Path(path)
    if not path.exists():
        raise ResolutionError("report file", path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def method_slug(method: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", method)


# ============================================================
# Per-cell files
# ============================================================

def write_cell_scores(directory: PathLike, cell: CellResult) -> Path:
    rows = [{"index": i, "label": int(l), "score": float(s)} for i, (s, l) in enumerate(zip(cell.scores, cell.labels))]
    return write_rows(Path(directory) / SCORES_DIR / f"{cell.cell_id}.csv", ["index", "label", "score"], rows)


def read_cell_scores(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    rows = read_rows(path)
    try:
        scores = np.array([float(r["score"]) for r in rows])
        labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)
    except (KeyError, ValueError) as e:
        raise FormatError(f"Malformed score file {path}: {e}") from e
    return scores, labels


def write_cell_curve(directory: PathLike, cell: CellResult) -> Path:
    return write_rows(Path(directory) / CURVES_DIR / f"{cell.cell_id}.csv",
                      ["threshold", "precision", "recall", "f1"], cell.curve.to_rows())


# ============================================================
# Averaged curves
# ============================================================

def write_averaged_curves(path: PathLike, curves: Dict[str, Tuple[np.ndarray, np.ndarray]]) -> Path:
    rows = []
    for method, (grid, precision) in curves.items():
        rows.extend({"method": method, "recall": r, "precision": p} for r, p in zip(grid, precision))
    return write_rows(path, ["method", "recall", "precision"], rows)


def plot_averaged_curve(path: PathLike, method: str, grid: np.ndarray, precision: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "ucan"
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    ax.plot(grid, precision, linewidth=1.5)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.02)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_title(f"Average precision-recall: {method}")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# ============================================================
# Whole report
# ============================================================

def write_report(report: EvalReport, directory: PathLike, plots: bool = True) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_rows(directory / CELLS_FILE, CELL_COLUMNS, (cell.to_row() for cell in report.cells))
    write_rows(directory / AVERAGES_FILE, ["detector", "source", "attack", "epsilon", "mean_f1", "cells"],
               report.averages())
    for cell in report.ok_cells():
        write_cell_scores(directory, cell)
        write_cell_curve(directory, cell)

    curves = report.averaged_curves()
    if curves:
        write_averaged_curves(directory / AVERAGED_CURVES_FILE, curves)
        if plots:
            for method, (grid, precision) in curves.items():
                plot_averaged_curve(directory / f"pr_{method_slug(method)}.svg", method, grid, precision)
    if report.overhead:
        write_rows(directory / OVERHEAD_FILE, ["layer", "channels", "projection", "bias", "arcface", "total"],
                   report.overhead["per_layer"])

    document = report.to_dict()
    document["cells"] = [{k: fmt(v) for k, v in row.items()} for row in document["cells"]]
    document["averages"] = [{k: fmt(v) for k, v in row.items()} for row in document["averages"]]
    write_json(directory / REPORT_FILE, document)
    logger.info("Report written to %s (%d cells, %d failed)", directory, len(report.cells), len(report.failed_cells()))
    return directory


def write_latency(path: PathLike, latency: Sequence[dict]) -> Path:
    return write_rows(path, ["name", "batch", "iterations", "mean", "std"], latency)


def read_latency(path: PathLike) -> List[dict]:
    return read_rows(path)


def _cell_from_row(row: dict) -> CellResult:
    try:
        return CellResult(
            detector=row["detector"], source=row["source"], attack=row["attack"], epsilon=float(row["epsilon"]),
            seed=int(row["seed"]), status=row["status"], best_f1=float(row["best_f1"]),
            threshold=float(row["threshold"]), success_rate=float(row["success_rate"]),
            n_adversarial=int(row["n_adversarial"]), n_benign=int(row["n_benign"]),
            positives=row["positives"], error=row["error"],
        )
    except (KeyError, ValueError) as e:
        raise FormatError(f"Malformed cells row: {e}", details={"row": row}) from e


def load_report(directory: PathLike) -> EvalReport:
    """Rebuild an EvalReport from cells.csv and the persisted raw scores."""
    directory = Path(directory)
    cells = [_cell_from_row(row) for row in read_rows(directory / CELLS_FILE)]
    for cell in cells:
        if cell.status != STATUS_OK:
            continue
        cell.scores, cell.labels = read_cell_scores(directory / SCORES_DIR / f"{cell.cell_id}.csv")
        cell.curve = pr_curve(cell.scores, cell.labels)
    header = read_json(directory / REPORT_FILE) if (directory / REPORT_FILE).exists() else {}
    report = EvalReport(cells=cells, seeds=list(header.get("seeds", sorted({c.seed for c in cells}))),
                        positives=header.get("positives", "successful"),
                        overhead=header.get("overhead"))
    if "recall_grid_points" in header:
        report.curve_grid = int(header["recall_grid_points"])
    return report


def verify_report(directory: PathLike, tolerance: float = F1_TOLERANCE) -> List[str]:
    """Cells whose reported best F1 differs from the F1 recomputed from their raw scores."""
    mismatches = []
    for cell in load_report(directory).ok_cells():
        _, recomputed = best_f1(cell.curve)
        if abs(recomputed - cell.best_f1) > tolerance:
            mismatches.append(cell.cell_id)
            logger.warning("Cell %s: reported F1 %s != recomputed %s", cell.cell_id, cell.best_f1, recomputed)
    return mismatches


def find_cell(report: EvalReport, cell_id: str) -> Optional[CellResult]:
    return next((c for c in report.cells if c.cell_id == cell_id), None)
