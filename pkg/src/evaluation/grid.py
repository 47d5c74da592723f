"""
The detector x source x attack x epsilon x seed evaluation grid.

Each cell scores a balanced pool: benign originals and their adversarial
counterparts. With positives="successful" only pairs whose original was
classified correctly and whose adversarial is misclassified are kept.
A cell that raises is recorded as failed; the grid carries on.
"""

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.attacks.base import AdvBatch
from src.detectors.base import Detector
from src.evaluation.pr import RECALL_GRID_POINTS, PRCurve, average_curves, best_f1, pr_curve
from src.exceptions import ConfigError, DataError, UcanError
from src.logger import get_logger

logger = get_logger(__name__)

POSITIVE_MODES = ("successful", "all")
STATUS_OK = "ok"
STATUS_FAILED = "failed"

CELL_COLUMNS = ["detector", "source", "attack", "epsilon", "seed", "status", "best_f1", "threshold",
                "success_rate", "n_adversarial", "n_benign", "positives", "error"]


@dataclass(frozen=True)
class BatchKey:
    """Identifies one adversarial batch; ``target`` names the source an adaptive attack was aimed at."""

    attack: str
    epsilon: float
    seed: int
    target: str = ""


@dataclass
class CellResult:
    detector: str
    source: str
    attack: str
    epsilon: float
    seed: int
    status: str = STATUS_OK
    best_f1: float = float("nan")
    threshold: float = float("nan")
    success_rate: float = float("nan")
    n_adversarial: int = 0
    n_benign: int = 0
    positives: str = "successful"
    error: str = ""
    scores: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    curve: Optional[PRCurve] = None

    @property
    def cell_id(self) -> str:
        raw = f"{self.detector}-{self.source}-{self.attack}-eps{self.epsilon:.4f}-s{self.seed}"
        return re.sub(r"[^A-Za-z0-9_.-]", "_", raw)

    @property
    def method(self) -> str:
        return f"{self.detector}/{self.source}"

    def to_row(self) -> dict:
        return {column: getattr(self, column) for column in CELL_COLUMNS}


@dataclass
class EvalReport:
    cells: List[CellResult] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    positives: str = "successful"
    curve_grid: int = RECALL_GRID_POINTS
    overhead: Optional[dict] = None

    def ok_cells(self) -> List[CellResult]:
        return [c for c in self.cells if c.status == STATUS_OK]

    def failed_cells(self) -> List[CellResult]:
        return [c for c in self.cells if c.status == STATUS_FAILED]

    def averages(self) -> List[dict]:
        """Mean best-F1 per method, per (method, attack, epsilon) over seeds, and per method overall."""
        rows: List[dict] = []
        groups: Dict[Tuple, List[float]] = {}
        overall: Dict[Tuple, List[float]] = {}
        for cell in self.ok_cells():
            groups.setdefault((cell.detector, cell.source, cell.attack, cell.epsilon), []).append(cell.best_f1)
            overall.setdefault((cell.detector, cell.source), []).append(cell.best_f1)
        for (detector, source, attack, epsilon), values in sorted(groups.items()):
            rows.append({"detector": detector, "source": source, "attack": attack, "epsilon": epsilon,
                         "mean_f1": float(np.mean(values)), "cells": len(values)})
        for (detector, source), values in sorted(overall.items()):
            rows.append({"detector": detector, "source": source, "attack": "all", "epsilon": "all",
                         "mean_f1": float(np.mean(values)), "cells": len(values)})
        return rows

    def mean_f1(self, detector: str, source: str, attacks: Optional[Sequence[str]] = None) -> float:
        values = [c.best_f1 for c in self.ok_cells()
                  if c.detector == detector and c.source == source and (attacks is None or c.attack in attacks)]
        if not values:
            raise DataError(f"No successful cells for {detector}/{source}")
        return float(np.mean(values))

    def averaged_curves(self) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        by_method: Dict[str, List[PRCurve]] = {}
        for cell in self.ok_cells():
            if cell.curve is not None:
                by_method.setdefault(cell.method, []).append(cell.curve)
        return {method: average_curves(curves, self.curve_grid) for method, curves in sorted(by_method.items())}

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "positives": self.positives,
            "recall_grid_points": self.curve_grid,
            "cells": [cell.to_row() for cell in self.cells],
            "averages": self.averages(),
            "overhead": self.overhead,
        }


# ============================================================
# Cells
# ============================================================

def balanced_pool(model, batch: AdvBatch, positives: str = "successful") -> Tuple[np.ndarray, np.ndarray]:
    """(samples, labels) with benign originals (0) then their adversarials (1)."""
    if positives not in POSITIVE_MODES:
        raise ConfigError(f"positives must be one of {POSITIVE_MODES}, got '{positives}'")
    if positives == "successful":
        correct = model.predict(batch.originals) == batch.labels
        keep = correct & (model.predict(batch.adversarials) != batch.labels)
    else:
        keep = np.ones(len(batch), dtype=bool)
    if not np.any(keep):
        raise DataError(f"No usable adversarial pairs for {batch.attack} at eps={batch.epsilon:.4f}")
    samples = np.concatenate([batch.originals[keep], batch.adversarials[keep]])
    labels = np.concatenate([np.zeros(int(keep.sum()), dtype=np.int64), np.ones(int(keep.sum()), dtype=np.int64)])
    return samples, labels


def evaluate_cell(model, detector: Detector, key: BatchKey, batch: AdvBatch,
                  positives: str = "successful") -> CellResult:
    cell = CellResult(detector=detector.name, source=detector.source_name, attack=key.attack,
                      epsilon=float(key.epsilon), seed=int(key.seed), positives=positives)
    try:
        cell.success_rate = batch.success_rate
        samples, labels = balanced_pool(model, batch, positives)
        scores = detector.with_seed(key.seed).score(model, samples)
        curve = pr_curve(scores, labels)
        cell.threshold, cell.best_f1 = best_f1(curve)
        cell.scores, cell.labels, cell.curve = scores, labels, curve
        cell.n_adversarial = int(labels.sum())
        cell.n_benign = int(labels.size - labels.sum())
    except UcanError as e:
        logger.exception("Cell %s failed", cell.cell_id)
        cell.status, cell.error = STATUS_FAILED, str(e)
    return cell


def grid_jobs(detectors: Sequence[Detector], batches: Dict[BatchKey, AdvBatch]) -> List[Tuple[Detector, BatchKey]]:
    """Adaptive batches pair only with detectors sharing the attacked source."""
    jobs = []
    for detector in detectors:
        for key in sorted(batches, key=lambda k: (k.attack, k.epsilon, k.seed, k.target)):
            if key.target and key.target != detector.source_name:
                continue
            if key.target and detector.source is None:
                continue
            jobs.append((detector, key))
    return jobs


def evaluate_grid(model, detectors: Sequence[Detector], batches: Dict[BatchKey, AdvBatch],
                  positives: str = "successful", workers: int = 1, curve_grid: int = RECALL_GRID_POINTS,
                  progress_callback: Optional[Callable[[int, int], None]] = None,
                  cancel_check: Optional[Callable[[], bool]] = None) -> EvalReport:
    if positives not in POSITIVE_MODES:
        raise ConfigError(f"positives must be one of {POSITIVE_MODES}, got '{positives}'")
    jobs = grid_jobs(detectors, batches)
    report = EvalReport(seeds=sorted({k.seed for k in batches}), positives=positives, curve_grid=curve_grid)
    logger.info("Evaluating %d grid cells (%d detectors, %d batches)", len(jobs), len(detectors), len(batches))

    def run(job):
        detector, key = job
        return evaluate_cell(model, detector, key, batches[key], positives)

    if workers <= 1:
        for done, job in enumerate(jobs, start=1):
            if cancel_check and cancel_check():
                logger.info("Grid evaluation cancelled after %d cells", done - 1)
                break
            report.cells.append(run(job))
            if progress_callback:
                progress_callback(done, len(jobs))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run, job) for job in jobs]
            for done, future in enumerate(futures, start=1):
                if cancel_check and cancel_check():
                    for pending in futures:
                        pending.cancel()
                    logger.info("Grid evaluation cancelled after %d cells", done - 1)
                    break
                report.cells.append(future.result())
                if progress_callback:
                    progress_callback(done, len(jobs))

    failed = len(report.failed_cells())
    if failed:
        logger.warning("%d of %d grid cells failed", failed, len(jobs))
    return report
