"""
Max-F1 threshold calibration.

Inputs are flagged adversarial when score >= threshold. Candidates are the
distinct observed scores plus +inf (flag nothing); the lowest threshold
among those with maximal F1 wins.
"""

from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

import numpy as np

from src.exceptions import DataError


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    f1: float
    precision: float
    recall: float

    def to_dict(self) -> dict:
        return asdict(self)


def split_scores(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    if scores.shape != labels.shape:
        raise DataError(f"{scores.size} scores for {labels.size} labels")
    positives, negatives = np.sort(scores[labels]), np.sort(scores[~labels])
    if positives.size == 0 or negatives.size == 0:
        raise DataError("Threshold calibration needs both benign and adversarial scores",
                        details={"adversarial": int(positives.size), "benign": int(negatives.size)})
    return positives, negatives


def confusion_at(positives: np.ndarray, negatives: np.ndarray, thresholds: np.ndarray):
    """TP, FP, FN counts when flagging score >= t, for every t (sorted inputs)."""
    tp = positives.size - np.searchsorted(positives, thresholds, side="left")
    fp = negatives.size - np.searchsorted(negatives, thresholds, side="left")
    return tp, fp, positives.size - tp


def f1_from_counts(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    tp, fp, fn = (np.asarray(a, dtype=np.float64) for a in (tp, fp, fn))
    denom = 2.0 * tp + fp + fn
    return np.where(tp > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    return np.append(np.unique(scores), np.inf)


def calibrate_threshold(scores: Sequence[float], labels: Sequence[int]) -> ThresholdResult:
    """labels: 1 = adversarial, 0 = benign."""
    positives, negatives = split_scores(scores, labels)
    candidates = candidate_thresholds(np.concatenate([positives, negatives]))
    tp, fp, fn = confusion_at(positives, negatives, candidates)
    f1 = f1_from_counts(tp, fp, fn)
    best = int(np.argmax(f1))  # first maximum = lowest threshold
    precision = tp[best] / (tp[best] + fp[best]) if tp[best] + fp[best] > 0 else 1.0
    return ThresholdResult(threshold=float(candidates[best]), f1=float(f1[best]),
                           precision=float(precision), recall=float(tp[best] / positives.size))
