"""
Precision-recall curves with adversarial as the positive class.

One point per distinct score cut. With ``greater_is_adversarial`` an input
is flagged when score >= threshold; otherwise when score <= threshold.
Points are ordered from the most to the least permissive cut, so recall
never increases along the curve.
"""

from dataclasses import asdict, dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from src.detectors.threshold import confusion_at, f1_from_counts, split_scores
from src.exceptions import ContractError

RECALL_GRID_POINTS = 101


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PRCurve:
    points: List[PRPoint] = field(default_factory=list)
    greater_is_adversarial: bool = True

    def __len__(self) -> int:
        return len(self.points)

    @property
    def precisions(self) -> np.ndarray:
        return np.array([p.precision for p in self.points])

    @property
    def recalls(self) -> np.ndarray:
        return np.array([p.recall for p in self.points])

    def to_rows(self) -> List[dict]:
        return [p.to_dict() for p in self.points]


def pr_curve(scores: Sequence[float], labels: Sequence[int], greater_is_adversarial: bool = True) -> PRCurve:
    """labels: 1 = adversarial, 0 = benign."""
    sign = 1.0 if greater_is_adversarial else -1.0
    positives, negatives = split_scores(sign * np.asarray(scores, dtype=np.float64), labels)
    cuts = np.unique(np.concatenate([positives, negatives]))
    tp, fp, fn = confusion_at(positives, negatives, cuts)
    f1 = f1_from_counts(tp, fp, fn)
    points = [
        PRPoint(threshold=float(sign * cut), precision=float(t / (t + f)), recall=float(t / positives.size),
                f1=float(score))
        for cut, t, f, score in zip(cuts, tp, fp, f1)
    ]
    return PRCurve(points=points, greater_is_adversarial=greater_is_adversarial)


def best_f1(curve: PRCurve) -> Tuple[float, float]:
    """(threshold, F1) of the max-F1 point; ties go to the most permissive cut."""
    if not curve.points:
        raise ContractError("best_f1 of an empty curve")
    best = max(range(len(curve.points)), key=lambda i: (curve.points[i].f1, -i))
    return curve.points[best].threshold, curve.points[best].f1


def interpolated_precision(curve: PRCurve, grid: np.ndarray) -> np.ndarray:
    """max precision over points with recall >= r, for each grid recall r (0 where none)."""
    recalls, precisions = curve.recalls, curve.precisions
    out = np.zeros(grid.shape[0])
    for i, r in enumerate(grid):
        reachable = recalls >= r - 1e-12
        out[i] = precisions[reachable].max() if np.any(reachable) else 0.0
    return out


def average_curves(curves: Sequence[PRCurve], points: int = RECALL_GRID_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """Mean interpolated precision on an evenly spaced recall grid over [0, 1]."""
    if not curves:
        raise ContractError("No curves to average")
    grid = np.linspace(0.0, 1.0, points)
    return grid, np.mean([interpolated_precision(c, grid) for c in curves], axis=0)
