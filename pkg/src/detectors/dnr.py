"""
Deep Neural Rejection detector.

Per selected layer: one-vs-rest RBF-SVMs on benign features. A combiner
(again one-vs-rest RBF-SVMs) is trained on the concatenated per-layer
decision vectors. The benign confidence of an input is the max combiner
decision value mapped through a logistic fitted to benign training
statistics; adversarial_score = 1 - confidence. With one selected layer
the combiner is skipped and the layer's max decision value is used.
"""

from typing import List, Optional, Sequence

import numpy as np
from scipy.special import expit

from src.detectors.base import Detector
from src.detectors.sources import EmbeddingSource
from src.detectors.svm import DEFAULT_C, DEFAULT_MAX_ITER, DEFAULT_TOL, RbfSvm, rbf_svm_fit
from src.exceptions import ContractError, DataError
from src.logger import get_logger

logger = get_logger(__name__)

MIN_SPREAD = 1e-6


class DnrDetector(Detector):
    name = "dnr"

    def __init__(self, layer_svms: List[List[RbfSvm]], combiner: Optional[List[RbfSvm]],
                 center: float, spread: float, source: Optional[EmbeddingSource] = None):
        super().__init__(source)
        self.layer_svms = layer_svms
        self.combiner = combiner
        self.center = float(center)
        self.spread = max(float(spread), MIN_SPREAD)

    @property
    def layers(self) -> List[int]:
        if self.source is not None:
            return list(self.source.layers)
        return list(range(1, len(self.layer_svms) + 1))

    @property
    def num_classes(self) -> int:
        return len(self.layer_svms[0])

    def decision_vectors(self, features: Sequence[np.ndarray]) -> np.ndarray:
        """(n, |S| * CL) concatenated per-layer one-vs-rest decision values."""
        if len(features) != len(self.layer_svms):
            raise ContractError(f"DNR needs features for {len(self.layer_svms)} layers, got {len(features)}")
        return np.concatenate([
            np.stack([svm.decision(f) for svm in svms], axis=1)
            for svms, f in zip(self.layer_svms, features)
        ], axis=1)

    def combined_scores(self, features: Sequence[np.ndarray]) -> np.ndarray:
        """(n, CL) class scores from the combiner (or the single layer)."""
        vectors = self.decision_vectors(features)
        if self.combiner is None:
            return vectors
        return np.stack([svm.decision(vectors) for svm in self.combiner], axis=1)

    def benign_confidence(self, features: Sequence[np.ndarray]) -> np.ndarray:
        top = self.combined_scores(features).max(axis=1)
        return expit((top - self.center) / self.spread)

    def score_features(self, logits: np.ndarray, features: Sequence[np.ndarray]) -> np.ndarray:
        return 1.0 - self.benign_confidence(features)


def _one_vs_rest(x: np.ndarray, labels: np.ndarray, num_classes: int, C: float, tol: float,
                 max_iter: int, gamma: Optional[float]) -> List[RbfSvm]:
    return [rbf_svm_fit(x, np.where(labels == c, 1, -1), gamma=gamma, C=C, tol=tol, max_iter=max_iter)
            for c in range(num_classes)]


def dnr_train(features: Sequence[np.ndarray], labels: np.ndarray, num_classes: Optional[int] = None,
              source: Optional[EmbeddingSource] = None, C: float = DEFAULT_C, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER, gamma: Optional[float] = None) -> DnrDetector:
    """Fit on benign features only; features[i] belongs to the i-th selected layer."""
    labels = np.asarray(labels, dtype=np.int64)
    if not features:
        raise ContractError("DNR needs features for at least one layer")
    if source is not None and len(features) != len(source.layers):
        raise ContractError(f"Source selects {len(source.layers)} layers, got features for {len(features)}")
    if labels.size == 0:
        raise DataError("DNR training set is empty")
    num_classes = int(num_classes or labels.max() + 1)

    layer_svms = []
    for position, f in enumerate(features):
        if f.shape[0] != labels.shape[0]:
            raise ContractError(f"Layer {position + 1}: {f.shape[0]} feature rows for {labels.shape[0]} labels")
        layer_svms.append(_one_vs_rest(np.asarray(f, dtype=np.float64), labels, num_classes,
                                       C, tol, max_iter, gamma))

    detector = DnrDetector(layer_svms, None, 0.0, 1.0, source=source)
    if len(features) > 1:
        vectors = detector.decision_vectors(features)
        detector.combiner = _one_vs_rest(vectors, labels, num_classes, C, tol, max_iter, gamma)
    top = detector.combined_scores(features).max(axis=1)
    detector.center = float(top.mean())
    detector.spread = max(float(top.std()), MIN_SPREAD)
    logger.info("Trained DNR over %d layers (%d classes, %d samples), combiner=%s", len(features), num_classes,
                labels.size, "yes" if detector.combiner else "skipped")
    return detector


def dnr_score(det: DnrDetector, features: Sequence[np.ndarray]) -> np.ndarray:
    """adversarial_score per row."""
    return det.score_features(np.zeros((0,)), features)
