"""
Deep k-nearest-neighbor detector with conformal credibility.

Nonconformity of (x, label) = number of the k nearest train embeddings,
summed over selected layers, whose label differs. Calibration scores use
true labels on a held-out split; inputs are scored under the backbone's
predicted label. Neighbours come from an exact Euclidean scan.
"""

import zlib
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from src.detectors.base import Detector
from src.detectors.sources import EmbeddingSource
from src.exceptions import ConfigError, ContractError, DataError
from src.logger import get_logger

logger = get_logger(__name__)

DEFAULT_K = 5


@dataclass
class CalibrationStore:
    """Train embeddings per selected layer, their labels, and sorted calibration nonconformities."""

    train_embeddings: List[np.ndarray]
    train_labels: np.ndarray
    calibration: np.ndarray


def nearest_neighbors(reference: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest reference rows per query; ties go to the lower index."""
    distances = cdist(queries, reference, metric="sqeuclidean")
    return np.argsort(distances, axis=1, kind="stable")[:, :k]


def conservative_p_values(calibration: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """(#{calibration >= alpha} + 1) / (n + 1) with calibration sorted ascending."""
    n = calibration.shape[0]
    at_least = n - np.searchsorted(calibration, alphas, side="left")
    return (at_least + 1.0) / (n + 1.0)


def batch_tag(arrays: Sequence[np.ndarray]) -> int:
    """CRC32 over the float64 bytes of a batch; keys the smoothing stream per scored batch."""
    crc = 0
    for array in arrays:
        crc = zlib.crc32(np.ascontiguousarray(array, dtype=np.float64).tobytes(), crc)
    return crc


def smoothed_p_values(calibration: np.ndarray, alphas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """(#{> alpha} + u * (#{== alpha} + 1)) / (n + 1), u ~ U(0, 1)."""
    n = calibration.shape[0]
    greater = n - np.searchsorted(calibration, alphas, side="right")
    equal = np.searchsorted(calibration, alphas, side="right") - np.searchsorted(calibration, alphas, side="left")
    u = rng.random(alphas.shape[0])
    return (greater + u * (equal + 1.0)) / (n + 1.0)


class DknnDetector(Detector):
    name = "dknn"

    def __init__(self, store: CalibrationStore, k: int, num_classes: int,
                 source: Optional[EmbeddingSource] = None, smoothed: bool = True, seed: int = 0):
        super().__init__(source)
        self.store = store
        self.k = int(k)
        self.num_classes = int(num_classes)
        self.smoothed = bool(smoothed)
        self.seed = int(seed)

    @property
    def layers(self) -> List[int]:
        if self.source is not None:
            return list(self.source.layers)
        return list(range(1, len(self.store.train_embeddings) + 1))

    @property
    def calibration(self) -> np.ndarray:
        return self.store.calibration

    def neighbor_labels(self, features: Sequence[np.ndarray]) -> List[np.ndarray]:
        self.check_features(features)
        return [self.store.train_labels[nearest_neighbors(train, np.asarray(f), self.k)]
                for train, f in zip(self.store.train_embeddings, features)]

    def nonconformity_all(self, features: Sequence[np.ndarray]) -> np.ndarray:
        """(n, CL): nonconformity under every candidate label."""
        total = None
        for labels in self.neighbor_labels(features):
            agree = np.stack([(labels == c).sum(axis=1) for c in range(self.num_classes)], axis=1)
            disagree = self.k - agree
            total = disagree if total is None else total + disagree
        return total

    def nonconformity(self, features: Sequence[np.ndarray], labels: np.ndarray) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        table = self.nonconformity_all(features)
        return table[np.arange(labels.shape[0]), labels].astype(np.float64)

    def p_values(self, alphas: np.ndarray, smoothed: Optional[bool] = None,
                 tag: Optional[int] = None) -> np.ndarray:
        """Smoothed draws come from the stream [seed, tag]; tag defaults to a digest of alphas."""
        alphas = np.asarray(alphas, dtype=np.float64)
        if smoothed if smoothed is not None else self.smoothed:
            stream = batch_tag([alphas]) if tag is None else int(tag)
            return smoothed_p_values(self.calibration, alphas, np.random.default_rng([self.seed, stream]))
        return conservative_p_values(self.calibration, alphas)

    def credibility(self, logits: np.ndarray, features: Sequence[np.ndarray],
                    smoothed: Optional[bool] = None) -> np.ndarray:
        predicted = np.asarray(logits).argmax(axis=1)
        return self.p_values(self.nonconformity(features, predicted), smoothed, tag=batch_tag(features))

    def score_features(self, logits: np.ndarray, features: Sequence[np.ndarray]) -> np.ndarray:
        return 1.0 - self.credibility(logits, features)

    def with_seed(self, seed: int) -> "DknnDetector":
        if not self.smoothed or int(seed) == self.seed:
            return self
        return DknnDetector(self.store, self.k, self.num_classes, source=self.source, smoothed=True, seed=seed)

    def class_embeddings(self, layer_position: int, label: int) -> np.ndarray:
        return self.store.train_embeddings[layer_position][self.store.train_labels == label]


def dknn_build(train_embeddings: Sequence[np.ndarray], train_labels: np.ndarray,
               calib_embeddings: Sequence[np.ndarray], calib_labels: np.ndarray, k: int = DEFAULT_K,
               num_classes: Optional[int] = None, source: Optional[EmbeddingSource] = None,
               smoothed: bool = True, seed: int = 0) -> DknnDetector:
    train_labels = np.asarray(train_labels, dtype=np.int64)
    calib_labels = np.asarray(calib_labels, dtype=np.int64)
    if len(train_embeddings) != len(calib_embeddings) or not train_embeddings:
        raise ContractError("Train and calibration embeddings must cover the same non-empty layer set")
    if calib_labels.size == 0:
        raise DataError("Calibration split is empty")
    num_classes = int(num_classes or train_labels.max() + 1)
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    counts = np.bincount(train_labels, minlength=num_classes)
    if counts.min() < k:
        raise ConfigError(f"k={k} exceeds the smallest per-class train count ({counts.min()})",
                          details={"k": k, "per_class": counts.tolist()})

    store = CalibrationStore(train_embeddings=[np.asarray(e, dtype=np.float64) for e in train_embeddings],
                             train_labels=train_labels, calibration=np.zeros(0))
    detector = DknnDetector(store, k, num_classes, source=source, smoothed=smoothed, seed=seed)
    store.calibration = np.sort(detector.nonconformity(calib_embeddings, calib_labels), kind="stable")
    logger.info("Built DKNN over layers %s: k=%d, %d train points, %d calibration scores", detector.layers, k,
                train_labels.size, calib_labels.size)
    return detector


def dknn_score(det: DknnDetector, logits: np.ndarray, features: Sequence[np.ndarray],
               smoothed: Optional[bool] = None) -> np.ndarray:
    """Credibility p-values under the predicted label."""
    return det.credibility(logits, features, smoothed)
