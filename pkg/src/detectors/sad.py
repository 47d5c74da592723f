"""Softmax-confidence baseline: adversarial_score = 1 - max softmax probability."""

from typing import Sequence

import numpy as np
from scipy.special import softmax

from src.detectors.base import Detector
from src.exceptions import DimensionError


def sad_score(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    batch = np.atleast_2d(logits)
    if batch.ndim != 2 or batch.shape[1] < 2:
        raise DimensionError(f"sad_score expects (CL,) or (n, CL) logits, got {logits.shape}")
    scores = 1.0 - softmax(batch, axis=1).max(axis=1)
    return scores[0] if single else scores


class SadDetector(Detector):
    name = "sad"

    def __init__(self):
        super().__init__(None)

    def score_features(self, logits: np.ndarray, features: Sequence[np.ndarray]) -> np.ndarray:
        return sad_score(np.atleast_2d(logits))
