"""
Common detector interface and the Verdict record.

Every detector scores inputs as adversarial_score in [0, 1]; the detection
vector v is (1 - adversarial_score, adversarial_score).
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from src.exceptions import ContractError
from src.detectors.sources import EmbeddingSource

BENIGN = "benign"
ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class Verdict:
    benign_score: float
    adversarial_score: float
    flag: str
    threshold: float

    @property
    def v(self):
        return (self.benign_score, self.adversarial_score)

    def to_dict(self) -> dict:
        return {"v": list(self.v), "flag": self.flag, "threshold": self.threshold}


def make_verdict(adversarial_score: float, threshold: float) -> Verdict:
    adversarial_score = float(np.clip(adversarial_score, 0.0, 1.0))
    flag = ADVERSARIAL if adversarial_score >= threshold else BENIGN
    return Verdict(benign_score=1.0 - adversarial_score, adversarial_score=adversarial_score,
                   flag=flag, threshold=float(threshold))


class Detector(ABC):
    """Scores batches through an embedding source (or the logits alone when source is None)."""

    name = "detector"

    def __init__(self, source: Optional[EmbeddingSource]):
        self.source = source

    @property
    def layers(self) -> List[int]:
        return list(self.source.layers) if self.source is not None else []

    @property
    def source_name(self) -> str:
        return self.source.name if self.source is not None else "logits"

    @abstractmethod
    def score_features(self, logits: np.ndarray, features: Sequence[np.ndarray]) -> np.ndarray:
        """adversarial_score per row."""

    def check_features(self, features: Sequence[np.ndarray]) -> None:
        if len(features) != len(self.layers):
            raise ContractError(f"{self.name}: got features for {len(features)} layers, "
                                f"expected {len(self.layers)} ({self.layers})")

    def score(self, model, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.float64)
        if self.source is None:
            return self.score_features(model.logits(samples), [])
        logits, features = self.source.extract(model, samples)
        return self.score_features(logits, features)

    def with_seed(self, seed: int) -> "Detector":
        """Detector whose randomized scoring uses ``seed``; deterministic detectors return themselves."""
        return self

    def detect(self, model, samples: np.ndarray, threshold: float) -> List[Verdict]:
        return [make_verdict(s, threshold) for s in self.score(model, samples)]
