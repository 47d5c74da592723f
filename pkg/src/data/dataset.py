"""
Labeled dataset container and its persistence.

Samples are float64 arrays of uniform shape; labels are class indices in
[0, CL). ``indices`` remembers each sample's position in the dataset it was
split from, so split disjointness stays checkable after saving.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np

from src.exceptions import ClassIndexError, DataError, DimensionError
from src.storage import Container, load, save

SPLIT_NAMES = ("train", "val", "calib", "test")


@dataclass
class LabeledDataset:
    """Samples, labels and the split they belong to."""

    samples: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "all"
    indices: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.samples.shape[0] != self.labels.shape[0]:
            raise DimensionError(f"{self.samples.shape[0]} samples but {self.labels.shape[0]} labels")
        if self.num_classes < 2:
            raise DataError(f"Dataset needs at least 2 classes, got {self.num_classes}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ClassIndexError(f"Labels must lie in [0, {self.num_classes})")
        if self.indices is None:
            self.indices = np.arange(self.labels.shape[0], dtype=np.int64)
        else:
            self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self.samples.shape[1:])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, positions: np.ndarray, split: Optional[str] = None) -> "LabeledDataset":
        positions = np.asarray(positions, dtype=np.int64)
        return LabeledDataset(
            samples=self.samples[positions],
            labels=self.labels[positions],
            num_classes=self.num_classes,
            split=split or self.split,
            indices=self.indices[positions],
        )

    def head(self, count: int) -> "LabeledDataset":
        return self.subset(np.arange(min(count, len(self))))

    def batches(self, batch_size: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        for start in range(0, len(self), batch_size):
            yield self.samples[start:start + batch_size], self.labels[start:start + batch_size]

    def require_nonempty(self, what: str = "dataset") -> None:
        if len(self) == 0:
            raise DataError(f"The {what} is empty", details={"split": self.split})


# ============================================================
# Persistence
# ============================================================

def save_splits(splits: Dict[str, LabeledDataset], path: Union[str, Path], meta: Optional[dict] = None) -> Path:
    """Store several splits in one dataset artifact."""
    if not splits:
        raise DataError("No splits to save")
    num_classes = {ds.num_classes for ds in splits.values()}
    if len(num_classes) != 1:
        raise DataError("Splits disagree on the class count")
    container = Container(kind="dataset", meta={"num_classes": num_classes.pop(),
                                                "splits": list(splits), **(meta or {})})
    for name, ds in splits.items():
        container.sections[f"{name}.samples"] = [ds.samples]
        container.sections[f"{name}.labels"] = [ds.labels.astype(np.float64)]
        container.sections[f"{name}.indices"] = [ds.indices.astype(np.float64)]
    return save(container, path)


def load_splits(path: Union[str, Path]) -> Dict[str, LabeledDataset]:
    container = load(path, expected_kind="dataset")
    num_classes = int(container.meta["num_classes"])
    splits = {}
    for name in container.meta["splits"]:
        splits[name] = LabeledDataset(
            samples=container.tensor(f"{name}.samples"),
            labels=np.rint(container.tensor(f"{name}.labels")).astype(np.int64),
            num_classes=num_classes,
            split=name,
            indices=np.rint(container.tensor(f"{name}.indices")).astype(np.int64),
        )
    return splits
