"""
CIFAR-10 binary-version reader.

Each record is 1 label byte followed by 3072 pixel bytes (3 channel planes
of 32x32, row-major). A path may be one ``.bin`` file or a directory holding
``data_batch_*.bin`` / ``test_batch.bin``.
"""

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from src.data.dataset import LabeledDataset
from src.exceptions import ConfigError, CorruptRecordError, FormatError, ResolutionError
from src.logger import get_logger

logger = get_logger(__name__)

RECORD_BYTES = 3073
IMAGE_SHAPE = (3, 32, 32)
NUM_CLASSES = 10


def _batch_files(path: Path):
    if path.is_dir():
        files = sorted(path.glob("data_batch_*.bin")) + sorted(path.glob("test_batch.bin"))
        if not files:
            raise ResolutionError("cifar10 batch files", path)
        return files
    if not path.exists():
        raise ResolutionError("cifar10 binary", path)
    return [path]


def _read_records(file_path: Path) -> np.ndarray:
    raw = np.fromfile(file_path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES != 0:
        raise FormatError(f"{file_path.name}: size {raw.size} is not a multiple of {RECORD_BYTES}",
                          details={"file": str(file_path), "size": int(raw.size)})
    return raw.reshape(-1, RECORD_BYTES)


def load_cifar10_binary(path: Union[str, Path], class_subset: Optional[Sequence[int]] = None) -> LabeledDataset:
    """Pixels scaled to [0, 1]; with a subset, labels are renumbered in subset order."""
    records = np.concatenate([_read_records(f) for f in _batch_files(Path(path))])
    labels = records[:, 0].astype(np.int64)
    if labels.max() > NUM_CLASSES - 1:
        bad = int(np.flatnonzero(labels > NUM_CLASSES - 1)[0])
        raise CorruptRecordError(f"Record {bad} has label {labels[bad]} (expected 0-9)",
                                 details={"record": bad, "label": int(labels[bad])})
    pixels = records[:, 1:].reshape((-1,) + IMAGE_SHAPE).astype(np.float64) / 255.0

    num_classes = NUM_CLASSES
    if class_subset:
        subset = [int(c) for c in class_subset]
        if len(set(subset)) != len(subset) or any(c < 0 or c >= NUM_CLASSES for c in subset):
            raise ConfigError(f"Invalid CIFAR-10 class subset {subset}")
        keep = np.isin(labels, subset)
        remap = {c: i for i, c in enumerate(subset)}
        pixels = pixels[keep]
        labels = np.array([remap[int(c)] for c in labels[keep]], dtype=np.int64)
        num_classes = len(subset)

    logger.info("Loaded %d CIFAR-10 records from %s (%d classes)", labels.shape[0], path, num_classes)
    return LabeledDataset(samples=pixels, labels=labels, num_classes=num_classes)
