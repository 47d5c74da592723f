"""
Stratified four-way split: train / val / calib / test.

Split sizes come from a largest-remainder allocation of the whole dataset.
Samples are ordered by their relative rank inside their (shuffled) class,
so any contiguous cut holds every class in proportion (within one sample).
"""

from typing import Dict, Sequence

import numpy as np

from src.data.dataset import SPLIT_NAMES, LabeledDataset
from src.exceptions import ConfigError
from src.logger import get_logger

logger = get_logger(__name__)

DEFAULT_FRACTIONS = (0.6, 0.15, 0.1, 0.15)


def validate_fractions(fractions: Sequence[float]) -> tuple:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != len(SPLIT_NAMES):
        raise ConfigError(f"Expected {len(SPLIT_NAMES)} split fractions, got {len(fractions)}")
    if any(f <= 0 for f in fractions):
        raise ConfigError(f"Split fractions must be positive: {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"Split fractions sum to {sum(fractions)}, expected 1",
                          details={"fractions": list(fractions)})
    return fractions


def allocate(total: int, fractions: Sequence[float]) -> list:
    """Largest-remainder integer sizes; ties go to the earlier split."""
    raw = [total * f for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    leftover = total - sum(sizes)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


def split_dataset(ds: LabeledDataset, fractions: Sequence[float] = DEFAULT_FRACTIONS,
                  seed: int = 0) -> Dict[str, LabeledDataset]:
    fractions = validate_fractions(fractions)
    rng = np.random.default_rng(seed)

    rank_keys = np.zeros(len(ds))
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue
        shuffled = rng.permutation(members)
        rank_keys[shuffled] = (np.arange(members.size) + 0.5) / members.size
    order = np.lexsort((ds.labels, rank_keys))

    splits: Dict[str, LabeledDataset] = {}
    start = 0
    for name, size in zip(SPLIT_NAMES, allocate(len(ds), fractions)):
        positions = np.sort(order[start:start + size])
        splits[name] = ds.subset(positions, split=name)
        start += size

    logger.info("Split %d samples: %s", len(ds),
                ", ".join(f"{name}={len(part)}" for name, part in splits.items()))
    return splits
