"""
Backbone training loop.

This module provides:
- EpochRecord / TrainLog: per-epoch metrics, shared with aux training
- balanced_batches(): seeded class-interleaved minibatches
- train_backbone(): momentum SGD with best-validation checkpointing
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src.data.dataset import LabeledDataset
from src.exceptions import ConfigError, ContractError
from src.logger import get_logger
from src.model.backbone import BackboneModel
from src.model.optim import SGD
from src.tensor import Tensor, ops

logger = get_logger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_accuracy: Optional[float] = None
    metrics: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    initial: Dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def losses(self) -> List[float]:
        return [r.loss for r in self.records]

    def metric(self, name: str) -> List[float]:
        return [r.metrics[name] for r in self.records if name in r.metrics]

    def to_dict(self) -> dict:
        return {"best_epoch": self.best_epoch, "initial": dict(self.initial), "records": [r.to_dict() for r in self.records]}


def balanced_batches(labels: np.ndarray, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Shuffle within classes, interleave classes by relative rank, cut into batches."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be at least 1, got {batch_size}")
    keys = np.zeros(labels.shape[0])
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        keys[members] = (np.arange(members.size) + rng.random()) / members.size
    order = np.argsort(keys, kind="stable")
    batches = [order[i:i + batch_size] for i in range(0, order.size, batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def _check_data(model: BackboneModel, data: LabeledDataset) -> None:
    data.require_nonempty("training set")
    if data.num_classes != model.spec.num_classes:
        raise ContractError(f"Dataset has {data.num_classes} classes, backbone expects {model.spec.num_classes}")


def train_backbone(model: BackboneModel, data: LabeledDataset, epochs: int, seed: int = 0,
                   val: Optional[LabeledDataset] = None, lr: float = 0.05, momentum: float = 0.9,
                   batch_size: int = 32, noise_augment: float = 0.0) -> TrainLog:
    """Train in place; with a validation set the best-accuracy weights are restored at the end."""
    model.require_trainable()
    _check_data(model, data)
    log = TrainLog()
    if epochs <= 0:
        return log

    rng = np.random.default_rng(seed)
    optimizer = SGD(model.parameters(), lr=lr, momentum=momentum)
    best_accuracy, best_state = -1.0, None

    logger.info("Training %s backbone: %d samples, %d epochs, lr=%s", model.spec.arch, len(data), epochs, lr)
    for epoch in range(1, epochs + 1):
        losses = []
        for batch in balanced_batches(data.labels, batch_size, rng):
            x = data.samples[batch]
            if noise_augment > 0:
                x = np.clip(x + rng.normal(0.0, noise_augment, x.shape), 0.0, 1.0)
            optimizer.zero_grad()
            loss = ops.softmax_xent(model.forward(Tensor(x)), data.labels[batch])
            loss.backward()
            optimizer.step()
            losses.append(loss.item())

        record = EpochRecord(epoch=epoch, loss=float(np.mean(losses)))
        if val is not None and len(val):
            record.val_accuracy = model.accuracy(val.samples, val.labels)
            if record.val_accuracy > best_accuracy:
                best_accuracy, best_state = record.val_accuracy, model.state()
                log.best_epoch = epoch
        log.records.append(record)
        logger.info("Epoch %d/%d: loss=%.4f val_acc=%s", epoch, epochs, record.loss, record.val_accuracy)

    if best_state is not None:
        model.load_state(best_state)
        logger.info("Restored best validation checkpoint from epoch %s (acc=%.4f)", log.best_epoch, best_accuracy)
    return log
