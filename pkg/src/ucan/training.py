"""
Joint training of the aux blocks on a frozen backbone.

Taps are computed once (the backbone is frozen), then every step sums the
ArcFace losses of all blocks into the global loss. Only block parameters
move; the backbone checksum is verified after training. With a validation
set the epoch with the highest TCS is kept.
"""

from typing import List, Optional, Sequence

import numpy as np

from src.data.dataset import LabeledDataset
from src.exceptions import ContractError
from src.logger import get_logger
from src.model.backbone import BackboneModel
from src.model.optim import SGD
from src.model.training import EpochRecord, TrainLog, balanced_batches
from src.tensor import Tensor
from src.ucan.auxiliary import AuxBlock, aux_forward, cosine_scores
from src.ucan.losses import arcface_loss, global_loss
from src.ucan.selection import scores_from_taps

logger = get_logger(__name__)


def _check_blocks(model: BackboneModel, blocks: Sequence[AuxBlock]) -> None:
    channels = model.spec.tap_channels()
    if len(blocks) != len(channels):
        raise ContractError(f"Expected one aux block per tapped layer ({len(channels)}), got {len(blocks)}")
    for k, (block, c) in enumerate(zip(blocks, channels), start=1):
        if block.layer_index != k or block.channels != c:
            raise ContractError(f"Aux block {block.layer_index} ({block.channels} channels) "
                                f"does not fit layer L{k} ({c} channels)")
        if block.config.num_classes != model.spec.num_classes:
            raise ContractError("Aux block class count differs from the backbone's")


def _global_step_loss(blocks: Sequence[AuxBlock], taps: List[np.ndarray], batch: np.ndarray,
                      labels: np.ndarray) -> List[Tensor]:
    return [arcface_loss(cosine_scores(block, aux_forward(block, Tensor(tap[batch]))), labels, block.config)
            for block, tap in zip(blocks, taps)]


def train_aux(model: BackboneModel, blocks: Sequence[AuxBlock], data: LabeledDataset, epochs: int,
              seed: int = 0, val: Optional[LabeledDataset] = None, lr: float = 0.05,
              momentum: float = 0.9, batch_size: int = 32) -> TrainLog:
    model.require_frozen()
    _check_blocks(model, blocks)
    data.require_nonempty("training set")
    log = TrainLog()
    if epochs <= 0:
        return log

    checksum = model.checksum()
    rng = np.random.default_rng(seed)
    taps = model.taps(data.samples)
    val_taps = model.taps(val.samples) if val is not None and len(val) else None
    params = [p for block in blocks for p in block.parameters()]
    optimizer = SGD(params, lr=lr, momentum=momentum)

    if val_taps is not None:
        _, log.initial["tcs"] = scores_from_taps(blocks, val_taps, val.labels)
    best_tcs, best_states = -np.inf, None

    logger.info("Training %d aux blocks: %d samples, %d epochs, d'=%d, s=%s, m=%s", len(blocks), len(data), epochs,
                blocks[0].config.d_prime, blocks[0].config.scale, blocks[0].config.margin)
    for epoch in range(1, epochs + 1):
        step_losses, layer_losses = [], np.zeros(len(blocks))
        batches = balanced_batches(data.labels, batch_size, rng)
        for batch in batches:
            optimizer.zero_grad()
            per_layer = _global_step_loss(blocks, taps, batch, data.labels[batch])
            loss = global_loss(per_layer)
            loss.backward()
            optimizer.step()
            step_losses.append(loss.item())
            layer_losses += [l.item() for l in per_layer]

        record = EpochRecord(epoch=epoch, loss=float(np.mean(step_losses)))
        for block, total in zip(blocks, layer_losses):
            record.metrics[f"loss_L{block.layer_index}"] = float(total / len(batches))
        if val_taps is not None:
            scores, tcs = scores_from_taps(blocks, val_taps, val.labels)
            record.metrics["tcs"] = tcs
            if tcs > best_tcs:
                best_tcs, best_states = tcs, [block.state() for block in blocks]
                log.best_epoch = epoch
        log.records.append(record)
        logger.info("Aux epoch %d/%d: global_loss=%.4f tcs=%s", epoch, epochs, record.loss, record.metrics.get("tcs"))

    if best_states is not None:
        for block, state in zip(blocks, best_states):
            block.load_state(state)
        logger.info("Kept aux blocks from epoch %s (TCS=%.4f)", log.best_epoch, best_tcs)

    if model.checksum() != checksum:
        raise ContractError("Backbone weights changed during aux training")
    return log
