"""
ArcFace margin loss and the global (all-layer) loss.

The margin is added to the true-class angle only, and the scale s sits
inside each exponential: logits are s*cos(theta_y + m) for the label and
s*cos(theta_j) elsewhere.
"""

from typing import Sequence, Union

import numpy as np

from src.exceptions import ClassIndexError, DimensionError
from src.tensor import Tensor, ops
from src.ucan.auxiliary import ArcFaceConfig

ARCCOS_CLAMP = 1e-7

Labels = Union[int, Sequence[int], np.ndarray]


def _label_array(cs: Tensor, y: Labels) -> np.ndarray:
    labels = np.asarray(y, dtype=np.int64).reshape(-1)
    rows = 1 if cs.ndim == 1 else cs.shape[0]
    if cs.ndim not in (1, 2) or labels.shape[0] != rows:
        raise DimensionError(f"arcface: {labels.shape[0]} labels for scores of shape {cs.shape}")
    num_classes = cs.shape[-1]
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ClassIndexError(f"Class index out of range [0, {num_classes})", details={"labels": labels.tolist()[:10]})
    return labels


def arcface_logits(cs: Tensor, y: Labels, cfg: ArcFaceConfig) -> Tensor:
    """Margin-adjusted, scaled logits for cosine scores (CL,) or (B, CL)."""
    labels = _label_array(cs, y)
    if cfg.margin == 0:
        return ops.scale(cs, cfg.scale)
    clamped = ops.clamp(cs, -1.0 + ARCCOS_CLAMP, 1.0 - ARCCOS_CLAMP)
    margin = np.zeros(cs.shape)
    if cs.ndim == 1:
        margin[labels[0]] = cfg.margin
    else:
        margin[np.arange(labels.shape[0]), labels] = cfg.margin
    angles = ops.add(ops.arccos(clamped), Tensor(margin))
    return ops.scale(ops.cos(angles), cfg.scale)


def arcface_loss(cs: Tensor, y: Labels, cfg: ArcFaceConfig) -> Tensor:
    logits = arcface_logits(cs, y, cfg)
    return ops.softmax_xent(logits, y if cs.ndim == 2 else int(np.asarray(y).reshape(-1)[0]))


def global_loss(per_layer: Sequence[Tensor]) -> Tensor:
    """Mean of the per-layer losses."""
    return ops.stack_mean(list(per_layer))
