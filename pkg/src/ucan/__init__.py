"""
UCAN module - auxiliary ArcFace heads on a frozen backbone

This module provides:
- ArcFaceConfig / AuxBlock: per-layer projection and class centers
- aux_forward / cosine_scores: refined embeddings and their class scores
- arcface_loss / global_loss: the training objective
- train_aux: joint block training with TCS checkpointing
- layer_scores / select_layers: layer quality and subset choice
"""

from src.ucan.auxiliary import (
    ArcFaceConfig,
    AuxBlock,
    aux_forward,
    aux_parameter_count,
    build_aux_blocks,
    cosine_scores,
    load_aux_blocks,
    save_aux_blocks,
)
from src.ucan.losses import ARCCOS_CLAMP, arcface_logits, arcface_loss, global_loss
from src.ucan.selection import (
    LayerScore,
    layer_scores,
    score_cosines,
    scores_from_taps,
    select_layers,
    total_cosine_similarity,
)
from src.ucan.training import train_aux

__all__ = [
    "ArcFaceConfig",
    "AuxBlock",
    "aux_forward",
    "aux_parameter_count",
    "build_aux_blocks",
    "cosine_scores",
    "load_aux_blocks",
    "save_aux_blocks",
    "ARCCOS_CLAMP",
    "arcface_logits",
    "arcface_loss",
    "global_loss",
    "LayerScore",
    "layer_scores",
    "score_cosines",
    "scores_from_taps",
    "select_layers",
    "total_cosine_similarity",
    "train_aux",
]
