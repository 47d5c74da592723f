"""
Model module - the frozen target classifier

This module provides:
- BackboneSpec / LayerSpec: tapped-layer architecture descriptions
- BackboneModel: SmallCNN and MLP backbones with forward_with_taps
- SGD / Adam optimizers
- train_backbone and the shared TrainLog
"""

from src.model.spec import BackboneSpec, LayerSpec, build_spec, mlp_spec, smallcnn_spec
from src.model.backbone import BackboneModel, forward_with_taps, load_model, serialize_model
from src.model.optim import SGD, Adam
from src.model.training import EpochRecord, TrainLog, balanced_batches, train_backbone

__all__ = [
    "BackboneSpec",
    "LayerSpec",
    "build_spec",
    "mlp_spec",
    "smallcnn_spec",
    "BackboneModel",
    "forward_with_taps",
    "load_model",
    "serialize_model",
    "SGD",
    "Adam",
    "EpochRecord",
    "TrainLog",
    "balanced_batches",
    "train_backbone",
]
