"""
Backbone classifier with per-layer feature taps.

This module provides:
- BackboneModel: weights for a BackboneSpec, freezable and checksummable
- forward_with_taps(): logits plus the N tapped feature maps
- serialize_model() / load_model(): "backbone" artifacts in the weight container

A frozen model holds plain (non-trainable) tensors, so gradients still reach
the input (attacks) and the taps (aux training) but never the weights.
"""

import hashlib
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.exceptions import ContractError, DimensionError
from src.logger import get_logger
from src.model.spec import BackboneSpec
from src.storage import Container, load, save
from src.tensor import Tensor, as_tensor, ops, parameter

logger = get_logger(__name__)

HEAD = "head"


def _layer_key(index: int) -> str:
    return f"L{index}"


class BackboneModel:
    """Weights keyed by layer ("L1.w", "L1.b", ..., "head.w", "head.b")."""

    def __init__(self, spec: BackboneSpec, weights: Dict[str, np.ndarray], frozen: bool = False):
        self.spec = spec
        self.frozen = bool(frozen)
        self.weights: Dict[str, Tensor] = {}
        for name, values in weights.items():
            self.weights[name] = Tensor(values) if self.frozen else parameter(values)

    @classmethod
    def initialize(cls, spec: BackboneSpec, seed: int = 0) -> "BackboneModel":
        """He-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights: Dict[str, np.ndarray] = {}
        if spec.arch == "smallcnn":
            channels = spec.input_shape[0]
            for layer in spec.layers:
                if layer.kind != "conv3x3":
                    continue
                bound = np.sqrt(6.0 / (channels * 9))
                weights[f"{_layer_key(layer.index)}.w"] = rng.uniform(-bound, bound, (layer.width, channels, 3, 3))
                weights[f"{_layer_key(layer.index)}.b"] = np.zeros(layer.width)
                channels = layer.width
            fan_in = channels
        else:
            fan_in = int(np.prod(spec.input_shape))
            for layer in spec.layers:
                bound = np.sqrt(6.0 / fan_in)
                weights[f"{_layer_key(layer.index)}.w"] = rng.uniform(-bound, bound, (fan_in, layer.width))
                weights[f"{_layer_key(layer.index)}.b"] = np.zeros(layer.width)
                fan_in = layer.width
        bound = np.sqrt(6.0 / (fan_in + spec.num_classes))
        weights[f"{HEAD}.w"] = rng.uniform(-bound, bound, (fan_in, spec.num_classes))
        weights[f"{HEAD}.b"] = np.zeros(spec.num_classes)
        return cls(spec, weights)

    # ============================================================
    # State
    # ============================================================

    def parameters(self) -> List[Tensor]:
        return [self.weights[name] for name in sorted(self.weights)]

    def freeze(self) -> "BackboneModel":
        if not self.frozen:
            self.weights = {name: Tensor(t.data) for name, t in self.weights.items()}
            self.frozen = True
        return self

    def unfreeze(self) -> "BackboneModel":
        if self.frozen:
            self.weights = {name: parameter(t.data) for name, t in self.weights.items()}
            self.frozen = False
        return self

    def require_trainable(self) -> None:
        if self.frozen:
            raise ContractError("Backbone is frozen; training it is not allowed")

    def require_frozen(self) -> None:
        if not self.frozen:
            raise ContractError("Backbone must be frozen first")

    def state(self) -> Dict[str, np.ndarray]:
        return {name: t.numpy() for name, t in self.weights.items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        self.require_trainable()
        for name, values in state.items():
            self.weights[name].assign(values)

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name in sorted(self.weights):
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(self.weights[name].data).tobytes())
        return digest.hexdigest()

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.weights.values()))

    # ============================================================
    # Forward
    # ============================================================

    def _batched(self, x) -> Tuple[Tensor, bool]:
        x = as_tensor(x)
        shape = tuple(self.spec.input_shape)
        if x.shape == shape:
            return ops.reshape(x, (1,) + shape), True
        if x.ndim == len(shape) + 1 and x.shape[1:] == shape:
            return x, False
        raise DimensionError(f"Input shape {x.shape} does not match backbone input {shape}",
                             details={"got": list(x.shape), "expected": list(shape)})

    def _run(self, x, collect: bool) -> Tuple[Tensor, List[Tensor]]:
        batch, single = self._batched(x)
        n = batch.shape[0]
        w = self.weights
        taps: List[Tensor] = []

        if self.spec.arch == "smallcnn":
            h = batch
            for layer in self.spec.layers:
                key = _layer_key(layer.index)
                if layer.kind == "gap":
                    pooled = ops.global_avg_pool(h)
                    if collect:
                        taps.append(ops.reshape(pooled, (n, pooled.shape[1], 1, 1)))
                    h = pooled
                    continue
                if layer.downsample == "avg":
                    h = ops.avg_pool2x2(h)
                elif layer.downsample == "max":
                    h = ops.max_pool2x2(h)
                h = ops.relu(ops.conv3x3(h, w[f"{key}.w"], w[f"{key}.b"]))
                if collect:
                    taps.append(h)
        else:
            h = ops.reshape(batch, (n, int(np.prod(self.spec.input_shape))))
            for layer in self.spec.layers:
                key = _layer_key(layer.index)
                h = ops.relu(ops.dense(h, w[f"{key}.w"], w[f"{key}.b"]))
                if collect:
                    taps.append(ops.reshape(h, (n, layer.width, 1, 1)))

        logits = ops.dense(h, w[f"{HEAD}.w"], w[f"{HEAD}.b"])
        if single:
            logits = ops.reshape(logits, (self.spec.num_classes,))
            taps = [ops.reshape(t, t.shape[1:]) for t in taps]
        return logits, taps

    def forward(self, x) -> Tensor:
        return self._run(x, collect=False)[0]

    def forward_with_taps(self, x) -> Tuple[Tensor, List[Tensor]]:
        return self._run(x, collect=True)

    def logits(self, samples: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Plain numpy logits for many samples."""
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape[0] == 0:
            return np.zeros((0, self.spec.num_classes))
        chunks = [self.forward(Tensor(samples[i:i + batch_size])).numpy()
                  for i in range(0, samples.shape[0], batch_size)]
        return np.concatenate(chunks)

    def taps(self, samples: np.ndarray, batch_size: int = 256) -> List[np.ndarray]:
        """Numpy taps for many samples, one (n, C_k, H_k, W_k) array per layer."""
        samples = np.asarray(samples, dtype=np.float64)
        per_layer: List[List[np.ndarray]] = [[] for _ in self.spec.layers]
        for i in range(0, samples.shape[0], batch_size):
            _, taps = self.forward_with_taps(Tensor(samples[i:i + batch_size]))
            for k, tap in enumerate(taps):
                per_layer[k].append(tap.numpy())
        return [np.concatenate(parts) if parts else np.zeros((0,) + shape)
                for parts, shape in zip(per_layer, self.spec.tap_shapes())]

    def predict(self, samples: np.ndarray, batch_size: int = 256) -> np.ndarray:
        return self.logits(samples, batch_size).argmax(axis=1)

    def accuracy(self, samples: np.ndarray, labels: Sequence[int]) -> float:
        labels = np.asarray(labels)
        if labels.size == 0:
            return 0.0
        return float(np.mean(self.predict(samples) == labels))


def forward_with_taps(model: BackboneModel, x) -> Tuple[Tensor, List[Tensor]]:
    return model.forward_with_taps(x)


# ============================================================
# Persistence
# ============================================================

def serialize_model(model: BackboneModel, path: Union[str, Path], meta: Optional[dict] = None) -> Path:
    container = Container(kind="backbone", meta={"spec": model.spec.to_dict(), "frozen": model.frozen,
                                                 **(meta or {})})
    for name in sorted(model.weights):
        container.sections[name] = [model.weights[name].data]
    path = save(container, path)
    logger.info("Saved backbone (%d parameters) to %s", model.num_parameters(), path)
    return path


def load_model(path: Union[str, Path], frozen: Optional[bool] = None) -> BackboneModel:
    container = load(path, expected_kind="backbone")
    spec = BackboneSpec.from_dict(container.meta["spec"])
    weights = {name: tensors[0] for name, tensors in container.sections.items()}
    is_frozen = bool(container.meta.get("frozen", False)) if frozen is None else frozen
    return BackboneModel(spec, weights, frozen=is_frozen)
