"""
Auxiliary blocks attached to backbone taps.

Each block maps a feature map z_k (C_k, H_k, W_k) to a unit embedding
p~_k (d',) via 1x1 conv -> global average pool -> l2 normalization, and
scores it against CL class centers (rows of W_arc, normalized on use).
"""

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from src.exceptions import ConfigError, ContractError, DimensionError
from src.logger import get_logger
from src.storage import Container, load, save
from src.tensor import Tensor, ops, parameter

logger = get_logger(__name__)


@dataclass(frozen=True)
class ArcFaceConfig:
    num_classes: int
    scale: float = 64.0
    margin: float = 0.5
    d_prime: int = 16

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError(f"ArcFace scale must be positive, got {self.scale}")
        if not 0.0 <= self.margin < math.pi / 2:
            raise ConfigError(f"ArcFace margin must lie in [0, pi/2), got {self.margin}")
        if self.d_prime < 2:
            raise ConfigError(f"Embedding dimension must be at least 2, got {self.d_prime}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be at least 2, got {self.num_classes}")

    def to_dict(self) -> dict:
        return asdict(self)


class AuxBlock:
    """Projection (d' x C_k, bias d') and class centers W_arc (CL x d') for one layer."""

    def __init__(self, layer_index: int, w_proj: np.ndarray, b_proj: np.ndarray, w_arc: np.ndarray,
                 config: ArcFaceConfig):
        w_proj, b_proj, w_arc = (np.asarray(a, dtype=np.float64) for a in (w_proj, b_proj, w_arc))
        if w_proj.ndim != 2 or w_proj.shape[0] != config.d_prime or b_proj.shape != (config.d_prime,):
            raise DimensionError(f"Aux block L{layer_index}: projection {w_proj.shape} / bias {b_proj.shape} "
                                 f"do not match d'={config.d_prime}")
        if w_arc.shape != (config.num_classes, config.d_prime):
            raise DimensionError(f"Aux block L{layer_index}: centers {w_arc.shape}, "
                                 f"expected {(config.num_classes, config.d_prime)}")
        self.layer_index = int(layer_index)
        self.config = config
        self.w_proj = parameter(w_proj)
        self.b_proj = parameter(b_proj)
        self.w_arc = parameter(w_arc)

    @classmethod
    def initialize(cls, layer_index: int, channels: int, config: ArcFaceConfig,
                   rng: np.random.Generator) -> "AuxBlock":
        bound = 1.0 / math.sqrt(channels)
        w_proj = rng.uniform(-bound, bound, (config.d_prime, channels))
        b_proj = rng.uniform(-bound, bound, config.d_prime)
        centers = rng.standard_normal((config.num_classes, config.d_prime))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        return cls(layer_index, w_proj, b_proj, centers, config)

    @property
    def channels(self) -> int:
        return int(self.w_proj.shape[1])

    def parameters(self) -> List[Tensor]:
        return [self.w_proj, self.b_proj, self.w_arc]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state(self) -> dict:
        return {"w_proj": self.w_proj.numpy(), "b_proj": self.b_proj.numpy(), "w_arc": self.w_arc.numpy()}

    def load_state(self, state: dict) -> None:
        self.w_proj.assign(state["w_proj"])
        self.b_proj.assign(state["b_proj"])
        self.w_arc.assign(state["w_arc"])

    def embed(self, taps: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Numpy p~ for a stack of feature maps (n, C_k, H_k, W_k)."""
        if taps.shape[0] == 0:
            return np.zeros((0, self.config.d_prime))
        return np.concatenate([aux_forward(self, Tensor(taps[i:i + batch_size])).numpy()
                               for i in range(0, taps.shape[0], batch_size)])

    def scores(self, embeddings: np.ndarray) -> np.ndarray:
        """Numpy CS for a stack of unit embeddings (n, d')."""
        if embeddings.shape[0] == 0:
            return np.zeros((0, self.config.num_classes))
        return cosine_scores(self, Tensor(embeddings)).numpy()


def aux_forward(block: AuxBlock, z) -> Tensor:
    """p~ = normalize(global_avg_pool(conv1x1(z))); (C,H,W) -> (d',), batches row-wise."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.ndim not in (3, 4) or z.shape[-3] != block.channels:
        raise DimensionError(f"Aux block L{block.layer_index} expects {block.channels} channels, got {z.shape}",
                             details={"layer": block.layer_index, "shape": list(z.shape)})
    return ops.l2_normalize(ops.global_avg_pool(ops.conv1x1(z, block.w_proj, block.b_proj)))


def cosine_scores(block: AuxBlock, p: Tensor) -> Tensor:
    """CS[j] = <normalize(W_arc[j]), p~>; (d',) -> (CL,), (B, d') -> (B, CL)."""
    d_prime = block.config.d_prime
    if p.ndim not in (1, 2) or p.shape[-1] != d_prime:
        raise DimensionError(f"cosine_scores: expected (..., {d_prime}), got {p.shape}")
    centers = ops.l2_normalize(block.w_arc)
    if p.ndim == 1:
        row = ops.matmul(ops.reshape(p, (1, d_prime)), ops.transpose(centers))
        return ops.reshape(row, (block.config.num_classes,))
    return ops.matmul(p, ops.transpose(centers))


def build_aux_blocks(tap_channels: Sequence[int], config: ArcFaceConfig, seed: int = 0) -> List[AuxBlock]:
    """One block per tapped layer, indices 1..N."""
    rng = np.random.default_rng(seed)
    return [AuxBlock.initialize(k, channels, config, rng) for k, channels in enumerate(tap_channels, start=1)]


def aux_parameter_count(blocks: Sequence[AuxBlock]) -> int:
    return int(sum(block.num_parameters() for block in blocks))


# ============================================================
# Persistence
# ============================================================

def save_aux_blocks(blocks: Sequence[AuxBlock], path: Union[str, Path], meta: Optional[dict] = None) -> Path:
    if not blocks:
        raise ContractError("No aux blocks to save")
    configs = {block.config for block in blocks}
    if len(configs) != 1:
        raise ContractError("Aux blocks of one detector must share d' and ArcFace settings")
    container = Container(kind="aux", meta={
        "config": blocks[0].config.to_dict(),
        "layers": [block.layer_index for block in blocks],
        **(meta or {}),
    })
    for block in blocks:
        for name, values in block.state().items():
            container.sections[f"L{block.layer_index}.{name}"] = [values]
    return save(container, path)


def load_aux_blocks(path: Union[str, Path]) -> List[AuxBlock]:
    container = load(path, expected_kind="aux")
    config = ArcFaceConfig(**container.meta["config"])
    blocks = []
    for k in container.meta["layers"]:
        blocks.append(AuxBlock(k, container.tensor(f"L{k}.w_proj"), container.tensor(f"L{k}.b_proj"),
                               container.tensor(f"L{k}.w_arc"), config))
    logger.debug("Loaded %d aux blocks from %s", len(blocks), path)
    return blocks
