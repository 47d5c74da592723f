"""
Embedding sources: where a detector's per-layer features come from.

- RawTapSource: the backbone's own taps (flattened, or channel means when pooled)
- UcanSource: refined aux-block outputs, p~ ("embedding") or CS ("scores")

Both build features from the same tapped forward pass and stay
differentiable, so adaptive attacks can target either. Swapping one for the
other never changes detector code.
"""

from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import ContractError, ResolutionError
from src.tensor import Tensor, ops
from src.ucan.auxiliary import AuxBlock, aux_forward, cosine_scores

UCAN_OUTPUTS = ("embedding", "scores")


class EmbeddingSource(ABC):
    name = "source"

    def __init__(self, layers: Sequence[int]):
        if not layers:
            raise ContractError("An embedding source needs at least one layer")
        self.layers = [int(k) for k in layers]

    @abstractmethod
    def from_taps(self, taps: Sequence[Tensor]) -> List[Tensor]:
        """Batched (B, D_s) features for each selected layer, given all N batched taps."""

    def describe(self) -> Dict:
        return {"name": self.name, "layers": list(self.layers)}

    def _tap(self, taps: Sequence[Tensor], k: int) -> Tensor:
        if not 1 <= k <= len(taps):
            raise ContractError(f"Layer L{k} is not tapped (backbone has {len(taps)} taps)")
        tap = taps[k - 1]
        if tap.ndim != 4:
            raise ContractError(f"Embedding sources work on batched taps, got {tap.shape}")
        return tap

    def features(self, model, x: Tensor) -> Tuple[Tensor, List[Tensor]]:
        logits, taps = model.forward_with_taps(x)
        return logits, self.from_taps(taps)

    def extract(self, model, samples: np.ndarray, batch_size: int = 256) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Numpy logits and per-layer features for many samples."""
        samples = np.asarray(samples, dtype=np.float64)
        logits, per_layer = [], [[] for _ in self.layers]
        for start in range(0, samples.shape[0], batch_size):
            chunk_logits, feats = self.features(model, Tensor(samples[start:start + batch_size]))
            logits.append(chunk_logits.numpy())
            for i, f in enumerate(feats):
                per_layer[i].append(f.numpy())
        if not logits:
            raise ContractError("No samples to embed")
        return np.concatenate(logits), [np.concatenate(parts) for parts in per_layer]


class RawTapSource(EmbeddingSource):
    name = "raw"

    def __init__(self, layers: Sequence[int], pooled: bool = False):
        super().__init__(layers)
        self.pooled = bool(pooled)

    def from_taps(self, taps: Sequence[Tensor]) -> List[Tensor]:
        feats = []
        for k in self.layers:
            tap = self._tap(taps, k)
            if self.pooled:
                feats.append(ops.global_avg_pool(tap))
            else:
                feats.append(ops.reshape(tap, (tap.shape[0], int(np.prod(tap.shape[1:])))))
        return feats

    def describe(self) -> Dict:
        return {**super().describe(), "pooled": self.pooled}


class UcanSource(EmbeddingSource):
    name = "ucan"

    def __init__(self, blocks: Sequence[AuxBlock], layers: Sequence[int], output: str = "embedding"):
        super().__init__(layers)
        if output not in UCAN_OUTPUTS:
            raise ContractError(f"Unknown aux output '{output}'", details={"choices": list(UCAN_OUTPUTS)})
        by_layer = {block.layer_index: block for block in blocks}
        missing = [k for k in self.layers if k not in by_layer]
        if missing:
            raise ContractError(f"No aux block for selected layers {missing}")
        self.blocks = [by_layer[k] for k in self.layers]
        self.output = output

    def from_taps(self, taps: Sequence[Tensor]) -> List[Tensor]:
        feats = []
        for k, block in zip(self.layers, self.blocks):
            p = aux_forward(block, self._tap(taps, k))
            feats.append(cosine_scores(block, p) if self.output == "scores" else p)
        return feats

    def describe(self) -> Dict:
        return {**super().describe(), "output": self.output}


def source_from_description(description: Dict, blocks: Optional[Sequence[AuxBlock]] = None) -> EmbeddingSource:
    name = description.get("name")
    if name == "raw":
        return RawTapSource(description["layers"], pooled=bool(description.get("pooled", False)))
    if name == "ucan":
        if blocks is None:
            raise ResolutionError("aux blocks")
        return UcanSource(blocks, description["layers"], output=description.get("output", "embedding"))
    raise ContractError(f"Unknown embedding source '{name}'")
