"""
Layer quality scores and layer-subset selection.

For layer k over a validation set:
    cs_plus  = mean_i CS_k[i, y_i]
    cs_minus = mean_i mean_{j != y_i} CS_k[i, j]
    cs_avg   = (cs_plus - cs_minus) / 2
TCS is the mean cs_avg over layers.
"""

from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.data.dataset import LabeledDataset
from src.exceptions import ContractError, DataError
from src.logger import get_logger
from src.model.backbone import BackboneModel
from src.ucan.auxiliary import AuxBlock

logger = get_logger(__name__)

POLICIES = ("top", "offset")


@dataclass(frozen=True)
class LayerScore:
    k: int
    cs_plus: float
    cs_minus: float
    cs_avg: float

    def to_dict(self) -> dict:
        return asdict(self)


def score_cosines(k: int, cs: np.ndarray, labels: np.ndarray) -> LayerScore:
    """LayerScore from an (n, CL) cosine matrix."""
    cs = np.asarray(cs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = cs.shape
    if n == 0:
        raise DataError("Cannot score a layer on an empty validation set")
    rows = np.arange(n)
    positive = cs[rows, labels]
    negative = (cs.sum(axis=1) - positive) / (num_classes - 1)
    cs_plus, cs_minus = float(positive.mean()), float(negative.mean())
    return LayerScore(k=k, cs_plus=cs_plus, cs_minus=cs_minus, cs_avg=(cs_plus - cs_minus) / 2.0)


def scores_from_taps(blocks: Sequence[AuxBlock], taps: Sequence[np.ndarray],
                     labels: np.ndarray) -> Tuple[List[LayerScore], float]:
    """Scores for precomputed taps; taps[i] feeds blocks[i]."""
    if len(blocks) != len(taps):
        raise ContractError(f"{len(blocks)} aux blocks for {len(taps)} taps")
    scores = [score_cosines(block.layer_index, block.scores(block.embed(tap)), labels)
              for block, tap in zip(blocks, taps)]
    return scores, total_cosine_similarity(scores)


def total_cosine_similarity(scores: Sequence[LayerScore]) -> float:
    if not scores:
        raise ContractError("TCS needs at least one layer score")
    return float(np.mean([s.cs_avg for s in scores]))


def layer_scores(model: BackboneModel, blocks: Sequence[AuxBlock],
                 valset: LabeledDataset) -> Tuple[List[LayerScore], float]:
    valset.require_nonempty("validation set")
    all_taps = model.taps(valset.samples)
    taps = [all_taps[block.layer_index - 1] for block in blocks]
    scores, tcs = scores_from_taps(blocks, taps, valset.labels)
    logger.info("Layer scores: %s; TCS=%.4f",
                ", ".join(f"L{s.k}={s.cs_avg:.4f}" for s in scores), tcs)
    return scores, tcs


def select_layers(scores: Sequence[LayerScore], policy: str = "top", value: int = 1) -> List[int]:
    """top: the `value` best layers by cs_avg (ties to the lower index), best first.
    offset: layers value..N in index order."""
    n = len(scores)
    indices = sorted(s.k for s in scores)
    if policy == "top":
        if not 1 <= value <= n:
            raise ContractError(f"Cannot select top-{value} of {n} layers", details={"S": value, "N": n})
        ranked = sorted(scores, key=lambda s: (-s.cs_avg, s.k))
        return [s.k for s in ranked[:value]]
    if policy == "offset":
        if not 1 <= value <= n:
            raise ContractError(f"Offset {value} outside 1..{n}", details={"s": value, "N": n})
        return indices[value - 1:]
    raise ContractError(f"Unknown selection policy '{policy}'", details={"choices": list(POLICIES)})
