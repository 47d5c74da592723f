"""
Adaptive attack against a DKNN detector.

Sign-gradient ascent (PGD budget and box) on
    CE(logits, y) - w * mean_layers mean_{r in R_s} ||e_s - r||^2
where R_s are the m nearest train embeddings, at layer s, of the wrong
class closest to the current input (mean neighbour distance over layers).
Targets are fixed between refreshes, every ``ada_refresh`` iterations.
Works through the detector's own embedding source, raw or refined.
"""

from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from src.attacks.base import (
    AdvBatch,
    AttackConfig,
    finish,
    project,
    random_start,
    require_frozen,
    run_chunked,
    validate_inputs,
)
from src.detectors.dknn import DknnDetector
from src.exceptions import ContractError
from src.logger import get_logger
from src.tensor import Tensor, ops, parameter

logger = get_logger(__name__)

Targets = List[Tuple[np.ndarray, np.ndarray]]  # per layer: (mean neighbour (B, D), mean squared norm (B,))


def _neighbour_count(detector: DknnDetector, cfg: AttackConfig) -> int:
    smallest = int(np.bincount(detector.store.train_labels, minlength=detector.num_classes).min())
    if cfg.ada_m > smallest:
        logger.warning("ada_m=%d exceeds the smallest class (%d); using %d", cfg.ada_m, smallest, smallest)
    return min(cfg.ada_m, smallest)


def choose_targets(detector: DknnDetector, features: List[np.ndarray], y: np.ndarray, m: int) -> Targets:
    """Nearest wrong class per sample and the summaries of its m nearest train embeddings per layer."""
    n = y.shape[0]
    candidates = []  # per class: (mean distance over layers (n,), per-layer neighbour indices)
    for c in range(detector.num_classes):
        distances, picks = np.zeros(n), []
        for position, f in enumerate(features):
            reference = detector.class_embeddings(position, c)
            d = cdist(f, reference, metric="sqeuclidean")
            nearest = np.argsort(d, axis=1, kind="stable")[:, :m]
            distances += np.take_along_axis(d, nearest, axis=1).mean(axis=1)
            picks.append(nearest)
        candidates.append((distances / len(features), picks))

    table = np.stack([dist for dist, _ in candidates], axis=1)
    table[np.arange(n), y] = np.inf
    target_class = table.argmin(axis=1)

    targets: Targets = []
    for position in range(len(features)):
        mean_ref = np.zeros_like(features[position])
        mean_sq = np.zeros(n)
        for i in range(n):
            c = target_class[i]
            rows = detector.class_embeddings(position, c)[candidates[c][1][position][i]]
            mean_ref[i] = rows.mean(axis=0)
            mean_sq[i] = (rows ** 2).sum(axis=1).mean()
        targets.append((mean_ref, mean_sq))
    return targets


def ada_objective(model, detector: DknnDetector, xt: Tensor, y: np.ndarray, targets: Targets,
                  weight: float) -> Tensor:
    logits, features = detector.source.features(model, xt)
    ce = ops.softmax_xent(logits, y)
    pulls = []
    for e, (mean_ref, mean_sq) in zip(features, targets):
        # mean_r ||e - r||^2 = ||e||^2 - 2 e.mean(r) + mean ||r||^2
        sq = ops.sum_rows(ops.square(e))
        cross = ops.scale(ops.sum_rows(ops.mul(e, Tensor(mean_ref))), -2.0)
        pulls.append(ops.mean(ops.add(ops.add(sq, cross), Tensor(mean_sq))))
    return ops.sub(ce, ops.scale(ops.stack_mean(pulls), weight))


def ada_chunk(model, detector: DknnDetector, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
              offset: int, m: int) -> np.ndarray:
    adv = random_start(x, cfg.epsilon, cfg.seed, offset) if cfg.random_start else x.copy()
    targets: Targets = []
    for step in range(cfg.ada_steps):
        if step % cfg.ada_refresh == 0:
            _, features = detector.source.extract(model, adv)
            targets = choose_targets(detector, features, y, m)
        xt = parameter(adv)
        objective = ada_objective(model, detector, xt, y, targets, cfg.ada_weight)
        objective.backward()
        adv = project(adv + cfg.alpha * np.sign(xt.grad), x, cfg.epsilon)
        if step % 50 == 0:
            logger.debug("ADA-DKNN chunk@%d step %d: objective=%.4f", offset, step, objective.item())
    return adv


def ada_dknn(model, detector: DknnDetector, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
             progress_callback: Optional[Callable[[int, int], None]] = None,
             cancel_check: Optional[Callable[[], bool]] = None) -> AdvBatch:
    require_frozen(model)
    if detector.source is None:
        raise ContractError("ADA-DKNN needs a detector built over an embedding source")
    if len(detector.store.train_embeddings) != len(detector.source.layers):
        raise ContractError(f"Detector stores {len(detector.store.train_embeddings)} layers but its source "
                            f"selects {detector.source.layers}")
    x, y = validate_inputs(x, y)
    extra = {"detector_source": detector.source.describe()}
    if cfg.epsilon == 0 or cfg.ada_steps == 0:
        return finish(model, "ada_dknn", x, y, x.copy(), cfg, extra)
    m = _neighbour_count(detector, cfg)
    adv = run_chunked(lambda xc, yc, start: ada_chunk(model, detector, xc, yc, cfg, start, m), x, y, cfg,
                      progress_callback, cancel_check)
    return finish(model, "ada_dknn", x, y, adv, cfg, {**extra, "ada_m_used": m})
