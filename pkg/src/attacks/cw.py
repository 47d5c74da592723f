"""
Carlini-Wagner attack restricted to an l_inf budget.

Minimizes ||delta||^2 + c * max(Z_y - max_{j != y} Z_j, -kappa) with Adam
on w, where x_adv = (tanh(w) + 1) / 2. After every step the iterate is
projected onto the epsilon ball and w is reset to match. The successful
iterate with the smallest ||delta||^2 is returned, else the last one.
"""

from typing import Callable, Optional

import numpy as np

from src.attacks.base import (
    AdvBatch,
    AttackConfig,
    finish,
    predictions,
    project,
    require_frozen,
    run_chunked,
    validate_inputs,
)
from src.logger import get_logger
from src.model.optim import Adam
from src.tensor import Tensor, ops, parameter

logger = get_logger(__name__)

TANH_LIMIT = 1.0 - 1e-6


def _to_w(x: np.ndarray) -> np.ndarray:
    return np.arctanh(np.clip(2.0 * x - 1.0, -TANH_LIMIT, TANH_LIMIT))


def cw_objective(model, w: Tensor, x0: np.ndarray, y: np.ndarray, cfg: AttackConfig) -> Tensor:
    n = x0.shape[0]
    adv = ops.scale(ops.add_scalar(ops.tanh(w), 1.0), 0.5)
    logits = model.forward(adv)
    num_classes = logits.shape[1]
    true_mask = np.zeros((n, num_classes))
    true_mask[np.arange(n), y] = 1.0
    # Runner-up class per row, fixed for this step
    others = np.where(true_mask > 0, -np.inf, logits.data)
    other_mask = np.zeros((n, num_classes))
    other_mask[np.arange(n), others.argmax(axis=1)] = 1.0

    z_true = ops.sum_rows(ops.mul(logits, Tensor(true_mask)))
    z_other = ops.sum_rows(ops.mul(logits, Tensor(other_mask)))
    hinge = ops.add_scalar(ops.relu(ops.add_scalar(ops.sub(z_true, z_other), cfg.cw_kappa)), -cfg.cw_kappa)
    delta = ops.reshape(ops.sub(adv, Tensor(x0)), (n, int(np.prod(x0.shape[1:]))))
    distance = ops.sum_rows(ops.square(delta))
    return ops.total(ops.add(distance, ops.scale(hinge, cfg.cw_c)))


def cw_chunk(model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig, offset: int) -> np.ndarray:
    w = parameter(_to_w(x))
    optimizer = Adam([w], lr=cfg.cw_lr)
    current = x.copy()
    best = x.copy()
    best_distance = np.full(x.shape[0], np.inf)
    found = np.zeros(x.shape[0], dtype=bool)

    for step in range(cfg.steps):
        optimizer.zero_grad()
        loss = cw_objective(model, w, x, y, cfg)
        loss.backward()
        optimizer.step()
        current = project((np.tanh(w.data) + 1.0) / 2.0, x, cfg.epsilon)
        w.assign(_to_w(current))

        distance = ((current - x) ** 2).reshape(x.shape[0], -1).sum(axis=1)
        improved = (predictions(model, current) != y) & (distance < best_distance)
        best[improved] = current[improved]
        best_distance[improved] = distance[improved]
        found |= improved
        if step % 50 == 0:
            logger.debug("C&W chunk@%d step %d: objective=%.4f, found=%d", offset, step, loss.item(), int(found.sum()))

    return np.where(found.reshape((-1,) + (1,) * (x.ndim - 1)), best, current)


def cw_linf(model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
            progress_callback: Optional[Callable[[int, int], None]] = None,
            cancel_check: Optional[Callable[[], bool]] = None) -> AdvBatch:
    require_frozen(model)
    x, y = validate_inputs(x, y)
    if cfg.epsilon == 0 or cfg.steps == 0:
        return finish(model, "cw", x, y, x.copy(), cfg)
    adv = run_chunked(lambda xc, yc, start: cw_chunk(model, xc, yc, cfg, start), x, y, cfg,
                      progress_callback, cancel_check)
    return finish(model, "cw", x, y, adv, cfg)
