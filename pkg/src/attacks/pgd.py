"""
Projected gradient descent under an l_inf budget.

x <- clip_[0,1](clip_{x0 +- eps}(x + alpha * sign(grad_x CE)))
for exactly ``steps`` iterations, from a seeded uniform start in the ball.
With steps=1, alpha=eps and no random start this is FGSM.
"""

from typing import Callable, Optional

import numpy as np

from src.attacks.base import (
    AdvBatch,
    AttackConfig,
    finish,
    loss_gradient,
    project,
    random_start,
    require_frozen,
    run_chunked,
    validate_inputs,
)
from src.logger import get_logger

logger = get_logger(__name__)


def pgd_chunk(model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig, offset: int) -> np.ndarray:
    adv = random_start(x, cfg.epsilon, cfg.seed, offset) if cfg.random_start else x.copy()
    for step in range(cfg.steps):
        loss, grad = loss_gradient(model, adv, y)
        adv = project(adv + cfg.alpha * np.sign(grad), x, cfg.epsilon)
        if step % 50 == 0:
            logger.debug("PGD chunk@%d step %d: loss=%.4f", offset, step, loss)
    return adv


def pgd(model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
        progress_callback: Optional[Callable[[int, int], None]] = None,
        cancel_check: Optional[Callable[[], bool]] = None) -> AdvBatch:
    require_frozen(model)
    x, y = validate_inputs(x, y)
    if cfg.epsilon == 0 or cfg.steps == 0:
        return finish(model, "pgd", x, y, x.copy(), cfg)
    adv = run_chunked(lambda xc, yc, start: pgd_chunk(model, xc, yc, cfg, start), x, y, cfg,
                      progress_callback, cancel_check)
    return finish(model, "pgd", x, y, adv, cfg)
