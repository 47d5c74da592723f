"""
Shared attack plumbing.

This module provides:
- AttackConfig: budgets and per-attack settings
- AdvBatch: originals, adversarials, labels and success flags (+ persistence)
- attack_success_rate(): fraction misclassified
- run_chunked(): fixed-size chunks, optional worker threads, results merged in sample order
- project(): l_inf ball then [0, 1] box
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from src.exceptions import CancelledError, ConfigError, ContractError, DataError
from src.logger import get_logger
from src.storage import Container, load, read_json, save, write_json
from src.tensor import ops, parameter

logger = get_logger(__name__)

BUDGET_SLACK = 1e-9

ChunkFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]
ProgressCallback = Callable[[int, int], None]


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 8.0 / 255.0
    steps: int = 200
    step_size: Optional[float] = None  # defaults to epsilon / 8
    random_start: bool = True
    cw_c: float = 0.5
    cw_kappa: float = 0.0
    cw_lr: float = 1e-3
    ada_steps: int = 400
    ada_m: int = 100
    ada_refresh: int = 50
    ada_weight: float = 1.0
    seed: int = 0
    chunk_size: int = 64
    workers: int = 1

    def __post_init__(self):
        if not self.epsilon >= 0 or not math.isfinite(self.epsilon):
            raise ConfigError(f"epsilon must be a finite value >= 0, got {self.epsilon}")
        if self.steps < 0 or self.ada_steps < 0:
            raise ConfigError("Attack step counts must be >= 0")
        if self.step_size is not None and self.step_size <= 0 and self.steps > 0:
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        if self.cw_lr <= 0 or self.cw_c < 0 or self.cw_kappa < 0:
            raise ConfigError("C&W needs lr > 0, c >= 0 and kappa >= 0")
        if self.ada_m < 1 or self.ada_refresh < 1:
            raise ConfigError("ada_m and ada_refresh must be at least 1")
        if self.chunk_size < 1 or self.workers < 1:
            raise ConfigError("chunk_size and workers must be at least 1")

    @property
    def alpha(self) -> float:
        return self.step_size if self.step_size is not None else self.epsilon / 8.0

    def with_epsilon(self, epsilon: float) -> "AttackConfig":
        return replace(self, epsilon=float(epsilon))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdvBatch:
    attack: str
    originals: np.ndarray
    adversarials: np.ndarray
    labels: np.ndarray
    success: np.ndarray
    epsilon: float
    config: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.success = np.asarray(self.success, dtype=bool)
        if self.originals.shape != self.adversarials.shape:
            raise ContractError("Originals and adversarials differ in shape")
        if self.originals.shape[0] != self.labels.shape[0]:
            raise ContractError("One label per sample required")
        check_budget(self.originals, self.adversarials, self.epsilon)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def success_rate(self) -> float:
        return float(self.success.mean()) if len(self) else 0.0

    def sidecar(self) -> dict:
        return {
            "attack": self.attack,
            "epsilon": self.epsilon,
            "config": self.config,
            "seed": self.config.get("seed"),
            "success": self.success.astype(int).tolist(),
            "success_rate": self.success_rate,
            "count": len(self),
        }

    def save(self, path: Union[str, Path]) -> Path:
        container = Container(kind="advbatch", meta={"attack": self.attack, "epsilon": self.epsilon,
                                                     "config": self.config})
        container.sections["originals"] = [self.originals]
        container.sections["adversarials"] = [self.adversarials]
        container.sections["labels"] = [self.labels.astype(np.float64)]
        container.sections["success"] = [self.success.astype(np.float64)]
        path = save(container, path)
        write_json(sidecar_path(path), self.sidecar())
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AdvBatch":
        container = load(path, expected_kind="advbatch")
        originals = container.tensor("originals")
        # f32 storage can nudge values past the budget; re-project onto it
        adversarials = project(container.tensor("adversarials"), originals, float(container.meta["epsilon"]))
        return cls(attack=container.meta["attack"], originals=originals, adversarials=adversarials,
                   labels=np.rint(container.tensor("labels")).astype(np.int64),
                   success=container.tensor("success") > 0.5, epsilon=float(container.meta["epsilon"]),
                   config=container.meta.get("config", {}))


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def read_sidecar(path: Union[str, Path]) -> dict:
    return read_json(sidecar_path(path))


# ============================================================
# Helpers
# ============================================================

def project(adversarials: np.ndarray, originals: np.ndarray, epsilon: float) -> np.ndarray:
    return np.clip(np.clip(adversarials, originals - epsilon, originals + epsilon), 0.0, 1.0)


def check_budget(originals: np.ndarray, adversarials: np.ndarray, epsilon: float) -> None:
    if originals.size == 0:
        return
    worst = float(np.max(np.abs(adversarials - originals)))
    if worst > epsilon + BUDGET_SLACK:
        raise ContractError(f"Perturbation {worst:.3g} exceeds epsilon {epsilon:.3g}")
    if adversarials.min() < 0.0 or adversarials.max() > 1.0:
        raise ContractError("Adversarials leave the [0, 1] box")


def require_frozen(model) -> None:
    if getattr(model, "frozen", True) is False:
        raise ContractError("Attacks run against a frozen model")


def validate_inputs(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ContractError(f"{x.shape[0]} samples but {y.shape[0]} labels")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ContractError("Attack inputs must lie in [0, 1]")
    return x, y


def random_start(x: np.ndarray, epsilon: float, seed: int, offset: int) -> np.ndarray:
    """Uniform start in the epsilon ball; one RNG stream per sample index."""
    noise = np.stack([
        np.random.default_rng([seed, offset + i]).uniform(-epsilon, epsilon, x.shape[1:])
        for i in range(x.shape[0])
    ]) if x.shape[0] else np.zeros_like(x)
    return project(x + noise, x, epsilon)


def loss_gradient(model, x: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """Cross-entropy (batch mean) and its gradient with respect to the input."""
    xt = parameter(x)
    loss = ops.softmax_xent(model.forward(xt), y)
    loss.backward()
    return loss.item(), xt.grad


def predictions(model, x: np.ndarray) -> np.ndarray:
    return model.predict(x) if hasattr(model, "predict") else model.forward(x).numpy().argmax(axis=1)


def run_chunked(fn: ChunkFn, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
                progress_callback: Optional[ProgressCallback] = None,
                cancel_check: Optional[Callable[[], bool]] = None) -> np.ndarray:
    """Apply fn(x_chunk, y_chunk, first_index) per chunk; output in sample order."""
    starts = list(range(0, x.shape[0], cfg.chunk_size))
    results: List[Optional[np.ndarray]] = [None] * len(starts)

    def work(position: int) -> np.ndarray:
        start = starts[position]
        return fn(x[start:start + cfg.chunk_size], y[start:start + cfg.chunk_size], start)

    if cfg.workers == 1 or len(starts) <= 1:
        for position in range(len(starts)):
            if cancel_check and cancel_check():
                raise CancelledError("Attack cancelled", details={"chunks_done": position})
            results[position] = work(position)
            if progress_callback:
                progress_callback(position + 1, len(starts))
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(work, position) for position in range(len(starts))]
            for position, future in enumerate(futures):
                if cancel_check and cancel_check():
                    for pending in futures:
                        pending.cancel()
                    raise CancelledError("Attack cancelled", details={"chunks_done": position})
                results[position] = future.result()
                if progress_callback:
                    progress_callback(position + 1, len(starts))
    if not results:
        return np.zeros_like(x)
    return np.concatenate(results)


def finish(model, attack: str, x: np.ndarray, y: np.ndarray, adversarials: np.ndarray,
           cfg: AttackConfig, extra: Optional[dict] = None) -> AdvBatch:
    adversarials = project(adversarials, x, cfg.epsilon)
    success = predictions(model, adversarials) != y if len(y) else np.zeros(0, dtype=bool)
    config = {**cfg.to_dict(), **(extra or {})}
    batch = AdvBatch(attack=attack, originals=x, adversarials=adversarials, labels=y, success=success,
                     epsilon=cfg.epsilon, config=config)
    logger.info("%s: eps=%.4f, %d samples, success rate %.3f", attack, cfg.epsilon, len(batch), batch.success_rate)
    return batch


def attack_success_rate(model, batch: AdvBatch) -> float:
    if len(batch) == 0:
        raise DataError("Cannot compute the success rate of an empty batch")
    return float(np.mean(predictions(model, batch.adversarials) != batch.labels))
