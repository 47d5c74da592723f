"""
Parameter overhead of the aux blocks and per-batch inference latency.
"""

import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy

from src.exceptions import ConfigError
from src.logger import get_logger

logger = get_logger(__name__)

DEFAULT_BENCH_BATCH = 8
DEFAULT_BENCH_ITERATIONS = 10


@dataclass
class OverheadReport:
    backbone_params: int
    aux_params: int
    percentage: float
    d_prime: int
    num_classes: int
    per_layer: List[Dict[str, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def aux_parameter_counts(channels: Sequence[int], d_prime: int, num_classes: int) -> List[Dict[str, int]]:
    """Per layer: projection C_k*d' + bias d' + ArcFace centers CL*d'."""
    if d_prime < 1:
        raise ConfigError(f"d' must be at least 1, got {d_prime}")
    if num_classes < 1:
        raise ConfigError(f"Class count must be at least 1, got {num_classes}")
    rows = []
    for k, c in enumerate(channels, start=1):
        projection, bias, arcface = c * d_prime, d_prime, num_classes * d_prime
        rows.append({"layer": k, "channels": int(c), "projection": projection, "bias": bias,
                     "arcface": arcface, "total": projection + bias + arcface})
    return rows


def overhead_report(model, blocks: Optional[Sequence[Any]] = None, d_prime: Optional[int] = None) -> OverheadReport:
    if d_prime is None:
        if not blocks:
            raise ConfigError("overhead_report needs aux blocks or an explicit d'")
        d_prime = blocks[0].config.d_prime
    num_classes = model.spec.num_classes
    rows = aux_parameter_counts(model.spec.tap_channels(), d_prime, num_classes)
    aux = int(sum(r["total"] for r in rows))
    backbone = model.num_parameters()
    return OverheadReport(backbone_params=backbone, aux_params=aux, percentage=100.0 * aux / (aux + backbone),
                          d_prime=int(d_prime), num_classes=num_classes, per_layer=rows)


# ============================================================
# Latency
# ============================================================

@dataclass
class LatencyStats:
    name: str
    batch: int
    iterations: int
    mean: float
    std: float
    environment: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def environment_descriptor() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "machine": platform.machine(),
        "system": platform.system(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "threads": "single",
    }


def latency_bench(pipeline: Callable[[np.ndarray], Any], samples: np.ndarray, batch: int = DEFAULT_BENCH_BATCH,
                  iterations: int = DEFAULT_BENCH_ITERATIONS, name: str = "pipeline") -> LatencyStats:
    """Time pipeline(batch of samples); one warm-up call is excluded, std uses ddof=0."""
    if iterations < 1:
        raise ConfigError(f"iterations must be at least 1, got {iterations}")
    if batch < 1:
        raise ConfigError(f"batch must be at least 1, got {batch}")
    inputs = np.asarray(samples)[:batch]
    pipeline(inputs)
    timings = []
    for _ in range(iterations):
        started = time.perf_counter()
        pipeline(inputs)
        timings.append(time.perf_counter() - started)
    stats = LatencyStats(name=name, batch=int(inputs.shape[0]), iterations=iterations,
                         mean=float(np.mean(timings)), std=float(np.std(timings)),
                         environment=environment_descriptor())
    logger.info("Latency %s: %.2f ms +- %.2f ms (batch %d)", name, stats.mean * 1000, stats.std * 1000, stats.batch)
    return stats


def latency_table(model, detectors: Dict[str, Any], samples: np.ndarray, batch: int = DEFAULT_BENCH_BATCH,
                  iterations: int = DEFAULT_BENCH_ITERATIONS) -> List[LatencyStats]:
    """Backbone alone, then each named detector's full scoring pass."""
    table = [latency_bench(lambda x: model.logits(x), samples, batch, iterations, name="backbone")]
    for name, detector in detectors.items():
        table.append(latency_bench(lambda x, d=detector: d.score(model, x), samples, batch, iterations, name=name))
    return table
