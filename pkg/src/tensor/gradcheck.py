"""
Central finite-difference checks for the autodiff engine.

``check_gradients`` perturbs every input element by +-h, compares the
numeric slope of a scalar function with the analytic gradient, and returns
the worst normwise relative error across inputs.
"""

from typing import Callable, Dict, Sequence

import numpy as np

from src.tensor.tensor import Tensor, backward, parameter

DEFAULT_STEP = 1e-5


def numerical_gradient(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], index: int,
                       h: float = DEFAULT_STEP) -> np.ndarray:
    """d fn / d arrays[index] by central differences; inputs are passed as constant Tensors."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn(*[Tensor(a) for a in base]).item()
        flat[i] = original - h
        minus = fn(*[Tensor(a) for a in base]).item()
        flat[i] = original
        flat_grad[i] = (plus - minus) / (2.0 * h)
    return grad


def analytic_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray]) -> list:
    leaves = [parameter(a) for a in arrays]
    out = fn(*leaves)
    backward(out)
    return [leaf.grad for leaf in leaves]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| over max(max |a|, max |n|, floor)."""
    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def check_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray],
                    h: float = DEFAULT_STEP) -> Dict[str, float]:
    """Worst relative error per input position plus the overall maximum."""
    analytic = analytic_gradients(fn, arrays)
    report: Dict[str, float] = {}
    for index, grad in enumerate(analytic):
        numeric = numerical_gradient(fn, arrays, index, h)
        report[f"input_{index}"] = relative_error(grad, numeric)
    report["max"] = max(report.values()) if report else 0.0
    return report
