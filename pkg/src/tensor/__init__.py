"""
Tensor module - minimal dense tensors with reverse-mode autodiff

This module provides:
- Tensor / parameter: float64 arrays with gradient slots
- ops: differentiable primitives (matmul, convolutions, pooling, normalization, losses)
- backward: chain rule from a scalar root
- gradcheck: central finite-difference verification
"""

from src.tensor.tensor import Graph, Node, Tensor, as_tensor, backward, parameter
from src.tensor import ops
from src.tensor.gradcheck import check_gradients, numerical_gradient, relative_error

__all__ = [
    "Graph",
    "Node",
    "Tensor",
    "as_tensor",
    "backward",
    "parameter",
    "ops",
    "check_gradients",
    "numerical_gradient",
    "relative_error",
]
