"""
Dense tensor with reverse-mode differentiation.

- Tensor: float64 array plus an optional gradient buffer
- Node: record of the operation that produced a tensor
- Graph: topologically ordered view of the nodes behind a root
- backward(): chain rule from a scalar root into every requires_grad leaf

Tensors are immutable apart from ``grad``. Gradients accumulate; callers
reset them with ``zero_grad`` between steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import ContractError, NonFiniteError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class Node:
    """One recorded operation: its name, inputs and gradient rule."""

    op: str
    inputs: Tuple["Tensor", ...]
    backward_fn: BackwardFn
    saved: Dict[str, np.ndarray] = field(default_factory=dict)


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, node: Optional[Node] = None):
        array = np.array(data, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(array)):
            op = node.op if node is not None else "tensor"
            raise NonFiniteError(f"Non-finite values produced by '{op}'", details={"op": op})
        array.setflags(write=False)
        self.data = array
        self.node = node
        # Results of recorded ops need grad whenever any input does
        self.requires_grad = bool(requires_grad) or (
            node is not None and any(t.requires_grad for t in node.inputs)
        )
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return np.array(self.data, copy=True)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    def assign(self, values: np.ndarray) -> None:
        """Replace the values of a leaf (optimizer updates); shape must not change."""
        if self.node is not None:
            raise ContractError("Only leaf tensors can be assigned")
        array = np.array(values, dtype=np.float64, copy=True)
        if array.shape != self.data.shape:
            raise ContractError(f"assign: shape {array.shape} does not match {self.data.shape}")
        if not np.all(np.isfinite(array)):
            raise NonFiniteError("Non-finite values assigned to a tensor")
        array.setflags(write=False)
        self.data = array

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + grad

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def parameter(data) -> Tensor:
    """Leaf tensor that collects gradients."""
    leaf = Tensor(data, requires_grad=True)
    leaf.zero_grad()
    return leaf


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def record(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn,
           **saved: np.ndarray) -> Tensor:
    """Wrap an op result; only keep the graph edge when some input needs gradients."""
    inputs = tuple(inputs)
    if any(t.requires_grad for t in inputs):
        return Tensor(data, node=Node(op, inputs, backward_fn, dict(saved)))
    return Tensor(data)


class Graph:
    """Operation records reachable from a root, in topological order (inputs first)."""

    def __init__(self, tensors: List[Tensor]):
        self.tensors = tensors

    @property
    def nodes(self) -> List[Node]:
        return [t.node for t in self.tensors if t.node is not None]

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        order: List[Tensor] = []
        visited = set()
        # Iterative DFS; post-order gives inputs before consumers
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor.node is not None:
                for parent in reversed(tensor.node.inputs):
                    if id(parent) not in visited and parent.requires_grad:
                        stack.append((parent, False))
        return cls(order)


def backward(root: Tensor) -> None:
    """Fill ``grad`` of every requires_grad leaf reachable from a scalar root."""
    if root.data.size != 1:
        raise ContractError(f"backward() needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return

    graph = Graph.from_root(root)
    grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for tensor in reversed(graph.tensors):
        grad = grads.pop(id(tensor), None)
        if grad is None:
            continue
        if tensor.node is None:
            tensor.accumulate(grad)
            continue
        input_grads = tensor.node.backward_fn(grad)
        for parent, parent_grad in zip(tensor.node.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = np.asarray(parent_grad, dtype=np.float64)
