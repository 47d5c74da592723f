"""
Differentiable primitives.

Every op accepts Tensors, validates shapes (DimensionError on mismatch),
computes its value with numpy and records a gradient rule. Image ops take
a single map (C, H, W) or a batch (B, C, H, W); vector ops take (d,) or (B, d).
No broadcasting beyond what each op documents.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import log_softmax, softmax

from src.exceptions import ClassIndexError, DegenerateVectorError, DimensionError, ContractError
from src.tensor.tensor import Tensor, as_tensor, record

EPS_NORM = 1e-12

Labels = Union[int, Sequence[int], np.ndarray]


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ",
                             details={"op": op, "left": list(a.shape), "right": list(b.shape)})


def _as_batch(op: str, x: Tensor, rank: int) -> Tuple[np.ndarray, bool]:
    """View x as batched (rank + 1 dims); report whether a batch axis was added."""
    if x.ndim == rank:
        return x.data[np.newaxis], True
    if x.ndim == rank + 1:
        return x.data, False
    raise DimensionError(f"{op}: expected {rank} or {rank + 1} dims, got shape {x.shape}",
                         details={"op": op, "shape": list(x.shape)})


# ============================================================
# Elementwise and structural ops
# ============================================================

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return record("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return record("mul", a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data))


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return record("scale", x.data * factor, (x,), lambda g: (g * factor,))


def add_scalar(x: Tensor, value: float) -> Tensor:
    return record("add_scalar", x.data + float(value), (x,), lambda g: (g,))


def square(x: Tensor) -> Tensor:
    x_data = x.data
    return record("square", x_data * x_data, (x,), lambda g: (2.0 * x_data * g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def clamp(x: Tensor, low: float, high: float) -> Tensor:
    if low > high:
        raise ContractError(f"clamp: low {low} above high {high}")
    inside = (x.data >= low) & (x.data <= high)
    return record("clamp", np.clip(x.data, low, high), (x,), lambda g: (g * inside,))


def arccos(x: Tensor) -> Tensor:
    """Elementwise arccos; inputs must sit strictly inside (-1, 1)."""
    if np.any(np.abs(x.data) >= 1.0):
        raise ContractError("arccos: inputs must lie strictly inside (-1, 1); clamp first")
    x_data = x.data
    return record("arccos", np.arccos(x_data), (x,),
                  lambda g: (-g / np.sqrt(1.0 - x_data * x_data),))


def cos(x: Tensor) -> Tensor:
    x_data = x.data
    return record("cos", np.cos(x_data), (x,), lambda g: (-g * np.sin(x_data),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return record("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    original = x.shape
    return record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(original),))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {x.shape}")
    return record("transpose", x.data.T, (x,), lambda g: (g.T,))


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    shape = x.shape
    return record("sum", np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def sum_rows(x: Tensor) -> Tensor:
    """Row sums of a (B, n) matrix -> (B,)."""
    if x.ndim != 2:
        raise DimensionError(f"sum_rows: expected a matrix, got shape {x.shape}")
    n = x.shape[1]
    return record("sum_rows", x.data.sum(axis=1), (x,),
                  lambda g: (np.repeat(g[:, np.newaxis], n, axis=1),))


def mean(x: Tensor) -> Tensor:
    """Mean of all elements as a scalar tensor."""
    count = x.size
    if count == 0:
        raise ContractError("mean of an empty tensor")
    return scale(total(x), 1.0 / count)


def stack_mean(items: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of scalar tensors."""
    if not items:
        raise ContractError("stack_mean needs at least one tensor")
    for item in items:
        if item.size != 1:
            raise DimensionError(f"stack_mean: expected scalars, got shape {item.shape}")
    count = len(items)
    value = np.array(sum(float(t.data.reshape(-1)[0]) for t in items) / count)
    shapes = [t.shape for t in items]
    return record("stack_mean", value, tuple(items),
                  lambda g: tuple(np.full(s, float(g) / count) for s in shapes))


# ============================================================
# Linear maps
# ============================================================

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul: expected matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions {a.shape[1]} and {b.shape[0]} differ",
                             details={"left": list(a.shape), "right": list(b.shape)})
    a_data, b_data = a.data, b.data
    return record("matmul", a_data @ b_data, (a, b),
                  lambda g: (g @ b_data.T, a_data.T @ g))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """x of shape (n,) or (B, n) plus bias (n,)."""
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0] or x.ndim not in (1, 2):
        raise DimensionError(f"add_bias: cannot add bias {bias.shape} to {x.shape}")
    batched = x.ndim == 2
    return record("add_bias", x.data + bias.data, (x, bias),
                  lambda g: (g, g.sum(axis=0) if batched else g))


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine layer: x (B, n_in) times weight (n_in, n_out) plus bias."""
    return add_bias(matmul(x, weight), bias)


def conv1x1(z: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Per-pixel channel map: z (C,H,W) or (B,C,H,W), weight (d', C), bias (d',)."""
    batch, squeezed = _as_batch("conv1x1", z, 3)
    if weight.ndim != 2 or bias.ndim != 1 or bias.shape[0] != weight.shape[0]:
        raise DimensionError(f"conv1x1: bad weight {weight.shape} / bias {bias.shape}")
    if weight.shape[1] != batch.shape[1]:
        raise DimensionError(f"conv1x1: {batch.shape[1]} input channels, weight expects {weight.shape[1]}",
                             details={"channels": batch.shape[1], "expected": weight.shape[1]})
    w = weight.data
    out = np.einsum("dc,bchw->bdhw", w, batch) + bias.data[np.newaxis, :, np.newaxis, np.newaxis]

    def backward_fn(g):
        g4 = g[np.newaxis] if squeezed else g
        dz = np.einsum("dc,bdhw->bchw", w, g4)
        dw = np.einsum("bdhw,bchw->dc", g4, batch)
        db = g4.sum(axis=(0, 2, 3))
        return (dz[0] if squeezed else dz), dw, db

    return record("conv1x1", out[0] if squeezed else out, (z, weight, bias), backward_fn)


def conv3x3(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Same-padded 3x3 convolution: weight (C_out, C_in, 3, 3), bias (C_out,)."""
    batch, squeezed = _as_batch("conv3x3", x, 3)
    if weight.ndim != 4 or weight.shape[2:] != (3, 3) or bias.shape != (weight.shape[0],):
        raise DimensionError(f"conv3x3: bad weight {weight.shape} / bias {bias.shape}")
    if weight.shape[1] != batch.shape[1]:
        raise DimensionError(f"conv3x3: {batch.shape[1]} input channels, weight expects {weight.shape[1]}")
    b, c_in, h, w_ = batch.shape
    c_out = weight.shape[0]
    padded = np.pad(batch, ((0, 0), (0, 0), (1, 1), (1, 1)))
    # (B, C, H, W, 3, 3) -> (B*H*W, C*9)
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w_, c_in * 9)
    kernel = weight.data.reshape(c_out, c_in * 9)
    out = (cols @ kernel.T).reshape(b, h, w_, c_out).transpose(0, 3, 1, 2) + bias.data[:, None, None]

    def backward_fn(g):
        g4 = g[np.newaxis] if squeezed else g
        g_rows = g4.transpose(0, 2, 3, 1).reshape(b * h * w_, c_out)
        dw = (g_rows.T @ cols).reshape(weight.shape)
        db = g4.sum(axis=(0, 2, 3))
        dcols = (g_rows @ kernel).reshape(b, h, w_, c_in, 3, 3)
        dpadded = np.zeros_like(padded)
        for i in range(3):
            for j in range(3):
                dpadded[:, :, i:i + h, j:j + w_] += dcols[..., i, j].transpose(0, 3, 1, 2)
        dx = dpadded[:, :, 1:-1, 1:-1]
        return (dx[0] if squeezed else dx), dw, db

    return record("conv3x3", out[0] if squeezed else out, (x, weight, bias), backward_fn)


# ============================================================
# Pooling
# ============================================================

def avg_pool2x2(x: Tensor) -> Tensor:
    """2x2 mean downsampling; odd trailing rows/columns are dropped."""
    batch, squeezed = _as_batch("avg_pool2x2", x, 3)
    b, c, h, w = batch.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        raise DimensionError(f"avg_pool2x2: map {h}x{w} too small")
    blocks = batch[:, :, :2 * h2, :2 * w2].reshape(b, c, h2, 2, w2, 2)
    out = blocks.mean(axis=(3, 5))

    def backward_fn(g):
        g4 = g[np.newaxis] if squeezed else g
        dx = np.zeros((b, c, h, w))
        spread = np.repeat(np.repeat(g4, 2, axis=2), 2, axis=3) / 4.0
        dx[:, :, :2 * h2, :2 * w2] = spread
        return (dx[0] if squeezed else dx,)

    return record("avg_pool2x2", out[0] if squeezed else out, (x,), backward_fn)


def max_pool2x2(x: Tensor) -> Tensor:
    """2x2 max downsampling; gradient routed to the first maximal element."""
    batch, squeezed = _as_batch("max_pool2x2", x, 3)
    b, c, h, w = batch.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        raise DimensionError(f"max_pool2x2: map {h}x{w} too small")
    blocks = batch[:, :, :2 * h2, :2 * w2].reshape(b, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(b, c, h2, w2, 4)
    winner = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, winner[..., np.newaxis], axis=-1)[..., 0]

    def backward_fn(g):
        g4 = g[np.newaxis] if squeezed else g
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, winner[..., np.newaxis], g4[..., np.newaxis], axis=-1)
        dblocks = dflat.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * h2, 2 * w2)
        dx = np.zeros((b, c, h, w))
        dx[:, :, :2 * h2, :2 * w2] = dblocks
        return (dx[0] if squeezed else dx,)

    return record("max_pool2x2", out[0] if squeezed else out, (x,), backward_fn)


def global_avg_pool(z: Tensor) -> Tensor:
    """Spatial mean per channel: (C,H,W) -> (C,), (B,C,H,W) -> (B,C)."""
    batch, squeezed = _as_batch("global_avg_pool", z, 3)
    b, c, h, w = batch.shape
    if h < 1 or w < 1:
        raise DimensionError("global_avg_pool: empty spatial map")
    out = batch.mean(axis=(2, 3))

    def backward_fn(g):
        g2 = g[np.newaxis] if squeezed else g
        dz = np.broadcast_to(g2[:, :, None, None] / (h * w), (b, c, h, w)).copy()
        return (dz[0] if squeezed else dz,)

    return record("global_avg_pool", out[0] if squeezed else out, (z,), backward_fn)


# ============================================================
# Normalization and losses
# ============================================================

def l2_normalize(p: Tensor) -> Tensor:
    """Scale (d,) or each row of (B, d) to unit Euclidean norm."""
    if p.ndim not in (1, 2):
        raise DimensionError(f"l2_normalize: expected (d,) or (B, d), got {p.shape}")
    norms = np.linalg.norm(p.data, axis=-1, keepdims=True)
    if np.any(norms < EPS_NORM):
        raise DegenerateVectorError("Cannot normalize a vector with norm below 1e-12",
                                    details={"min_norm": float(norms.min())})
    unit = p.data / norms

    def backward_fn(g):
        # (I - u u^T) g / |p|
        radial = np.sum(g * unit, axis=-1, keepdims=True)
        return ((g - unit * radial) / norms,)

    return record("l2_normalize", unit, (p,), backward_fn)


def _check_labels(labels: np.ndarray, num_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ClassIndexError(f"Class index out of range [0, {num_classes})",
                              details={"labels": labels.tolist()[:10], "num_classes": num_classes})


def softmax_xent(logits: Tensor, y: Labels) -> Tensor:
    """-log softmax(logits)[y]; a batch (B, CL) averages over rows."""
    if logits.ndim == 1:
        labels = np.asarray([y], dtype=np.int64).reshape(1)
        batch = logits.data[np.newaxis]
        squeezed = True
    elif logits.ndim == 2:
        labels = np.asarray(y, dtype=np.int64).reshape(-1)
        batch = logits.data
        squeezed = False
        if labels.shape[0] != batch.shape[0]:
            raise DimensionError(f"softmax_xent: {labels.shape[0]} labels for {batch.shape[0]} rows")
    else:
        raise DimensionError(f"softmax_xent: expected (CL,) or (B, CL), got {logits.shape}")
    n, num_classes = batch.shape
    _check_labels(labels, num_classes)
    rows = np.arange(n)
    log_probs = log_softmax(batch, axis=1)
    loss = -log_probs[rows, labels].mean()

    def backward_fn(g):
        grad = softmax(batch, axis=1)
        grad[rows, labels] -= 1.0
        grad = grad * (float(g) / n)
        return (grad[0] if squeezed else grad,)

    return record("softmax_xent", np.array(loss), (logits,), backward_fn)
