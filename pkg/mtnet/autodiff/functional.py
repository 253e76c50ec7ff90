"""
Differentiable primitives.

Every function takes `Tensor` operands, computes its result with numpy and, when
recording is enabled and an operand requires gradients, attaches a `Record` whose
backward rule maps the output gradient to operand gradients. All primitives
broadcast over leading batch axes.
"""
import time
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.errors import IdOutOfRangeError, ShapeError
from .tensor import Record, Tensor, is_grad_enabled

Operand = Union[Tensor, np.ndarray, float, int]

MASK_VALUE = -1.0e30
LAYER_NORM_EPS = 1.0e-5


def as_tensor(value: Operand, like: Optional[Tensor] = None) -> Tensor:
    """Wraps constants into non-differentiable tensors of `like`'s dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, requires_grad=False, dtype=dtype)


def _result(
    op: str,
    data: np.ndarray,
    inputs: Tuple[Tensor, ...],
    backward: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]],
    start: float,
) -> Tensor:
    """"""
    out = Tensor(data, dtype=data.dtype, copy=False)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._record = Record(
            op=op,
            inputs=inputs,
            output=out,
            backward=backward,
            forward_time=time.perf_counter() - start,
        )
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sums `grad` over the axes that broadcasting added or stretched."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    """"""
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def _swap(x: np.ndarray) -> np.ndarray:
    """"""
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    """
    Matrix product `a @ b` (or `a @ b^T` when `transpose_b`), batched over leading
    axes.

    Args:
        a (Tensor):
            left operand, shape (..., M, K) or (K,)
        b (Tensor):
            right operand, shape (..., K, N), or (..., N, K) when `transpose_b`
        transpose_b (bool):
            whether to use the transpose of the last two axes of `b`
    Returns:
        Tensor: product of shape (..., M, N)
    """
    start = time.perf_counter()
    a, b = as_tensor(a), as_tensor(b, like=a)
    if b.ndim < 2 or a.ndim < 1:
        raise ShapeError("matmul", a.shape, b.shape)
    inner = b.shape[-1] if transpose_b else b.shape[-2]
    if a.shape[-1] != inner:
        raise ShapeError("matmul", a.shape, b.shape)

    b_data = _swap(b.data) if transpose_b else b.data
    try:
        data = np.matmul(a.data, b_data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def _backward(grad):
        a_data = a.data[None, :] if a.ndim == 1 else a.data
        g = grad[..., None, :] if a.ndim == 1 else grad
        grad_a = grad_b = None
        if a.requires_grad:
            grad_a = np.matmul(g, _swap(b_data))
            grad_a = _unbroadcast(grad_a, a_data.shape).reshape(a.shape)
        if b.requires_grad:
            grad_b = np.matmul(_swap(a_data), g)
            if transpose_b:
                grad_b = _swap(grad_b)
            grad_b = _unbroadcast(grad_b, b.shape)
        return grad_a, grad_b

    return _result("matmul", data, (a, b), _backward, start)


def add(a: Operand, b: Operand) -> Tensor:
    """Elementwise sum with broadcasting."""
    start = time.perf_counter()
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _broadcast_shape("add", a, b)

    def _backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _result("add", a.data + b.data, (a, b), _backward, start)


def sub(a: Operand, b: Operand) -> Tensor:
    """Elementwise difference, expressed as `a + (-1) * b`."""
    b = as_tensor(b)
    return add(a, scale(b, -1.0))


def mul(a: Operand, b: Operand) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    start = time.perf_counter()
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _broadcast_shape("mul", a, b)

    def _backward(grad):
        grad_a = _unbroadcast(grad * b.data, a.shape) if a.requires_grad else None
        grad_b = _unbroadcast(grad * a.data, b.shape) if b.requires_grad else None
        return grad_a, grad_b

    return _result("mul", a.data * b.data, (a, b), _backward, start)


hadamard = mul


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiplies every entry by a python scalar."""
    start = time.perf_counter()

    def _backward(grad):
        return (grad * factor,)

    return _result("scale", x.data * factor, (x,), _backward, start)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """
    Concatenates tensors along their last axis.

    Args:
        tensors (Sequence[Tensor]):
            tensors sharing every axis but the last one
        axis (int):
            must designate the last axis
    Returns:
        Tensor: concatenated tensor
    """
    start = time.perf_counter()
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat", (), ())
    first = tensors[0]
    if axis not in (-1, first.ndim - 1):
        raise ValueError("concat only supports the last axis")
    for other in tensors[1:]:
        if other.shape[:-1] != first.shape[:-1]:
            raise ShapeError("concat", first.shape, other.shape)

    sizes = [t.shape[-1] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _backward(grad):
        return tuple(
            grad[..., offsets[i] : offsets[i + 1]] for i in range(len(tensors))
        )

    data = np.concatenate([t.data for t in tensors], axis=-1)
    return _result("concat", data, tensors, _backward, start)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Returns a view of `x` with another shape; no arithmetic involved."""
    start = time.perf_counter()
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None

    def _backward(grad):
        return (grad.reshape(x.shape),)

    return _result("reshape", data, (x,), _backward, start)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along `axis`, computed with max subtraction."""
    start = time.perf_counter()
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    data = exps / exps.sum(axis=axis, keepdims=True)

    def _backward(grad):
        return (data * (grad - (grad * data).sum(axis=axis, keepdims=True)),)

    return _result("softmax", data, (x,), _backward, start)


def layer_norm(
    x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS
) -> Tensor:
    """
    Normalizes the last axis to zero mean and unit variance, then applies a learned
    gain and bias.

    Args:
        x (Tensor):
            input of shape (..., D)
        gain (Tensor):
            gain of shape (D,)
        bias (Tensor):
            bias of shape (D,)
        eps (float):
            added to the variance
    Returns:
        Tensor: normalized tensor of shape (..., D)
    """
    start = time.perf_counter()
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError("layer_norm", x.shape, gain.shape)
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    data = normed * gain.data + bias.data
    width = x.shape[-1]

    def _backward(grad):
        grad_normed = grad * gain.data
        grad_x = (
            inv_std
            / width
            * (
                width * grad_normed
                - grad_normed.sum(axis=-1, keepdims=True)
                - normed * (grad_normed * normed).sum(axis=-1, keepdims=True)
            )
        )
        grad_gain = _unbroadcast(grad * normed, gain.shape)
        grad_bias = _unbroadcast(grad, bias.shape)
        return grad_x, grad_gain, grad_bias

    return _result("layer_norm", data, (x, gain, bias), _backward, start)


def sigmoid(x: Tensor) -> Tensor:
    """"""
    start = time.perf_counter()
    data = np.empty_like(x.data)
    positive = x.data >= 0
    data[positive] = 1.0 / (1.0 + np.exp(-x.data[positive]))
    exp_neg = np.exp(x.data[~positive])
    data[~positive] = exp_neg / (1.0 + exp_neg)

    def _backward(grad):
        return (grad * data * (1.0 - data),)

    return _result("sigmoid", data, (x,), _backward, start)


def tanh(x: Tensor) -> Tensor:
    """"""
    start = time.perf_counter()
    data = np.tanh(x.data)

    def _backward(grad):
        return (grad * (1.0 - data**2),)

    return _result("tanh", data, (x,), _backward, start)


def relu(x: Tensor) -> Tensor:
    """"""
    start = time.perf_counter()
    data = np.maximum(x.data, 0.0)

    def _backward(grad):
        return (grad * (x.data > 0),)

    return _result("relu", data, (x,), _backward, start)


def exp(x: Tensor) -> Tensor:
    """"""
    start = time.perf_counter()
    data = np.exp(x.data)

    def _backward(grad):
        return (grad * data,)

    return _result("exp", data, (x,), _backward, start)


def log(x: Tensor) -> Tensor:
    """Natural logarithm; inputs must be positive."""
    start = time.perf_counter()
    data = np.log(x.data)

    def _backward(grad):
        return (grad / x.data,)

    return _result("log", data, (x,), _backward, start)


def gather(table: Tensor, indices: np.ndarray) -> Tensor:
    """
    Embedding-row gather: `out[...] = table[indices[...]]`.

    Negative indices select an all-zero row, which is how padded positions are
    materialized.

    Args:
        table (Tensor):
            table of shape (V, ...)
        indices (np.ndarray):
            integer array of any shape with values in [-inf, V)
    Returns:
        Tensor: tensor of shape indices.shape + table.shape[1:]
    """
    start = time.perf_counter()
    indices = np.asarray(indices, dtype=np.int64)
    size = table.shape[0]
    if indices.size and indices.max() >= size:
        raise IdOutOfRangeError(table.name or "gather", int(indices.max()), size)
    valid = indices >= 0
    safe = np.where(valid, indices, 0)
    data = table.data[safe]
    if not valid.all():
        data[~valid] = 0.0

    def _backward(grad):
        grad_table = np.zeros_like(table.data)
        np.add.at(grad_table, safe[valid], grad[valid])
        return (grad_table,)

    return _result("gather", data, (table,), _backward, start)


def masked_fill(x: Tensor, mask: np.ndarray, value: float = MASK_VALUE) -> Tensor:
    """
    Replaces entries where `mask` is True by `value`.

    Args:
        x (Tensor):
            input tensor
        mask (np.ndarray):
            boolean array broadcastable to `x`
        value (float):
            fill value
    Returns:
        Tensor: filled tensor, same shape as `x`
    """
    start = time.perf_counter()
    mask = np.asarray(mask, dtype=bool)
    try:
        if np.broadcast_shapes(x.shape, mask.shape) != x.shape:
            raise ValueError
    except ValueError:
        raise ShapeError("masked_fill", x.shape, mask.shape) from None
    data = np.where(mask, np.asarray(value, dtype=x.dtype), x.data)

    def _backward(grad):
        return (np.where(mask, 0.0, grad),)

    return _result("masked_fill", data, (x,), _backward, start)


def dropout(
    x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool
) -> Tensor:
    """
    Inverted dropout: zeroes entries with probability `p` and rescales survivors by
    1 / (1 - p). Identity in eval mode.

    Args:
        x (Tensor):
            input tensor
        p (float):
            drop probability in [0, 1)
        rng (Optional[np.random.Generator]):
            generator drawing the mask, required in train mode
        training (bool):
            whether the model is in train mode
    Returns:
        Tensor: output tensor
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability should be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs a random generator")
    start = time.perf_counter()
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def _backward(grad):
        return (grad * keep,)

    return _result("dropout", x.data * keep, (x,), _backward, start)


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    """"""
    start = time.perf_counter()
    data = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def _backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape).copy(),)

    return _result("sum", data, (x,), _backward, start)


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    """"""
    count = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def cross_entropy(
    logits: Tensor, targets: np.ndarray, reduction: str = "mean"
) -> Tensor:
    """
    Cross-entropy between softmax(logits) and integer targets.

    Args:
        logits (Tensor):
            unnormalized scores of shape (B, K)
        targets (np.ndarray):
            integer class ids of shape (B,)
        reduction (str):
            "mean" for the batch average, "sum", or "none" for per-row losses
    Returns:
        Tensor: scalar loss, or per-row losses of shape (B,)
    """
    start = time.perf_counter()
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy", logits.shape, targets.shape)
    n_classes = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
        bad = int(targets.max() if targets.max() >= n_classes else targets.min())
        raise IdOutOfRangeError("target", bad, n_classes)

    rows = np.arange(logits.shape[0])
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    losses = -log_probs[rows, targets]

    if reduction == "mean":
        data = np.asarray(losses.mean())
    elif reduction == "sum":
        data = np.asarray(losses.sum())
    elif reduction == "none":
        data = losses
    else:
        raise ValueError(f"unknown reduction '{reduction}'")

    def _backward(grad):
        probs = np.exp(log_probs)
        probs[rows, targets] -= 1.0
        if reduction == "mean":
            return (probs * (grad / logits.shape[0]),)
        if reduction == "sum":
            return (probs * grad,)
        return (probs * grad[:, None],)

    return _result("cross_entropy", data, (logits,), _backward, start)
