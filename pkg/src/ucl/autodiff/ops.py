"""Elementwise, linear-algebra and reduction operations with gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor

__all__ = [
    "DomainError", "add", "sub", "mul", "div", "neg", "exp", "log", "power", "sqrt",
    "relu", "leaky_relu", "clamp_min", "matmul", "transpose", "reshape", "sum", "mean",
    "l2_norm", "log_softmax", "softmax", "cross_entropy", "linear",
]


class DomainError(ValueError):
    pass


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(b, dtype=a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(a, dtype=b.dtype)
    else:
        a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible") from None
    return a, b


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._from_op(a.data + b.data, "add", (a, b),
                           lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._from_op(a.data - b.data, "sub", (a, b),
                           lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._from_op(a.data * b.data, "mul", (a, b),
                           lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    bad = np.flatnonzero(b.data == 0)
    if bad.size:
        raise DomainError(f"division by zero: divisor (operand 1) is 0 at flat index {bad[0]}")
    out = a.data / b.data

    def bw(g):
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)

    return Tensor._from_op(out, "div", (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(-a.data, "neg", (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._from_op(out, "exp", (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    bad = np.flatnonzero(~(a.data > 0))
    if bad.size:
        raise DomainError(f"log of non-positive value {a.data.flat[bad[0]]!r} (operand 0, flat index {bad[0]})")
    return Tensor._from_op(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def power(a, exponent: float) -> Tensor:
    """``a ** exponent`` for a constant scalar exponent."""
    a = as_tensor(a)
    exponent = float(exponent)
    if exponent != int(exponent) and np.any(a.data < 0):
        raise DomainError("fractional power of a negative value (operand 0)")
    if exponent < 0 and np.any(a.data == 0):
        raise DomainError("negative power of zero (operand 0)")
    out = a.data ** exponent
    return Tensor._from_op(out, "power", (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._from_op(np.where(mask, a.data, 0).astype(a.dtype), "relu", (a,), lambda g: (g * mask,))


def leaky_relu(a, negative_slope: float = 0.01) -> Tensor:
    # derivative at exactly 0 is negative_slope
    a = as_tensor(a)
    slope = np.where(a.data > 0, 1.0, negative_slope).astype(a.dtype)
    return Tensor._from_op(a.data * slope, "leaky_relu", (a,), lambda g: (g * slope,))


def clamp_min(a, minimum: float) -> Tensor:
    """``max(a, minimum)``; gradient flows only where ``a > minimum``."""
    a = as_tensor(a)
    mask = a.data > minimum
    out = np.where(mask, a.data, minimum).astype(a.dtype)
    return Tensor._from_op(out, "clamp_min", (a,), lambda g: (g * mask,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return Tensor._from_op(a.data @ b.data, "matmul", (a, b),
                           lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError("transpose expects a 2-d tensor")
    return Tensor._from_op(a.data.T, "transpose", (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return Tensor._from_op(a.data.reshape(shape), "reshape", (a,), lambda g: (g.reshape(src),))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._from_op(out, "sum", (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def l2_norm(a, axis: int = -1, keepdims: bool = True) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at a zero vector is taken as 0."""
    a = as_tensor(a)
    out = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        safe = np.where(out > 0, out, 1)
        return (np.where(out > 0, g * a.data / safe, 0).astype(a.dtype),)

    res = out if keepdims else out.squeeze(axis)
    return Tensor._from_op(res, "l2_norm", (a,), bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def bw(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, "log_softmax", (a,), bw)


def softmax(a, axis: int = -1) -> Tensor:
    return exp(log_softmax(a, axis=axis))


def cross_entropy(logits, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    onehot[np.arange(len(targets)), targets] = 1
    return neg(mean(sum(mul(log_softmax(logits, axis=1), onehot), axis=1)))
