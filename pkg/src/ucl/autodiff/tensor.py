"""Tensor type and reverse-mode differentiation machinery.

Every differentiable operation creates a :class:`Node` that remembers its
inputs and a closure mapping the output gradient to input gradients.  Nodes
carry a global sequence number, so sorting the ancestors of a loss by that
number yields a topological order; :class:`ComputationRecord` is that ordered
view.  A record may be replayed backward once; afterwards its saved state is
released and a second call raises.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_state = threading.local()
_seq = itertools.count()


def _get(name: str, default):
    return getattr(_state, name, default)


def default_dtype() -> np.dtype:
    return _get("dtype", np.dtype(np.float32))


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _state.dtype = dtype


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default dtype (``float64`` for verification)."""
    old = default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = old


def grad_enabled() -> bool:
    return _get("grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    old = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = old


class BackwardError(RuntimeError):
    pass


class Node:
    __slots__ = ("seq", "inputs", "backward_fn", "consumed", "op")

    def __init__(self, op: str, inputs: Sequence["Tensor"], backward_fn: Callable):
        self.seq = next(_seq)
        self.op = op
        self.inputs = tuple(inputs)
        self.backward_fn = backward_fn
        self.consumed = False

    def __repr__(self) -> str:
        return f"Node({self.op}, seq={self.seq})"


class Tensor:
    """A numpy array that optionally participates in gradient recording."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        dtype = np.dtype(dtype) if dtype is not None else default_dtype()
        arr = np.array(data, dtype=dtype, copy=True)
        if arr.size == 0 and arr.ndim > 0:
            raise ValueError("tensor extents must be positive")
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, op: str, inputs: Sequence["Tensor"], backward_fn: Callable) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        needs = grad_enabled() and any(t.requires_grad for t in inputs)
        out.requires_grad = needs
        out.node = Node(op, inputs, backward_fn) if needs else None
        return out

    # basic properties
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # operator sugar, implemented in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, exponent):
        from . import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    @property
    def T(self) -> "Tensor":
        from . import ops
        return ops.transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def backward(self) -> dict:
        return backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        dtype = default_dtype()
    return Tensor(x, dtype=dtype)


class ComputationRecord:
    """Operations reachable from an output, in topological (execution) order."""

    def __init__(self, nodes: list[Node]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "ComputationRecord":
        if out.node is None:
            raise BackwardError("tensor is not part of a computation record (detached or constant)")
        seen: dict[int, Node] = {}
        stack = [out.node]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen[id(node)] = node
            for t in node.inputs:
                if t.node is not None and id(t.node) not in seen:
                    stack.append(t.node)
        return cls(sorted(seen.values(), key=lambda n: n.seq))

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> dict:
    """Propagate d(loss)/d(leaf) into ``.grad`` of every grad-flagged leaf ancestor.

    Leaf gradients accumulate into any existing ``.grad``.  Returns a mapping
    from each reached leaf tensor to its gradient array.
    """
    if loss.size != 1:
        raise BackwardError(f"backward requires a scalar loss, got shape {loss.shape}")
    record = ComputationRecord.from_output(loss)
    if any(n.consumed for n in record.nodes):
        raise BackwardError("backward already ran through this computation record")

    grads: dict[int, np.ndarray] = {id(loss.node): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(record.nodes):
        g_out = grads.pop(id(node), None)
        if g_out is None:
            continue
        g_ins = node.backward_fn(g_out)
        for t, g in zip(node.inputs, g_ins):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.data.shape:
                raise AssertionError(f"{node.op}: grad shape {g.shape} != input shape {t.data.shape}")
            if t.node is not None:
                key = id(t.node)
                grads[key] = grads[key] + g if key in grads else g
            else:
                leaves[id(t)] = t
                t.grad = g.astype(t.data.dtype, copy=True) if t.grad is None else t.grad + g
        node.consumed = True
        node.backward_fn = _consumed
    return {t: t.grad for t in leaves.values()}


def _consumed(_g):
    raise BackwardError("saved state of this operation was released by a previous backward")
