"""Dense tensors, trainable parameters and the reverse-mode tape.

Operations in :mod:`sits_tempo.numerics.ops` record themselves on the
innermost active :class:`Tape`. Nothing is recorded when no tape is open,
which is how evaluation runs.
"""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, TapeError

DTYPE = np.float64


class Tensor:
    """An immutable n-dimensional float64 array that may carry a gradient."""

    __slots__ = ("data", "requires_grad", "grad", "is_leaf", "__weakref__")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar, dispatched to ops to keep recording in one place
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)

    def mean(self, axis=None):
        from . import ops
        return ops.mean(self, axis)


class Parameter(Tensor):
    """A named trainable tensor whose gradient accumulates across backward passes."""

    __slots__ = ("name", "trainable")

    def __init__(self, value, name="", trainable=True):
        super().__init__(value, requires_grad=trainable)
        self.name = name
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    @property
    def value(self):
        return self.data

    @value.setter
    def value(self, new):
        new = np.asarray(new, dtype=DTYPE)
        if new.shape != self.data.shape:
            raise DimensionError(f"cannot assign shape {new.shape} to parameter {self.name!r} of shape {self.data.shape}")
        self.data = new

    @property
    def gradient(self):
        return self.grad

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


_TAPES: list["Tape"] = []


def current_tape():
    return _TAPES[-1] if _TAPES else None


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager around a forward pass, then call
    :meth:`backward` exactly once. Nodes are appended as ops execute, so
    every node follows the nodes that produced its inputs.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._outputs: set[int] = set()
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise TapeError("tape already used for a backward pass; call reset() first")
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out: Tensor, inputs, backward_fn):
        if self.consumed:
            raise TapeError("recording on a consumed tape")
        out.is_leaf = False
        self.nodes.append(_Node(out, tuple(inputs), backward_fn))
        self._outputs.add(id(out))

    def reset(self):
        self.nodes.clear()
        self._outputs.clear()
        self.consumed = False

    def backward(self, loss: Tensor):
        backward(loss, self)


def backward(loss: Tensor, tape: Tape):
    """Propagate d(loss)/d(.) to every reachable leaf on ``tape``.

    Parameter gradients accumulate (``+=``) until they are zeroed.
    """
    if tape.consumed:
        raise TapeError("one backward pass per forward pass: tape already consumed")
    if id(loss) not in tape._outputs:
        raise TapeError("backward called on a node that was not recorded on this tape")
    if loss.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape.consumed = True

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for inp, gi in zip(node.inputs, in_grads):
            if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                continue
            if inp.is_leaf:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += gi
            else:
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi


def zero_gradients(params):
    for p in params:
        p.zero_grad()
