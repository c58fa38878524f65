"""Reverse-mode differentiation over numpy arrays.

Every op returns a :class:`Tensor` that remembers its parents and a closure
which, given the output gradient, accumulates into the parents' gradients.
:func:`backward` walks the graph in reverse topological order.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, op="leaf", name=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.add(self, ops.neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        from . import ops
        return ops.add(as_tensor(other, self.dtype), ops.neg(self))

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float64)
    return Tensor(arr)


def make_node(data, parents, backward_fn, op) -> Tensor:
    """Create an op output; it requires grad iff any parent does."""
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, needs, parents if needs else (), backward_fn if needs else None, op)


def _topological(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params=None):
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node.

    Returns a gradient map ``name -> array`` for ``params`` (a mapping of
    name to Tensor) when given; unreachable parameters get zeros.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.requires_grad:
        order = _topological(loss)
        for node in order:
            if node.parents:
                node.grad = None
        loss.grad = np.ones_like(loss.data)
        for node in reversed(order):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)
                # interior gradients are not needed after propagation
                node.grad = None
                node.parents = ()
                node.backward_fn = None
    if params is None:
        return None
    return OrderedDict(
        (name, p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    )


class Graph:
    """Parameter registry for one model.

    Parameters are leaf tensors registered by name; ``backward`` clears their
    gradients, differentiates a scalar loss and returns the gradient map.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()

    def param(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def backward(self, loss: Tensor):
        self.zero_grad()
        return backward(loss, self.params)

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def load_state(self, state, strict=True):
        for name, arr in state.items():
            if name not in self.params:
                if strict:
                    raise KeyError(f"unexpected parameter {name!r}")
                continue
            tgt = self.params[name]
            if tgt.shape != np.shape(arr):
                raise ShapeError(f"{name}: checkpoint shape {np.shape(arr)} != model shape {tgt.shape}")
            tgt.data = np.array(arr, dtype=self.dtype)
        if strict:
            missing = set(self.params) - set(state)
            if missing:
                raise KeyError(f"missing parameters: {sorted(missing)}")

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        for p in self.params.values():
            p.data = p.data.astype(dtype)
        return self

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())
