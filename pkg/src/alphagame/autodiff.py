"""A small reverse-mode automatic differentiation engine on numpy arrays.

Every differentiable operation appends a node to a :class:`Tape`. A node keeps
its forward function (so the tape can be replayed), the indices of its
parents and a vector-Jacobian product. Operations on plain arrays are not
recorded, which gives an untracked mode for free.

>>> tape = Tape()
>>> w = tape.leaf(3.0)
>>> (gw,) = backward(tape, square(w))
>>> float(gw)
6.0
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass
class Node:
    name: str
    value: np.ndarray
    parents: tuple[int, ...]
    forward: Callable | None
    vjp: Callable | None
    slots: tuple  # positions of tensor args inside the full argument list
    consts: tuple  # the full argument list with tensors replaced by None


class Tape:
    """Append-only record of operations; topologically ordered by construction."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value, name: str = "leaf") -> "Tensor":
        value = np.array(value, dtype=float)
        self.nodes.append(Node(name, value, (), None, None, (), ()))
        return Tensor(self, len(self.nodes) - 1)

    @property
    def leaves(self) -> list[int]:
        return [k for k, n in enumerate(self.nodes) if n.forward is None]

    def record(self, name, forward, vjp, args) -> "Tensor":
        slots, parents = [], []
        consts = []
        for pos, a in enumerate(args):
            if isinstance(a, Tensor):
                if a.tape is not self:
                    raise ValueError("cannot mix tensors from different tapes")
                slots.append(pos)
                parents.append(a.index)
                consts.append(None)
            else:
                consts.append(a)
        vals = [a.value if isinstance(a, Tensor) else a for a in args]
        out = np.asarray(forward(*vals), dtype=float)
        self.nodes.append(Node(name, out, tuple(parents), forward, vjp, tuple(slots), tuple(consts)))
        return Tensor(self, len(self.nodes) - 1)

    def replay(self) -> list[np.ndarray]:
        """Recompute every node's value from the leaves, in tape order."""
        vals: list[np.ndarray] = []
        for node in self.nodes:
            if node.forward is None:
                vals.append(node.value)
                continue
            args = list(node.consts)
            for pos, p in zip(node.slots, node.parents):
                args[pos] = vals[p]
            vals.append(np.asarray(node.forward(*args), dtype=float))
        return vals


class Tensor:
    """Handle to a node on a tape."""

    __array_priority__ = 1000

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(#{self.index} {self.tape.nodes[self.index].name}, shape={self.shape})"

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def value_of(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=float)


def _tape_of(args):
    for a in args:
        if isinstance(a, Tensor):
            return a.tape
    return None


def apply(name: str, forward: Callable, vjp: Callable, *args):
    """Apply ``forward`` to ``args``; record it if any argument is a Tensor.

    ``vjp(g, out, *vals, needs)`` must return one gradient (or None) per
    argument; ``needs[k]`` tells whether argument ``k`` requires one.
    """
    tape = _tape_of(args)
    if tape is None:
        return forward(*[np.asarray(a, dtype=float) for a in args])
    return tape.record(name, forward, vjp, args)


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _shape(v):
    return np.shape(v)


# -- elementary operations ----------------------------------------------------

def add(a, b):
    return apply("add", np.add,
                 lambda g, out, x, y, needs: (unbroadcast(g, _shape(x)) if needs[0] else None,
                                              unbroadcast(g, _shape(y)) if needs[1] else None), a, b)


def sub(a, b):
    return apply("sub", np.subtract,
                 lambda g, out, x, y, needs: (unbroadcast(g, _shape(x)) if needs[0] else None,
                                              unbroadcast(-g, _shape(y)) if needs[1] else None), a, b)


def mul(a, b):
    return apply("mul", np.multiply,
                 lambda g, out, x, y, needs: (unbroadcast(g * y, _shape(x)) if needs[0] else None,
                                              unbroadcast(g * x, _shape(y)) if needs[1] else None), a, b)


def neg(a):
    return apply("neg", np.negative, lambda g, out, x, needs: (-g,), a)


def _matmul_vjp(g, out, x, y, needs):
    gx = gy = None
    if needs[0]:
        gx = g @ np.swapaxes(y, -1, -2) if y.ndim > 1 else np.multiply.outer(g, y)
        gx = unbroadcast(gx, x.shape)
    if needs[1]:
        if x.ndim == 1:
            gy = np.multiply.outer(x, g)
        else:
            gy = np.swapaxes(x, -1, -2) @ g
        gy = unbroadcast(gy, y.shape)
    return gx, gy


def matmul(a, b):
    return apply("matmul", np.matmul, _matmul_vjp, a, b)


def relu(a):
    # subgradient convention: relu'(0) = 0
    return apply("relu", lambda x: np.maximum(x, 0.0),
                 lambda g, out, x, needs: (g * (x > 0.0),), a)


def exp(a):
    return apply("exp", np.exp, lambda g, out, x, needs: (g * out,), a)


def square(a):
    return apply("square", np.square, lambda g, out, x, needs: (2.0 * g * x,), a)


def sum_(a, axis=None):
    def vjp(g, out, x, needs):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)
    return apply("sum", lambda x: np.sum(x, axis=axis), vjp, a)


def mean(a, axis=None):
    n = np.size(value_of(a)) if axis is None else np.shape(value_of(a))[axis]

    def vjp(g, out, x, needs):
        gg = g if axis is None else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, x.shape).copy(),)
    return apply("mean", lambda x: np.sum(x, axis=axis) / n, vjp, a)


def concat(parts: Sequence, axis: int = -1):
    sizes = [np.shape(value_of(p))[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def vjp(g, out, *vals_needs):
        needs = vals_needs[-1]
        pieces = np.split(g, cuts, axis=axis)
        return tuple(p if nd else None for p, nd in zip(pieces, needs))
    return apply("concat", lambda *xs: np.concatenate(xs, axis=axis), vjp, *parts)


def reshape(a, shape):
    return apply("reshape", lambda x: np.reshape(x, shape),
                 lambda g, out, x, needs: (np.reshape(g, x.shape),), a)


def getitem(a, idx):
    def vjp(g, out, x, needs):
        gx = np.zeros_like(x)
        np.add.at(gx, idx, g)
        return (gx,)
    return apply("getitem", lambda x: x[idx], vjp, a)


# -- reverse pass -------------------------------------------------------------

def backward(tape: Tape, output: Tensor, seed=None) -> list[np.ndarray]:
    """Gradients of ``output`` w.r.t. every leaf of ``tape`` in creation order.

    ``output`` must be a scalar node recorded on ``tape`` unless an explicit
    upstream ``seed`` of matching shape is given.
    """
    if not isinstance(output, Tensor) or output.tape is not tape or not 0 <= output.index < len(tape):
        raise ValueError("output is not recorded on this tape")
    nodes = tape.nodes
    if seed is None:
        if nodes[output.index].value.size != 1:
            raise ValueError("backward needs a scalar output (or an explicit seed)")
        seed = np.ones_like(nodes[output.index].value)
    grads: list = [None] * len(nodes)
    grads[output.index] = np.asarray(seed, dtype=float)
    for k in range(output.index, -1, -1):
        g = grads[k]
        node = nodes[k]
        if g is None or node.forward is None:
            continue
        args = list(node.consts)
        for pos, p in zip(node.slots, node.parents):
            args[pos] = nodes[p].value
        needs = tuple(a is None for a in node.consts)
        local = node.vjp(g, node.value, *args, needs)
        for pos, p in zip(node.slots, node.parents):
            gp = local[pos]
            if gp is None:
                continue
            grads[p] = gp if grads[p] is None else grads[p] + gp
    out = []
    for k in tape.leaves:
        out.append(grads[k] if grads[k] is not None else np.zeros_like(nodes[k].value))
    return out
