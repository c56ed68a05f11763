"""Reverse-mode automatic differentiation on float64 (or float32) arrays.

Every backward rule is expressed with the same graph operations as the forward
pass. With ``create_graph=True`` the gradient computation is therefore recorded
as ordinary nodes and can be differentiated again, which is what the gradient
penalty of a Wasserstein critic needs.

Broadcasting is limited to what the networks need: equal-rank operands where
one side has size-1 axes (row-wise bias, column scaling) and scalars.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NonScalarRoot, UnsupportedOp


_FLOATS = (np.dtype(np.float64), np.dtype(np.float32))


class _Mode:
    record = True
    create_graph = False
    live: set | None = None  # ids of nodes whose gradient the running backward pass needs


@contextmanager
def no_grad():
    prev = _Mode.record
    _Mode.record = False
    try:
        yield
    finally:
        _Mode.record = prev


class Node:
    __slots__ = ("value", "parents", "vjp", "requires_grad", "op")

    def __init__(self, value, parents: tuple = (), vjp: Callable | None = None,
                 op: str = "Leaf", requires_grad: bool = False):
        v = np.asarray(value)
        self.value = v if v.dtype in _FLOATS else v.astype(np.float64)
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)


def leaf(value) -> Node:
    return Node(value, requires_grad=True)


def constant(value) -> Node:
    return Node(value)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _pair(a, b) -> tuple[Node, Node]:
    """Nodes for a binary op; a 0-d operand takes the dtype of the other side."""
    a, b = _as_node(a), _as_node(b)
    if a.value.dtype != b.value.dtype:
        if a.value.ndim == 0 and not a.requires_grad:
            a = Node(a.value.astype(b.value.dtype))
        elif b.value.ndim == 0 and not b.requires_grad:
            b = Node(b.value.astype(a.value.dtype))
    return a, b


def _make(value, op: str, parents: tuple, vjp: Callable) -> Node:
    if _Mode.record and any(p.requires_grad for p in parents):
        return Node(value, parents, vjp, op, True)
    return Node(value, op=op)


def _wanted(n: Node) -> bool:
    return n.requires_grad and (_Mode.live is None or id(n) in _Mode.live)


def _unbroadcast(g: Node, shape: tuple) -> Node:
    if g.shape == shape:
        return g
    if shape == ():
        return sum_(g)
    for axis, (gs, s) in enumerate(zip(g.shape, shape)):
        if s == 1 and gs != 1:
            g = sum_(g, axis=axis)
    return g


# ----------------------------------------------------------------- arithmetic

def add(a, b) -> Node:
    a, b = _pair(a, b)
    return _make(a.value + b.value, "Add", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Node:
    return add(a, mul(b, -1.0))


def mul(a, b) -> Node:
    a, b = _pair(a, b)
    return _make(a.value * b.value, "Mul", (a, b),
                 lambda g: (_unbroadcast(mul(g, b), a.shape) if _wanted(a) else None,
                            _unbroadcast(mul(g, a), b.shape) if _wanted(b) else None))


def div(a, b) -> Node:
    a, b = _pair(a, b)

    def vjp(g):
        ga = _unbroadcast(div(g, b), a.shape) if _wanted(a) else None
        gb = _unbroadcast(mul(g, div(mul(a, -1.0), mul(b, b))), b.shape) if _wanted(b) else None
        return ga, gb

    return _make(a.value / b.value, "Div", (a, b), vjp)


def matmul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    return _make(a.value @ b.value, "MatMul", (a, b),
                 lambda g: (matmul(g, transpose(b)) if _wanted(a) else None,
                            matmul(transpose(a), g) if _wanted(b) else None))


def transpose(a) -> Node:
    a = _as_node(a)
    return _make(a.value.T, "Transpose", (a,), lambda g: (transpose(g),))


# ----------------------------------------------------------------- elementwise

def tanh(a) -> Node:
    a = _as_node(a)
    out = _make(np.tanh(a.value), "Tanh", (a,), None)
    if out.requires_grad:
        out.vjp = lambda g: (mul(g, sub(1.0, mul(out, out))),)
    return out


def relu(a) -> Node:
    a = _as_node(a)
    mask = (a.value > 0).astype(a.value.dtype)
    return _make(a.value * mask, "Relu", (a,), lambda g: (mul(g, mask),))


def leaky_relu(a, slope: float = 0.2) -> Node:
    a = _as_node(a)
    dt = a.value.dtype
    factor = np.where(a.value > 0, dt.type(1.0), dt.type(slope))
    if not (_Mode.record and a.requires_grad):
        return Node(a.value * factor, op="LeakyRelu")
    return _make(a.value * factor, "LeakyRelu", (a,), lambda g: (mul(g, factor),))


def exp(a) -> Node:
    a = _as_node(a)
    out = _make(np.exp(a.value), "Exp", (a,), None)
    if out.requires_grad:
        out.vjp = lambda g: (mul(g, out),)
    return out


def log(a) -> Node:
    a = _as_node(a)
    return _make(np.log(a.value), "Log", (a,), lambda g: (div(g, a),))


def square(a) -> Node:
    return mul(a, a)


# ----------------------------------------------------------------- reductions

def _axis(a: Node, axis):
    return None if axis is None else axis % a.value.ndim


def sum_(a, axis: int | None = None) -> Node:
    """Sum over all entries (scalar result) or one axis (kept with size 1)."""
    a = _as_node(a)
    axis = _axis(a, axis)
    value = a.value.sum() if axis is None else a.value.sum(axis=axis, keepdims=True)
    shape = a.shape
    return _make(value, "Sum", (a,), lambda g: (mul(g, np.ones(shape, dtype=g.value.dtype)),))


def mean(a, axis: int | None = None) -> Node:
    a = _as_node(a)
    n = a.value.size if axis is None else a.shape[_axis(a, axis)]
    return mul(sum_(a, axis), 1.0 / n)


def norm2(a, axis: int | None = None) -> Node:
    """Euclidean norm; the gradient at a zero vector is taken to be zero."""
    a = _as_node(a)
    ax = _axis(a, axis)
    sq = (a.value ** 2).sum() if ax is None else (a.value ** 2).sum(axis=ax, keepdims=True)
    out = _make(np.sqrt(sq), "Norm2", (a,), None)
    if out.requires_grad:
        zero = (out.value == 0).astype(out.value.dtype)
        out.vjp = lambda g: (mul(a, div(g, add(out, zero))),)
    return out


def softmax(a, axis: int = -1) -> Node:
    a = _as_node(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = _make(e / e.sum(axis=axis, keepdims=True), "Softmax", (a,), None)
    if out.requires_grad:
        out.vjp = lambda g: (mul(out, sub(g, sum_(mul(g, out), axis=axis))),)
    return out


def log_softmax(a, axis: int = -1) -> Node:
    a = _as_node(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    value = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    return _make(value, "LogSoftmax", (a,),
                 lambda g: (sub(g, mul(softmax(a, axis), sum_(g, axis=axis))),))


# ----------------------------------------------------------------- structure

def concat(nodes: Sequence, axis: int = -1) -> Node:
    nodes = tuple(_as_node(n) for n in nodes)
    ax = axis % nodes[0].value.ndim
    bounds = np.cumsum([0] + [n.shape[ax] for n in nodes])

    def vjp(g):
        out = []
        for i in range(len(nodes)):
            key = [slice(None)] * g.value.ndim
            key[ax] = slice(int(bounds[i]), int(bounds[i + 1]))
            out.append(getitem(g, tuple(key)))
        return tuple(out)

    return _make(np.concatenate([n.value for n in nodes], axis=ax), "Concat", nodes, vjp)


def getitem(a, key) -> Node:
    a = _as_node(a)
    return _make(a.value[key], "Slice", (a,), lambda g: (_scatter(g, key, a.shape),))


def _scatter(g: Node, key, shape: tuple) -> Node:
    """Embed ``g`` into zeros of ``shape`` at ``key``; adjoint of slicing."""
    value = np.zeros(shape, dtype=g.value.dtype)
    value[key] = g.value
    return _make(value, "Scatter", (g,), lambda h: (getitem(h, key),))


# ----------------------------------------------------------------- losses

def cross_entropy(logits, target) -> Node:
    """Mean over rows of -sum(target * log_softmax(logits))."""
    logits, target = _as_node(logits), _as_node(target)
    per_row = sum_(mul(target, log_softmax(logits)), axis=-1)
    return mul(mean(per_row), -1.0)


def bce_with_logits(logits, target) -> Node:
    """Mean binary cross-entropy on logits. First-order only."""
    z, y = _as_node(logits), _as_node(target)
    zv, yv = z.value, y.value
    value = np.mean(np.maximum(zv, 0) - zv * yv + np.log1p(np.exp(-np.abs(zv))))
    n = zv.size

    def vjp(g):
        if _Mode.create_graph:
            raise UnsupportedOp("BCE has no second-order rule")
        sig = 0.5 * (1.0 + np.tanh(0.5 * zv))
        return (Node(g.value * (sig - yv) / n), Node(g.value * (-zv) / n))

    return _make(value, "BCE", (z, y), vjp)


# ----------------------------------------------------------------- backward

def _topological(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
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


def _run_backward(root: Node, create_graph: bool, targets=None) -> dict[int, Node]:
    if root.value.size != 1:
        raise NonScalarRoot(f"backward needs a scalar root, got shape {root.shape}")
    order = _topological(root)
    live = None
    if targets is not None:
        # keep only nodes lying on a path from a target to the root
        live = {id(t) for t in targets}
        for node in order:
            if any(id(p) in live for p in node.parents):
                live.add(id(node))
    grads: dict[int, Node] = {id(root): Node(np.ones(root.shape, dtype=root.value.dtype))}
    prev = (_Mode.record, _Mode.create_graph, _Mode.live)
    _Mode.record, _Mode.create_graph, _Mode.live = create_graph, create_graph, live
    try:
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node.vjp is None:
                continue
            for p, gp in zip(node.parents, node.vjp(g)):
                if gp is None or not _wanted(p):
                    continue
                prior = grads.get(id(p))
                grads[id(p)] = gp if prior is None else add(prior, gp)
    finally:
        _Mode.record, _Mode.create_graph, _Mode.live = prev
    return grads


def grad(root: Node, wrt: Iterable[Node]) -> list[np.ndarray]:
    """d root / d w for each ``w`` (zeros where ``root`` does not depend on ``w``)."""
    wrt = list(wrt)
    grads = _run_backward(root, create_graph=False, targets=wrt)
    return [grads[id(w)].value if id(w) in grads else np.zeros_like(w.value) for w in wrt]


def backward(root: Node) -> dict[Node, np.ndarray]:
    """Gradients of a scalar root for every leaf that requires them."""
    grads = _run_backward(root, create_graph=False)
    out = {}
    for node in _topological(root):
        if node.vjp is None and node.requires_grad:
            g = grads.get(id(node))
            out[node] = g.value if g is not None else np.zeros_like(node.value)
    return out


def grad_as_graph(root: Node, wrt: Node) -> Node:
    """The gradient d root / d wrt as a differentiable node."""
    grads = _run_backward(root, create_graph=True, targets=[wrt])
    g = grads.get(id(wrt))
    if g is None:
        return Node(np.zeros_like(wrt.value))
    return g
