"""Dense float64 matrices with a define-by-run reverse-mode tape.

Only the handful of operations the auto-encoder needs are provided. Every
value is a 2-D ``numpy.ndarray``; a :class:`Node` wraps one value and its
gradient buffer, and a :class:`Tape` records nodes in creation order so the
backward sweep is simply the recording order reversed.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


class Node:
    __slots__ = ("tape", "value", "grad", "parents", "backward_fn", "requires_grad", "index")

    def __init__(self, tape: "Tape", value: np.ndarray, parents=(), backward_fn=None,
                 requires_grad: bool = True):
        self.tape = tape
        self.value = value
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.grad = None
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def gradient(self) -> np.ndarray:
        """Accumulated gradient; exactly zero for nodes the output never used."""
        if self.grad is None:
            return np.zeros_like(self.value)
        return self.grad

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Node(#{self.index}, shape={self.value.shape})"


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value, requires_grad: bool = True) -> Node:
        return Node(self, as_matrix(value), requires_grad=requires_grad)

    def constant(self, value) -> Node:
        return self.leaf(value, requires_grad=False)

    def record(self, value: np.ndarray, parents: Sequence[Node],
               backward_fn: Callable[[np.ndarray], Iterable]) -> Node:
        needs = any(p.requires_grad for p in parents)
        return Node(self, value, parents, backward_fn if needs else None, needs)

    def backward(self, out: Node, seed=None) -> None:
        """Propagate ``seed`` (default ones) from ``out`` back through the tape.

        Nodes are visited in strict reverse creation order, which is a reverse
        topological order because a node's parents always exist before it.
        """
        if out.tape is not self:
            raise ValueError("output node belongs to a different tape")
        out.grad = np.ones_like(out.value) if seed is None else as_matrix(seed).copy()
        for node in reversed(self.nodes[: out.index + 1]):
            if node.grad is None or node.backward_fn is None:
                continue
            for parent, g in zip(node.parents, node.backward_fn(node.grad)):
                if g is not None:
                    parent._accumulate(g)


def _lift(tape: Tape, x) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ValueError("operands recorded on different tapes")
        return x
    return tape.constant(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TypeError("at least one operand must be a Node")


def matmul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return tape.record(av @ bv, (a, b), back)


def add_bias(x, bias) -> Node:
    """Add a 1×c row vector to every row of ``x``."""
    tape = _tape_of(x, bias)
    x, bias = _lift(tape, x), _lift(tape, bias)
    if bias.shape != (1, x.shape[1]):
        raise ShapeError(f"add_bias: bias {bias.shape} does not fit {x.shape}")

    def back(g):
        return g, g.sum(axis=0, keepdims=True)

    return tape.record(x.value + bias.value, (x, bias), back)


def add(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def relu(x) -> Node:
    x = _lift(_tape_of(x), x)
    mask = x.value > 0
    # strict inequality: the subgradient at exactly zero is 0
    return x.tape.record(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def rowwise_concat(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"rowwise_concat: row counts differ, {a.shape} vs {b.shape}")
    split = a.shape[1]
    return tape.record(np.concatenate([a.value, b.value], axis=1), (a, b),
                       lambda g: (g[:, :split], g[:, split:]))


def replicate_rows(x, m: int) -> Node:
    """Stack a 1×c row ``m`` times."""
    x = _lift(_tape_of(x), x)
    if x.shape[0] != 1:
        raise ShapeError(f"replicate_rows expects a single row, got {x.shape}")
    return x.tape.record(np.repeat(x.value, m, axis=0), (x,),
                         lambda g: (g.sum(axis=0, keepdims=True),))


def column_max(x) -> Node:
    """Per-column maximum; ties route the gradient to the first row."""
    x = _lift(_tape_of(x), x)
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"column_max of an empty matrix {x.shape}")
    arg = np.argmax(x.value, axis=0)
    cols = np.arange(x.shape[1])
    out = x.value[arg, cols][None, :]

    def back(g):
        gx = np.zeros_like(x.value)
        gx[arg, cols] = g[0]
        return (gx,)

    return x.tape.record(out, (x,), back)


def reshape(x, rows: int, cols: int) -> Node:
    x = _lift(_tape_of(x), x)
    shape = x.shape
    return x.tape.record(x.value.reshape(rows, cols), (x,), lambda g: (g.reshape(shape),))


def weighted_sum(x, weights) -> Node:
    """Scalar ``sum(x * weights)`` as a 1×1 node; ``weights`` is constant."""
    x = _lift(_tape_of(x), x)
    w = as_matrix(weights)
    if w.shape != x.shape:
        raise ShapeError(f"weighted_sum: weights {w.shape} vs input {x.shape}")
    return x.tape.record(np.array([[np.sum(x.value * w)]]), (x,), lambda g: (g[0, 0] * w,))


def dense(x, weight, bias, activation: str = "identity") -> Node:
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    y = add_bias(matmul(x, weight), bias)
    return relu(y) if activation == "relu" else y


def per_row_mlp(x, layers) -> Node:
    """Apply a shared perceptron to every row of ``x``.

    ``layers`` is a sequence of ``(weight, bias, activation)``; weights are
    in×out so rows are transformed by ``row @ weight + bias``.
    """
    width = (x.shape[1] if isinstance(x, Node) else as_matrix(x).shape[1])
    for i, (w, b, _) in enumerate(layers):
        w_rows = w.shape[0]
        if w_rows != width:
            raise ShapeError(f"per_row_mlp: layer {i} expects width {w_rows}, got {width}")
        width = w.shape[1]
    h = x
    for w, b, act in layers:
        if not isinstance(h, Node):
            h = _tape_of(w, b).constant(h)
        h = dense(h, w, b, act)
    return h


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Node) else as_matrix(x)


def evaluate(fn: Callable[..., Node], *arrays) -> np.ndarray:
    """Run ``fn`` on fresh constant leaves and return the forward value."""
    tape = Tape()
    return fn(*[tape.constant(a) for a in arrays]).value


def grad(fn: Callable[..., Node], *arrays) -> tuple:
    """Value and gradients of a scalar-valued (1×1) ``fn`` w.r.t. all inputs."""
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    out = fn(*leaves)
    if out.shape != (1, 1):
        raise ShapeError(f"grad needs a 1x1 output, got {out.shape}")
    tape.backward(out)
    return float(out.value[0, 0]), tuple(l.gradient() for l in leaves)
