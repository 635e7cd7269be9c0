"""Reverse-mode autodiff over float64 numpy arrays.

Every backward rule is written with ``Tensor`` operations, so running the
backward pass with ``create_graph=True`` records a graph of its own and the
resulting gradients can be differentiated again. ``dropout`` is the one
exception and refuses second-order use.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class ShapeMismatchError(ValueError):
    pass


class NonScalarLossError(ValueError):
    pass


class SecondOrderUnsupportedOpError(RuntimeError):
    pass


_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_mode, "enabled", True)


@contextmanager
def _grad_mode(enabled: bool):
    old = is_grad_enabled()
    _mode.enabled = enabled
    try:
        yield
    finally:
        _mode.enabled = old


def no_grad():
    return _grad_mode(False)


def enable_grad():
    return _grad_mode(True)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) or data.dtype != np.float64 else data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    # -- basics
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- method forms
    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        out.op = op
    return out


def _broadcast_shape(a: tuple, b: tuple) -> tuple:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeMismatchError(f"cannot broadcast shapes {a} and {b}") from None


# ---------------------------------------------------------------- shape ops


def sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum broadcast dimensions away so the result has ``shape``."""
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, s in enumerate(shape) if s == 1 and x.shape[lead + i] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True)
    data = data.reshape(shape)

    def bw(g):
        return (broadcast_to(g, x.shape),)

    return _make(data, (x,), bw, "sum_to")


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    try:
        data = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeMismatchError(f"cannot broadcast {x.shape} to {shape}") from None

    def bw(g):
        return (sum_to(g, x.shape),)

    return _make(np.ascontiguousarray(data), (x,), bw, "broadcast_to")


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError(f"cannot reshape {x.shape} to {shape}") from None

    def bw(g):
        return (reshape(g, x.shape),)

    return _make(data, (x,), bw, "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(a % x.ndim for a in axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (transpose(g, inv),)

    return _make(np.transpose(x.data, axes), (x,), bw, "transpose")


def getitem(x: Tensor, idx) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        return (_scatter(g, idx, x.shape),)

    return _make(x.data[idx], (x,), bw, "slice")


def _scatter(g: Tensor, idx, shape) -> Tensor:
    """Zeros of ``shape`` with ``g`` accumulated at ``idx`` (adjoint of slicing)."""
    data = np.zeros(shape)
    np.add.at(data, idx, g.data)

    def bw(gg):
        return (getitem(gg, idx),)

    return _make(data, (g,), bw, "scatter")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatchError(str(exc)) from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def bw(g):
        out = []
        for k in range(len(tensors)):
            sl = [slice(None)] * ndim
            sl[axis] = slice(int(bounds[k]), int(bounds[k + 1]))
            out.append(getitem(g, tuple(sl)))
        return tuple(out)

    return _make(data, tuple(tensors), bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        ax = axis % (t.ndim + 1)
        expanded.append(reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]))
    return concat(expanded, axis=axis)


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        return sum_to(g, a.shape), sum_to(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        return sum_to(g, a.shape), sum_to(neg(g), b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (neg(g),)

    return _make(-a.data, (a,), bw, "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        return sum_to(mul(g, b), a.shape), sum_to(mul(g, a), b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        ga = div(g, b)
        gb = neg(div(mul(ga, a), b))
        return sum_to(ga, a.shape), sum_to(gb, b.shape)

    return _make(a.data / b.data, (a, b), bw, "div")


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)

    def bw(g):
        return (mul(g, mul(p, power(a, p - 1.0))),)

    return _make(a.data**p, (a,), bw, "pow")


def matmul(a, b) -> Tensor:
    """Batched matrix product; both operands need at least two dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(f"matmul needs >= 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    _broadcast_shape(a.shape[:-2], b.shape[:-2])

    def bw(g):
        ga = matmul(g, b.swapaxes(-1, -2))
        gb = matmul(a.swapaxes(-1, -2), g)
        return sum_to(ga, a.shape), sum_to(gb, b.shape)

    return _make(np.matmul(a.data, b.data), (a, b), bw, "matmul")


# ---------------------------------------------------------------- elementwise


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_box = []

    def bw(g):
        out = out_box[0]
        return (mul(g, sub(1.0, mul(out, out))),)

    out = _make(np.tanh(a.data), (a,), bw, "tanh")
    out_box.append(out)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_box = []

    def bw(g):
        out = out_box[0]
        return (mul(g, mul(out, sub(1.0, out))),)

    data = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    out = _make(data, (a,), bw, "sigmoid")
    out_box.append(out)
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_box = []

    def bw(g):
        return (mul(g, out_box[0]),)

    out = _make(np.exp(a.data), (a,), bw, "exp")
    out_box.append(out)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (div(g, a),)

    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    return _make(data, (a,), bw, "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_box = []

    def bw(g):
        return (div(mul(0.5, g), out_box[0]),)

    out = _make(np.sqrt(a.data), (a,), bw, "sqrt")
    out_box.append(out)
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.data > 0).astype(np.float64)
    return mul(a, mask)


# ---------------------------------------------------------------- reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    kept_shape = tuple(1 if i in axes else s for i, s in enumerate(a.shape))

    def bw(g):
        return (broadcast_to(reshape(g, kept_shape), a.shape),)

    return _make(a.data.sum(axis=axes, keepdims=keepdims), (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(sum_(a, axis, keepdims), 1.0 / count)


def max_detached(a, axis=None, keepdims: bool = False) -> np.ndarray:
    return as_tensor(a).data.max(axis=axis, keepdims=keepdims)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shift = a.data.max(axis=axis, keepdims=True)
    e = exp(sub(a, shift))
    return div(e, sum_(e, axis, keepdims=True))


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = sub(a, a.data.max(axis=axis, keepdims=True))
    return sub(shifted, log(sum_(exp(shifted), axis, keepdims=True)))


def l2_norm(a, axis=None, keepdims: bool = False) -> Tensor:
    """Euclidean norm; the gradient at the origin is taken to be zero."""
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    kept_shape = tuple(1 if i in axes else s for i, s in enumerate(a.shape))
    out_box = []

    def bw(g):
        out = reshape(out_box[0], kept_shape)
        safe = add(out, (out.data == 0).astype(np.float64))
        return (mul(a, div(reshape(g, kept_shape), safe)),)

    data = np.sqrt((a.data * a.data).sum(axis=axes, keepdims=keepdims))
    out = _make(data, (a,), bw, "l2_norm")
    out_box.append(out)
    return out


# ---------------------------------------------------------------- misc


def dropout(a, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    a = as_tensor(a)
    if not training or p <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(a.shape) >= p).astype(np.float64) / (1.0 - p)

    def bw(g):
        if is_grad_enabled():
            raise SecondOrderUnsupportedOpError(
                "dropout is outside the second-order op subset; disable it for this pass"
            )
        return (Tensor(g.data * mask),)

    return _make(a.data * mask, (a,), bw, "dropout")


def solve(A, B) -> Tensor:
    """Solve ``A @ X = B`` for square ``A``."""
    A, B = as_tensor(A), as_tensor(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise ShapeMismatchError(f"solve needs square A matching B, got {A.shape}, {B.shape}")
    out_box = []

    def bw(g):
        gB = solve(transpose(A), g)
        X = out_box[0]
        X2 = X if X.ndim == 2 else reshape(X, X.shape + (1,))
        gB2 = gB if gB.ndim == 2 else reshape(gB, gB.shape + (1,))
        gA = neg(matmul(gB2, transpose(X2)))
        return gA, gB

    out = _make(np.linalg.solve(A.data, B.data), (A, B), bw, "solve")
    out_box.append(out)
    return out


def logabsdet(A) -> Tensor:
    A = as_tensor(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatchError(f"logabsdet needs a square matrix, got {A.shape}")
    _, val = np.linalg.slogdet(A.data)

    def bw(g):
        inv_t = transpose(solve(A, np.eye(A.shape[0])))
        return (mul(g, inv_t),)

    return _make(np.array(val), (A,), bw, "logabsdet")


# ---------------------------------------------------------------- backward engine


def _toposort(root: Tensor, targets: set[int] | None) -> list[Tensor]:
    """Post-order of nodes reachable from ``root`` through requires_grad edges.

    With ``targets`` given, only nodes that lead to a target are kept.
    """
    order: list[Tensor] = []
    state: dict[int, bool] = {}  # id -> leads to a target
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        nid = id(node)
        if expanded:
            leads = targets is None or nid in targets or any(
                state.get(id(p), False) for p in node._parents
            )
            state[nid] = leads
            if leads:
                order.append(node)
            continue
        if nid in state:
            continue
        state[nid] = False
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in state:
                stack.append((p, False))
    return order


def _run_backward(root: Tensor, seed: Tensor, targets: set[int] | None, create_graph: bool):
    topo = _toposort(root, targets)
    grads: dict[int, Tensor] = {id(root): seed}
    results: dict[int, Tensor] = {}
    with _grad_mode(create_graph):
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if targets is None:
                if node._backward is None:
                    results[id(node)] = g
                    continue
            elif id(node) in targets:
                results[id(node)] = g
            if node._backward is None:
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else add(prev, pg)
    return topo, results


def grad(
    output: Tensor,
    inputs: Sequence[Tensor],
    grad_output: Tensor | None = None,
    create_graph: bool = False,
) -> list[Tensor]:
    """Gradients of ``output`` w.r.t. each input; zeros where there is no path."""
    if grad_output is None:
        if output.size != 1:
            raise NonScalarLossError(f"grad needs a scalar output or grad_output, got {output.shape}")
        grad_output = Tensor(np.ones(output.shape))
    if not output.requires_grad:
        return [Tensor(np.zeros(x.shape)) for x in inputs]
    targets = {id(x) for x in inputs}
    _, results = _run_backward(output, as_tensor(grad_output), targets, create_graph)
    return [results.get(id(x), Tensor(np.zeros(x.shape))) for x in inputs]


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` (numpy) for every requires_grad leaf."""
    if loss.size != 1:
        raise NonScalarLossError(f"loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    topo, results = _run_backward(loss, Tensor(np.ones(loss.shape)), None, False)
    for node in topo:
        g = results.get(id(node))
        if g is None:
            continue
        node.grad = g.data.copy() if node.grad is None else node.grad + g.data
