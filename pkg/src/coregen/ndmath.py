"""Small dense-tensor core with tape-based reverse-mode differentiation.

Tensors wrap float64 numpy arrays. Operations executed while a :class:`Graph`
is active (``with Graph() as g:``) and touching at least one tensor with
``requires_grad`` are appended to that graph; :func:`backward` then walks the
tape in reverse. Outside a graph the same functions run as plain numpy.

Broadcasting is limited to what the sequence model needs: elementwise ops
accept operands whose shapes numpy can broadcast (bias vectors, ``[B, 1, A]``
against ``[B, n, A]``), and the gradient is summed back to the operand shape.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

LOG_CLAMP = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DegenerateMaskError(ValueError):
    """A masked softmax row has no enabled entries."""


class GradientError(RuntimeError):
    """Backward contract violated (e.g. non-scalar loss) or non-finite values."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


class Node:
    __slots__ = ("kind", "inputs", "output", "backward")

    def __init__(self, kind: str, inputs: tuple[Tensor, ...], output: Tensor,
                 backward: Callable[[np.ndarray], tuple]):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Graph:
    """Define-by-run tape. Nodes are appended in execution order, so each
    node's inputs are always produced earlier on the tape."""

    _active: list["Graph"] = []

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        Graph._active.append(self)
        return self

    def __exit__(self, *exc):
        Graph._active.pop()
        return False

    def __len__(self):
        return len(self.nodes)


def _current_graph() -> Graph | None:
    return Graph._active[-1] if Graph._active else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(kind: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward) -> Tensor:
    graph = _current_graph()
    needs = graph is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        graph.nodes.append(Node(kind, tuple(inputs), out, backward))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot combine shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", (a, b), a.data + b.data,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", (a, b), a.data - b.data,
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return _record("mul", (a, b), ad * bd,
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # 0.5*(1+tanh(x/2)) avoids overflow in exp for large |x|
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _record("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _record("exp", (x,), y, lambda g: (g * y,))


def log(x: Tensor, clamp: float = LOG_CLAMP) -> Tensor:
    """Natural log with inputs clamped from below at ``clamp``; clamped
    entries receive zero gradient."""
    safe = np.maximum(x.data, clamp)
    live = x.data >= clamp
    return _record("log", (x,), np.log(safe), lambda g: (np.where(live, g / safe, 0.0),))


def sum(x: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:  # noqa: A001
    shape = x.shape
    y = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(a % len(shape) for a in axes)
        return (np.broadcast_to(np.expand_dims(g, axes), shape).copy(),)

    return _record("sum", (x,), np.asarray(y), backward)


# ------------------------------------------------------------------- linear

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., k] @ b[k, n]``; a may carry leading batch axes."""
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    k, n = bd.shape

    def backward(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, k).T @ g.reshape(-1, n)
        return ga, gb

    return _record("matmul", (a, b), ad @ bd, backward)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")
    return _record("transpose", (x,), x.data.T, lambda g: (g.T,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    return _record("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------- structure

def index(x: Tensor, key) -> Tensor:
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, key, g)
        return (full,)

    return _record("index", (x,), x.data[key], backward)


def take_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"row id out of range for table with {table.shape[0]} rows")
    shape = table.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return _record("take_rows", (table,), table.data[ids], backward)


def take_last(x: Tensor, idx) -> Tensor:
    """Pick one entry per row along the last axis: ``out[i] = x[i, idx[i]]``."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(x.shape[0])
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[rows, idx] = g
        return (full,)

    return _record("take_last", (x,), x.data[rows, idx], backward)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    ax = axis % parts[0].ndim
    sizes = [p.shape[ax] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _record("concat", parts, np.concatenate([p.data for p in parts], axis=ax), backward)


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    ax = axis % (parts[0].ndim + 1)

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(parts)))

    return _record("stack", parts, np.stack([p.data for p in parts], axis=ax), backward)


# ------------------------------------------------------------------ softmax

def softmax_masked(logits: Tensor, mask) -> Tensor:
    """Softmax over the last axis restricted to ``mask``; disabled entries
    are exactly zero."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not mask.any(axis=-1).all():
        raise DegenerateMaskError("softmax_masked: a row has no enabled entries")
    z = np.where(mask, logits.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record("softmax_masked", (logits,), y, backward)


# ----------------------------------------------------------------- backward

def backward(graph: Graph, loss: Tensor) -> dict[str, np.ndarray]:
    """Propagate d(loss)/d(.) through ``graph``.

    Sets ``.grad`` on every reachable leaf with ``requires_grad`` and returns
    the gradients of named leaves keyed by name.
    """
    if loss.data.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = set()
    leaves: dict[int, Tensor] = {}
    for node in reversed(graph.nodes):
        produced.add(id(node.output))
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if not inp.requires_grad:
                continue
            key = id(inp)
            grads[key] = grads[key] + gi if key in grads else gi
            leaves.setdefault(key, inp)
    named: dict[str, np.ndarray] = {}
    for key, g in grads.items():
        t = leaves.get(key)
        if t is None or key in produced:
            continue
        t.grad = g
        if t.name is not None:
            named[t.name] = g
    return named


# ------------------------------------------------------- gradient checking

def finite_diff_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Largest relative disagreement between analytic and central-difference
    gradients of ``f(params)``.

    With ``max_coords`` set, that many coordinates are sampled per parameter;
    otherwise every coordinate is checked.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for p in params.values():
        p.requires_grad = True
    with Graph() as g:
        loss = f(params)
    if not np.isfinite(loss.data).all():
        raise GradientError("loss is not finite")
    analytic = backward(g, loss)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        grad = analytic.get(name, np.zeros_like(p.data)).reshape(-1)
        flat = p.data.reshape(-1)
        coords: Iterable[int] = range(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up = f(params).item()
            flat[i] = orig - eps
            down = f(params).item()
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise GradientError(f"loss not finite while perturbing {name}[{i}]")
            numeric = (up - down) / (2 * eps)
            denom = max(abs(grad[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(grad[i] - numeric) / denom)
    return worst
