"""Reverse-mode automatic differentiation over dense float64 matrices.

Every tensor is 2-D; scalars are (1,1). Broadcasting is limited to
bias-row addition and (1,1)-scalar multiplication, which is the whole
kernel set the model needs. Gradients accumulate by reverse topological
traversal from a scalar loss.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording, e.g. for generation and expert selection."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"tensors must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad and _grad_enabled
        self.grad: np.ndarray | None = None
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ValueError(f"item() needs a (1,1) tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, scalar(-1.0)))

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, scalar(-1.0))


def scalar(value: float) -> Tensor:
    return Tensor(np.array([[value]], dtype=np.float64))


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def _track(*tensors: Tensor) -> bool:
    return _grad_enabled and any(t.requires_grad for t in tensors)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _result(data, parents, backward) -> Tensor:
    if _track(*parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents),
                      backward=backward)
    return Tensor(data)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward(g, out=None):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(out_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        pass
    elif b.shape == (1, a.shape[1]):
        pass  # bias row broadcast over a's rows
    else:
        raise ValueError(f"add: incompatible shapes {a.shape} + {b.shape}")
    out_data = a.data + b.data

    def backward(g, out=None):
        _accumulate(a, g)
        if b.shape == a.shape:
            _accumulate(b, g)
        else:
            _accumulate(b, g.sum(axis=0, keepdims=True))

    return _result(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if not (a.shape == b.shape or a.shape == (1, 1) or b.shape == (1, 1)):
        raise ValueError(f"mul: incompatible shapes {a.shape} * {b.shape}")
    out_data = a.data * b.data

    def backward(g, out=None):
        ga = g * b.data
        gb = g * a.data
        if a.shape == (1, 1) and ga.shape != (1, 1):
            ga = np.array([[ga.sum()]])
        if b.shape == (1, 1) and gb.shape != (1, 1):
            gb = np.array([[gb.sum()]])
        _accumulate(a, ga)
        _accumulate(b, gb)

    return _result(out_data, (a, b), backward)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    if axis not in (0, 1):
        raise ValueError(f"concat: axis must be 0 or 1, got {axis}")
    other = 1 - axis
    sizes = [t.shape[axis] for t in tensors]
    if len({t.shape[other] for t in tensors}) != 1:
        raise ValueError(
            f"concat: mismatched shapes {[t.shape for t in tensors]}"
        )
    out_data = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g, out=None):
        offset = 0
        for t, size in zip(tensors, sizes):
            if axis == 0:
                _accumulate(t, g[offset:offset + size, :])
            else:
                _accumulate(t, g[:, offset:offset + size])
            offset += size

    return _result(out_data, tuple(tensors), backward)


def rows(t: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= t.shape[0]):
        raise ValueError(f"rows: [{start},{stop}) invalid for shape {t.shape}")
    out_data = t.data[start:stop, :].copy()

    def backward(g, out=None):
        full = np.zeros_like(t.data)
        full[start:stop, :] = g
        _accumulate(t, full)

    return _result(out_data, (t,), backward)


def cols(t: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= t.shape[1]):
        raise ValueError(f"cols: [{start},{stop}) invalid for shape {t.shape}")
    out_data = t.data[:, start:stop].copy()

    def backward(g, out=None):
        full = np.zeros_like(t.data)
        full[:, start:stop] = g
        _accumulate(t, full)

    return _result(out_data, (t,), backward)


def embedding(table: Tensor, ids: list[int]) -> Tensor:
    if not ids:
        raise ValueError("embedding: ids must be nonempty")
    if min(ids) < 0 or max(ids) >= table.shape[0]:
        raise ValueError(
            f"embedding: id out of range for a {table.shape[0]}-row table"
        )
    idx = list(ids)
    out_data = table.data[idx, :]

    def backward(g, out=None):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        _accumulate(table, full)

    return _result(out_data, (table,), backward)


def sigmoid(t: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-t.data))

    def backward(g, out=out_data):
        _accumulate(t, g * out * (1.0 - out))

    return _result(out_data, (t,), backward)


def tanh(t: Tensor) -> Tensor:
    out_data = np.tanh(t.data)

    def backward(g, out=out_data):
        _accumulate(t, g * (1.0 - out * out))

    return _result(out_data, (t,), backward)


def softplus(t: Tensor) -> Tensor:
    out_data = np.logaddexp(0.0, t.data)

    def backward(g, out=None):
        _accumulate(t, g / (1.0 + np.exp(-t.data)))

    return _result(out_data, (t,), backward)


def log(t: Tensor) -> Tensor:
    if (t.data <= 0).any():
        raise ValueError("log: all entries must be positive")
    out_data = np.log(t.data)

    def backward(g, out=None):
        _accumulate(t, g / t.data)

    return _result(out_data, (t,), backward)


def softmax(t: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    shifted = t.data - t.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=1, keepdims=True)

    def backward(g, out=out_data):
        dot = (g * out).sum(axis=1, keepdims=True)
        _accumulate(t, (g - dot) * out)

    return _result(out_data, (t,), backward)


def log_softmax(t: Tensor) -> Tensor:
    shifted = t.data - t.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out_data = shifted - lse

    def backward(g, out=out_data):
        _accumulate(t, g - np.exp(out) * g.sum(axis=1, keepdims=True))

    return _result(out_data, (t,), backward)


def logsumexp(t: Tensor) -> Tensor:
    """Row-wise logsumexp over the last axis; output shape (rows, 1)."""
    m = t.data.max(axis=1, keepdims=True)
    out_data = m + np.log(np.exp(t.data - m).sum(axis=1, keepdims=True))

    def backward(g, out=out_data):
        _accumulate(t, g * np.exp(t.data - out))

    return _result(out_data, (t,), backward)


def transpose(t: Tensor) -> Tensor:
    out_data = t.data.T.copy()

    def backward(g, out=None):
        _accumulate(t, g.T)

    return _result(out_data, (t,), backward)


def sum_all(t: Tensor) -> Tensor:
    out_data = np.array([[t.data.sum()]])

    def backward(g, out=None):
        _accumulate(t, np.full_like(t.data, g[0, 0]))

    return _result(out_data, (t,), backward)


def gather(t: Tensor, index: int) -> Tensor:
    """Pick one entry of a (1, n) row; the NLL target-probability gather."""
    if t.shape[0] != 1:
        raise ValueError(f"gather: expected a (1, n) row, got {t.shape}")
    if not 0 <= index < t.shape[1]:
        raise ValueError(f"gather: index {index} out of range for {t.shape}")
    out_data = t.data[:, index:index + 1].copy()

    def backward(g, out=None):
        full = np.zeros_like(t.data)
        full[0, index] = g[0, 0]
        _accumulate(t, full)

    return _result(out_data, (t,), backward)


def scatter_sum(weights: Tensor, ids: list[int], size: int) -> Tensor:
    """Sum (1, n) weights into a (1, size) row by target index.

    Used to pool attention mass over repeated passage tokens when building
    the copy distribution.
    """
    if weights.shape[0] != 1 or weights.shape[1] != len(ids):
        raise ValueError(
            f"scatter_sum: weights {weights.shape} do not match {len(ids)} ids"
        )
    if ids and (min(ids) < 0 or max(ids) >= size):
        raise ValueError(f"scatter_sum: id out of range for size {size}")
    idx = list(ids)
    out_data = np.zeros((1, size))
    np.add.at(out_data[0], idx, weights.data[0])

    def backward(g, out=None):
        _accumulate(weights, g[0, idx].reshape(1, -1))

    return _result(out_data, (weights,), backward)


def backward(loss: Tensor):
    """Accumulate dLoss/d(ancestor) for every tracked ancestor of loss."""
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones((1, 1))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def grad_check(f, params: dict[str, Tensor], h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    f() must rebuild the forward pass from the current parameter values
    and return a scalar Tensor.
    """
    for p in params.values():
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    worst = 0.0
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + h
                f_plus = f().item()
                flat[i] = saved - h
                f_minus = f().item()
                flat[i] = saved
                numeric = (f_plus - f_minus) / (2.0 * h)
                a = analytic[name].reshape(-1)[i]
                rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
                worst = max(worst, rel)
    return worst
