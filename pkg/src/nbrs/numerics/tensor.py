"""Dense arrays with reverse-mode differentiation.

Forward ops build a graph of Tensor nodes; ``backward`` replays the graph in
reverse topological order, accumulating gradients into ``.grad``. Training
runs in float32; gradient checks rebuild the same graph in float64 (callers
pick the dtype of the leaf tensors, ops follow numpy promotion).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from nbrs.errors import NumericsError

Array = np.ndarray

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction, for decoding and evaluation passes."""
    global _GRAD_ENABLED
    saved = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = saved


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float32)
        self.data = data
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, g: Array, own: bool = False) -> None:
        """Add ``g`` into the gradient buffer. ``own=True`` promises ``g`` is a
        fresh array nothing else references, letting us adopt it without a copy."""
        if self.grad is None:
            self.grad = g if own and g.dtype == self.data.dtype else np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float32)
    return Tensor(arr)


def _make(data: Array, parents: Sequence[Tensor], backward: Callable[[Tensor], None] | None) -> Tensor:
    """Wrap an op result, recording the graph edge only when grads are live."""
    if _GRAD_ENABLED and backward is not None and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._backward = lambda: backward(out)
        return out
    return Tensor(data)


def backward(loss: Tensor, seed_grad: Array | None = None) -> None:
    """Run reverse-mode accumulation from ``loss`` into every reachable leaf."""
    if seed_grad is None:
        seed_grad = np.ones_like(loss.data)
    loss.grad = np.asarray(seed_grad, dtype=loss.data.dtype)

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward()


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(out: Tensor):
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad, b.shape))

    return _make(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(out: Tensor):
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            b.accumulate(-_unbroadcast(out.grad, b.shape))

    return _make(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(out: Tensor):
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad * b.data, a.shape), own=True)
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad * a.data, b.shape), own=True)

    return _make(a.data * b.data, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    def bwd(out: Tensor):
        if a.requires_grad:
            a.accumulate(out.grad * s, own=True)

    return _make(a.data * s, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise NumericsError("matmul operands must have at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise NumericsError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bwd(out: Tensor):
        g = out.grad
        if a.requires_grad:
            a.accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape), own=True)
        if b.requires_grad:
            b.accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape), own=True)

    return _make(a.data @ b.data, (a, b), bwd)


def relu(a: Tensor) -> Tensor:
    def bwd(out: Tensor):
        if a.requires_grad:
            a.accumulate(out.grad * (a.data > 0), own=True)

    return _make(np.maximum(a.data, 0), (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def bwd(out: Tensor):
        if a.requires_grad:
            a.accumulate(out.grad.reshape(old))

    return _make(a.data.reshape(shape), (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]

    def bwd(out: Tensor):
        offset = 0
        for t, n in zip(tensors, sizes):
            if t.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(offset, offset + n)
                t.accumulate(out.grad[tuple(idx)])
            offset += n

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def index_rows(table: Tensor, ids: Array) -> Tensor:
    """Gather ``table[ids]`` along axis 0; the scatter-add backward makes this
    double as both the embedding lookup and the memory-assembly gather."""
    ids = np.asarray(ids)

    def bwd(out: Tensor):
        if table.requires_grad:
            g = np.zeros_like(table.data)
            np.add.at(g, ids.reshape(-1), out.grad.reshape(-1, table.data.shape[-1]))
            table.accumulate(g, own=True)

    return _make(table.data[ids], (table,), bwd)


def masked_mean(x: Tensor, mask: Array) -> Tensor:
    """Mean of ``x`` [N, L, D] over axis 1, restricted to positions where
    ``mask`` [N, L] is true. Every row must have at least one true position."""
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise NumericsError("masked_mean: row with no unmasked positions")
    m = mask.astype(x.data.dtype)
    data = (x.data * m[:, :, None]).sum(axis=1) / counts[:, None]

    def bwd(out: Tensor):
        if x.requires_grad:
            x.accumulate(out.grad[:, None, :] * m[:, :, None] / counts[:, None, None], own=True)

    return _make(data, (x,), bwd)


def dropout(x: Tensor, rate: float, rng, train: bool, whole_last_dim: bool = False) -> Tensor:
    """Inverted dropout; identity when not training or rate is 0.

    ``whole_last_dim`` drops entire trailing vectors (used for input dropout
    on token embeddings). Draws nothing from ``rng`` when inactive.
    """
    if not train or rate <= 0.0:
        return x
    if rate >= 1.0:
        return scale(x, 0.0)
    shape = x.shape[:-1] + (1,) if whole_last_dim else x.shape
    keep = (rng.random(shape) >= rate).astype(x.data.dtype) / (1.0 - rate)

    def bwd(out: Tensor):
        if x.requires_grad:
            x.accumulate(out.grad * keep, own=True)

    return _make(x.data * keep, (x,), bwd)
