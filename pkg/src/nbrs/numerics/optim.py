"""Named parameter store and the Adam optimizer with an inverse-square-root
warmup schedule."""

from __future__ import annotations

from typing import Callable, Iterator, Mapping

import numpy as np

from nbrs.errors import NumericsError
from nbrs.numerics.tensor import Array, Tensor


class ParamStore:
    """Ordered map of named parameter tensors plus Adam moment accumulators.

    The step counter increases monotonically; moment arrays always shape-match
    their parameters (they are created on first use).
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, Array] = {}
        self._v: dict[str, Array] = {}
        self.step = 0

    def add(self, name: str, data: Array) -> Tensor:
        if name in self._params:
            raise NumericsError(f"duplicate parameter name: {name}")
        if any(ch in name for ch in " \n\r"):
            raise NumericsError(f"parameter name contains whitespace: {name!r}")
        t = Tensor(np.asarray(data), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def n_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, Array]:
        return {name: t.grad for name, t in self._params.items() if t.grad is not None}

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, t in self._params.items():
            out.add(name, t.data.copy())
        out._m = {k: v.copy() for k, v in self._m.items()}
        out._v = {k: v.copy() for k, v in self._v.items()}
        out.step = self.step
        return out

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for name, t in self._params.items():
            out.add(name, t.data.astype(dtype))
        out.step = self.step
        return out

    def moments(self, name: str) -> tuple[Array, Array]:
        if name not in self._m:
            shape = self._params[name].data.shape
            dtype = self._params[name].data.dtype
            self._m[name] = np.zeros(shape, dtype=dtype)
            self._v[name] = np.zeros(shape, dtype=dtype)
        return self._m[name], self._v[name]


def rsqrt_warmup_schedule(emb_size: int, warmup_steps: int = 4000, base: float = 1.0) -> Callable[[int], float]:
    """Learning rate grows linearly for ``warmup_steps`` and then decays as
    1/sqrt(step), all scaled by emb_size ** -0.5."""
    k = base * emb_size**-0.5

    def lr(step: int) -> float:
        return k * min(step**-0.5, step * warmup_steps**-1.5)

    return lr


def adam_step(
    store: ParamStore,
    grads: Mapping[str, Array],
    lr_schedule: Callable[[int], float] | float,
    beta1: float = 0.9,
    beta2: float = 0.98,
    eps: float = 1e-9,
) -> None:
    """One Adam update over ``grads``. Rejects the whole step on a non-finite
    gradient; a parameter whose gradient is entirely zero is left unchanged."""
    for name in grads:
        if name not in store:
            raise NumericsError(f"gradient for unknown parameter: {name}")
        if grads[name].shape != store[name].data.shape:
            raise NumericsError(f"gradient shape mismatch for {name}")
        if not np.isfinite(grads[name]).all():
            raise NumericsError(f"non-finite gradient for parameter {name}")

    step = store.step + 1
    lr = lr_schedule(step) if callable(lr_schedule) else float(lr_schedule)
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for name, g in grads.items():
        if not g.any():
            continue
        p = store[name]
        m, v = store.moments(name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    store.step = step
