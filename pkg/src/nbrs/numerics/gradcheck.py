"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from nbrs.numerics.optim import ParamStore
from nbrs.numerics.tensor import Tensor, backward


def grad_check(
    f: Callable[[ParamStore], Tensor],
    store: ParamStore,
    h: float = 1e-3,
    samples_per_param: int = 3,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be a deterministic scalar function of the parameters. Run this
    with a float64 store; in float32 the differences drown in rounding noise.
    The error at a coordinate is |analytic - fd| / (|analytic| + 1e-8), and
    the maximum over sampled coordinates of every parameter is returned.
    """
    if rng is None:
        rng = np.random.default_rng(0)

    store.zero_grads()
    loss = f(store)
    backward(loss)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for name, t in store.items()}

    worst = 0.0
    for name, t in store.items():
        flat = t.data.reshape(-1)
        n = flat.size
        coords = rng.choice(n, size=min(samples_per_param, n), replace=False)
        for c in coords:
            saved = flat[c]
            flat[c] = saved + h
            f_plus = f(store).item()
            flat[c] = saved - h
            f_minus = f(store).item()
            flat[c] = saved
            fd = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[c])
            worst = max(worst, abs(a - fd) / (abs(a) + 1e-8))
    store.zero_grads()
    return worst
