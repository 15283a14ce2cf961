"""Label-smoothed cross entropy over padded token sequences."""

from __future__ import annotations

import numpy as np

from nbrs.errors import NumericsError
from nbrs.numerics.tensor import Array, Tensor, _make


def smoothed_cross_entropy(logits: Tensor, target_ids: Array, epsilon: float, pad_id: int) -> Tensor:
    """Mean smoothed cross entropy over non-pad positions.

    ``logits`` is [..., V]; ``target_ids`` matches the leading shape. The
    smoothed target distribution puts (1 - epsilon) on the reference class
    and spreads epsilon uniformly over all V classes.
    """
    if not 0.0 <= epsilon < 1.0:
        raise NumericsError(f"label smoothing epsilon {epsilon} outside [0, 1)")
    targets = np.asarray(target_ids)
    vocab = logits.shape[-1]
    if targets.size and int(targets.max()) >= vocab:
        raise NumericsError(f"target id {int(targets.max())} outside vocab of {vocab}")
    flat_logits = logits.data.reshape(-1, vocab)
    flat_targets = targets.reshape(-1)
    keep = flat_targets != pad_id
    n = int(keep.sum())
    if n == 0:
        raise NumericsError("smoothed_cross_entropy: all target positions are padding")

    rows = flat_logits[keep]
    tgt = flat_targets[keep]
    m = rows.max(axis=1, keepdims=True)
    shifted = rows - m
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + m
    logp = rows - logz
    per_pos = -(1.0 - epsilon) * logp[np.arange(n), tgt] - (epsilon / vocab) * logp.sum(axis=1)
    data = np.asarray(per_pos.mean(), dtype=logits.dtype)

    def bwd(out: Tensor):
        if logits.requires_grad:
            p = np.exp(logp)
            q = np.full_like(p, epsilon / vocab)
            q[np.arange(n), tgt] += 1.0 - epsilon
            g = np.zeros_like(flat_logits)
            g[keep] = (p - q) * (out.grad / n)
            logits.accumulate(g.reshape(logits.shape), own=True)

    return _make(data, (logits,), bwd)
