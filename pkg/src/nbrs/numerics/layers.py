"""Transformer building blocks: attention, layer norm, feed-forward, and the
fixed sinusoidal position table.

The attention and layer-norm backwards are hand-written (they are the hot
path); everything else composes the primitive ops and differentiates itself.
"""

from __future__ import annotations

import numpy as np

from nbrs.errors import NumericsError
from nbrs.numerics.tensor import Array, Tensor, _make, dropout, matmul, relu

LAYER_NORM_EPS = 1e-6

# Count of attention query rows that had no attendable key; kept for tests and
# diagnostics. Such rows are reported with uniform weights but contribute zero
# output.
fully_masked_rows = 0

_PE_CACHE: dict[tuple[int, int, str], Array] = {}


def positional_encoding(length: int, dim: int, dtype=np.float32) -> Array:
    key = (length, dim, np.dtype(dtype).name)
    cached = _PE_CACHE.get(key)
    if cached is None:
        pos = np.arange(length, dtype=np.float64)[:, None]
        i = np.arange(dim, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, 2.0 * (i // 2) / dim)
        pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
        cached = _PE_CACHE[key] = pe.astype(dtype)
    return cached


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize the last dimension to zero mean / unit variance, then apply
    ``gain`` and ``bias``."""
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise NumericsError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} do not match {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def bwd(out: Tensor):
        g = out.grad
        if gain.requires_grad:
            gain.accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0), own=True)
        if bias.requires_grad:
            bias.accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0), own=True)
        if x.requires_grad:
            dxhat = g * gain.data
            term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            x.accumulate(inv * term, own=True)

    return _make(data, (x, gain, bias), bwd)


def _expand_mask(mask: Array | None, b: int, lq: int, lk: int) -> Array:
    """Accept a key mask [B, Lk] or a full mask [B, Lq, Lk]; return [B, 1, Lq, Lk]."""
    if mask is None:
        return np.ones((b, 1, 1, lk), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape == (b, lk):
        return mask[:, None, None, :]
    if mask.shape == (b, lq, lk):
        return mask[:, None, :, :]
    raise NumericsError(f"attention mask shape {mask.shape} does not fit ({b}, {lq}, {lk})")


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: Array | None,
    heads: int,
    capture: list | None = None,
) -> Tensor:
    """Scaled dot-product attention over ``heads`` parallel heads.

    ``q``/``k``/``v`` are [B, Lq, D], [B, Lk, D], [B, Lk, D] with D divisible
    by ``heads``; ``mask`` marks attendable key positions. Query rows with no
    attendable key are flagged, reported with uniform weights, and contribute
    zero output. When ``capture`` is a list, the softmax weights
    [B, heads, Lq, Lk] are appended to it.
    """
    global fully_masked_rows
    b, lq, d = q.shape
    if k.ndim != 3 or v.ndim != 3 or k.shape[0] != b or v.shape[:2] != k.shape[:2]:
        raise NumericsError(f"attention shape mismatch: q={q.shape} k={k.shape} v={v.shape}")
    if k.shape[2] != d or v.shape[2] != d:
        raise NumericsError(f"attention last-dim mismatch: q={q.shape} k={k.shape} v={v.shape}")
    if d % heads != 0:
        raise NumericsError(f"attention dim {d} not divisible by {heads} heads")
    lk = k.shape[1]
    dh = d // heads
    inv_sqrt = 1.0 / np.sqrt(dh)

    qh = q.data.reshape(b, lq, heads, dh).transpose(0, 2, 1, 3)
    kh = k.data.reshape(b, lk, heads, dh).transpose(0, 2, 1, 3)
    vh = v.data.reshape(b, lk, heads, dh).transpose(0, 2, 1, 3)

    m4 = _expand_mask(mask, b, lq, lk)
    raw = (qh @ np.swapaxes(kh, -1, -2)) * inv_sqrt
    if m4.all():
        rowmax = raw.max(axis=-1, keepdims=True)
        expd = np.exp(raw - rowmax)
        weights = expd / expd.sum(axis=-1, keepdims=True)
        if capture is not None:
            capture.append(weights.copy())
    else:
        scores = np.where(m4, raw, -np.inf)
        rowmax = scores.max(axis=-1, keepdims=True)
        alive = np.isfinite(rowmax)
        expd = np.exp(scores - np.where(alive, rowmax, 0.0))
        denom = expd.sum(axis=-1, keepdims=True)
        weights = expd / np.where(denom > 0, denom, 1.0)
        if not alive.all():
            fully_masked_rows += int(alive.size - alive.sum())
            if capture is not None:
                capture.append(np.where(alive, weights, 1.0 / lk).copy())
        elif capture is not None:
            capture.append(weights.copy())

    out_h = weights @ vh
    data = out_h.transpose(0, 2, 1, 3).reshape(b, lq, d)

    def bwd(out: Tensor):
        gh = out.grad.reshape(b, lq, heads, dh).transpose(0, 2, 1, 3)
        dw = gh @ np.swapaxes(vh, -1, -2)
        dscores = weights * (dw - (dw * weights).sum(axis=-1, keepdims=True))
        if v.requires_grad:
            dv = np.swapaxes(weights, -1, -2) @ gh
            v.accumulate(np.ascontiguousarray(dv.transpose(0, 2, 1, 3)).reshape(b, lk, d), own=True)
        if q.requires_grad:
            dq = (dscores @ kh) * inv_sqrt
            q.accumulate(np.ascontiguousarray(dq.transpose(0, 2, 1, 3)).reshape(b, lq, d), own=True)
        if k.requires_grad:
            dk = (np.swapaxes(dscores, -1, -2) @ qh) * inv_sqrt
            k.accumulate(np.ascontiguousarray(dk.transpose(0, 2, 1, 3)).reshape(b, lk, d), own=True)

    return _make(data, (q, k, v), bwd)


def linear(x: Tensor, w: Tensor) -> Tensor:
    """x @ w with leading dims flattened into one GEMM (numpy's batched
    matmul loops in Python-visible time over many small matrices)."""
    from nbrs.numerics.tensor import reshape

    if x.ndim == 2:
        return matmul(x, w)
    lead = x.shape[:-1]
    out = matmul(reshape(x, (-1, x.shape[-1])), w)
    return reshape(out, lead + (w.shape[-1],))


def feed_forward(
    x: Tensor,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    dropout_rate: float = 0.0,
    rng=None,
    train: bool = False,
) -> Tensor:
    """Position-wise feed-forward with a rectifier and a post-ReLU dropout hook."""
    h = relu(linear(x, w1) + b1)
    h = dropout(h, dropout_rate, rng, train)
    return linear(h, w2) + b2
