from nbrs.numerics.checkpoint import load_checkpoint, save_checkpoint
from nbrs.numerics.gradcheck import grad_check
from nbrs.numerics.layers import (
    feed_forward,
    layer_norm,
    multi_head_attention,
    positional_encoding,
)
from nbrs.numerics.loss import smoothed_cross_entropy
from nbrs.numerics.optim import ParamStore, adam_step, rsqrt_warmup_schedule
from nbrs.numerics.rng import RngState
from nbrs.numerics.tensor import (
    Array,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    dropout,
    index_rows,
    masked_mean,
    matmul,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    sub,
)

__all__ = [
    "Array",
    "ParamStore",
    "RngState",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "dropout",
    "feed_forward",
    "grad_check",
    "index_rows",
    "layer_norm",
    "load_checkpoint",
    "masked_mean",
    "matmul",
    "mul",
    "multi_head_attention",
    "no_grad",
    "positional_encoding",
    "relu",
    "reshape",
    "rsqrt_warmup_schedule",
    "save_checkpoint",
    "scale",
    "smoothed_cross_entropy",
    "sub",
]
