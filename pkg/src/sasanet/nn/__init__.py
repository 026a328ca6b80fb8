from .tensor import (
    GraphError,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cumsum,
    default_dtype,
    embedding_lookup,
    exp,
    gather_rows,
    grad_enabled,
    leaky_relu,
    log,
    masked_fill,
    matmul,
    mul,
    narrow,
    no_grad,
    reduce_mean,
    reduce_sum,
    reshape,
    scatter_add_rows,
    set_default_dtype,
    sigmoid,
    softmax,
    softplus,
    sub,
    take_along,
    transpose,
)
from .layers import MLP, Linear, MultiHeadAttention, ParamStore, causal_block_mask
from .optim import AdamState, OptimizerError, adam_step, zero_grads
from .serialize import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "GraphError", "ShapeError", "Tensor", "add", "as_tensor", "backward",
    "concat", "cumsum", "default_dtype", "embedding_lookup", "exp",
    "gather_rows", "grad_enabled", "leaky_relu", "log", "masked_fill",
    "matmul", "mul", "narrow", "no_grad", "reduce_mean", "reduce_sum",
    "reshape", "scatter_add_rows", "set_default_dtype", "sigmoid", "softmax",
    "softplus", "sub", "take_along", "transpose",
    "MLP", "Linear", "MultiHeadAttention", "ParamStore", "causal_block_mask",
    "AdamState", "OptimizerError", "adam_step", "zero_grads",
    "CheckpointError", "load_checkpoint", "save_checkpoint",
]
