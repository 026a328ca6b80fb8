"""Parameter store, linear/MLP blocks, and multi-head attention."""
from __future__ import annotations

import math

import numpy as np

from .tensor import (
    Tensor,
    concat,
    leaky_relu,
    masked_fill,
    matmul,
    reshape,
    softmax,
    transpose,
)


class ParamStore:
    """Creates named parameters and keeps the registry used for optimization
    and checkpointing. Weight init is a normal draw; 'xavier' scales the std
    by fan-in/fan-out, 'normal' uses the configured constant std.
    """

    def __init__(self, rng: np.random.Generator, init_std: float = 0.02,
                 init_scheme: str = "normal"):
        if init_scheme not in ("normal", "xavier"):
            raise ValueError(f"unknown init scheme '{init_scheme}'")
        self.rng = rng
        self.init_std = init_std
        self.init_scheme = init_scheme
        self.params: dict[str, Tensor] = {}

    def new(self, name: str, shape: tuple, fan: tuple | None = None, zero: bool = False) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name '{name}'")
        if zero:
            data = np.zeros(shape)
        else:
            std = self.init_std
            if self.init_scheme == "xavier" and fan is not None:
                std = math.sqrt(2.0 / (fan[0] + fan[1]))
            data = self.rng.normal(0.0, std, size=shape)
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int):
        self.w = store.new(f"{name}.w", (n_in, n_out), fan=(n_in, n_out))
        self.b = store.new(f"{name}.b", (n_out,), zero=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.w) + self.b


class MLP:
    """Fully connected stack with leaky-relu between layers (none after the last)."""

    def __init__(self, store: ParamStore, name: str, dims: list[int], slope: float = 0.01):
        if len(dims) < 2:
            raise ValueError("MLP needs at least input and output dims")
        self.slope = slope
        self.layers = [
            Linear(store, f"{name}.{i}", dims[i], dims[i + 1]) for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = leaky_relu(x, self.slope)
        return x


class MultiHeadAttention:
    """Scaled dot-product attention with separate query and key/value inputs.

    ``block_mask`` is a boolean (S, T) array; True entries are excluded from
    the softmax (set to -inf). Rows must keep at least one visible entry.
    """

    def __init__(self, store: ParamStore, name: str, d_model: int,
                 n_heads: int, d_key: int, d_out: int | None = None):
        self.n_heads = n_heads
        self.d_key = d_key
        inner = n_heads * d_key
        self.wq = Linear(store, f"{name}.wq", d_model, inner)
        self.wk = Linear(store, f"{name}.wk", d_model, inner)
        self.wv = Linear(store, f"{name}.wv", d_model, inner)
        self.wo = Linear(store, f"{name}.wo", inner, d_out if d_out is not None else d_model)

    def _heads(self, x: Tensor, length: int, batch: int) -> Tensor:
        x = reshape(x, (batch, length, self.n_heads, self.d_key))
        return transpose(x, (0, 2, 1, 3))

    def __call__(self, q_in: Tensor, kv_in: Tensor, block_mask: np.ndarray | None = None) -> Tensor:
        b, s, _ = q_in.shape
        t = kv_in.shape[1]
        q = self._heads(self.wq(q_in), s, b)
        k = self._heads(self.wk(kv_in), t, b)
        v = self._heads(self.wv(kv_in), t, b)
        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(self.d_key))
        if block_mask is not None:
            scores = masked_fill(scores, block_mask[None, None, :, :], -np.inf)
        attn = softmax(scores, axis=-1)
        out = matmul(attn, v)
        out = reshape(transpose(out, (0, 2, 1, 3)), (b, s, self.n_heads * self.d_key))
        return self.wo(out)


def causal_block_mask(s: int, extra_visible: int = 0) -> np.ndarray:
    """(s, t) mask blocking positions after each query.

    ``extra_visible`` prepended key slots (e.g. a null-context token) stay
    visible to every query.
    """
    t = s + extra_visible
    mask = np.triu(np.ones((s, t), dtype=bool), k=1 + extra_visible)
    return mask
