"""Adam with bias correction, operating on named parameter dicts."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


class OptimizerError(RuntimeError):
    """Raised when a step cannot be applied (bad config or non-finite grads)."""


class AdamState:
    """Per-parameter first/second moment buffers plus the shared step count."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise OptimizerError(f"lr must be positive, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise OptimizerError("betas must lie in [0, 1)")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One in-place update from the gradients stored on ``params``.

    A missing gradient counts as zero. Non-finite gradients abort the step
    before any parameter is touched.
    """
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise OptimizerError(f"non-finite gradient for parameter '{name}'; step aborted")
        if p.grad is not None and p.grad.shape != p.data.shape:
            raise OptimizerError(f"gradient shape {p.grad.shape} does not match parameter '{name}' {p.data.shape}")

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else 0.0
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
