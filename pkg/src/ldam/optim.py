"""Adam with bias correction, operating on named parameter tensors."""

from __future__ import annotations

import numpy as np

from .errors import OptimError
from .tensor import Tensor

__all__ = ["AdamState", "adam_update", "zero_grads"]


class AdamState:
    """Per-parameter first/second moment buffers plus the step counter."""

    def __init__(self, named_params: list[tuple[str, Tensor]], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step = 0
        self.m = {name: np.zeros_like(t.data) for name, t in named_params}
        self.v = {name: np.zeros_like(t.data) for name, t in named_params}


def adam_update(state: AdamState, named_params: list[tuple[str, Tensor]]) -> None:
    """Apply one bias-corrected Adam step in place.

    Every parameter must carry a populated grad buffer (use
    :func:`zero_grads` before backward so untouched parameters hold exact
    zeros, which leaves them unchanged from a fresh state).
    """
    for name, t in named_params:
        if t.grad is None:
            raise OptimError(f"parameter {name!r} has no gradient; run backward first")
        if name not in state.m:
            raise OptimError(f"parameter {name!r} unknown to this optimizer state")
        if state.m[name].shape != t.data.shape:
            raise OptimError(f"parameter {name!r} changed shape since optimizer init")

    state.step += 1
    t_step = state.step
    c1 = 1.0 - state.beta1 ** t_step
    c2 = 1.0 - state.beta2 ** t_step
    for name, t in named_params:
        g = t.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        t.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def zero_grads(named_params: list[tuple[str, Tensor]]) -> None:
    for _, t in named_params:
        t.zero_grad()
