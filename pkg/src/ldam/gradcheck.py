"""Central finite-difference gradient checking.

The checker re-evaluates a scalar-valued function twice per parameter
entry, so it never touches the reverse pass it is meant to verify.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad

__all__ = ["finite_difference_grads", "relative_error", "max_gradient_error"]


def finite_difference_grads(loss_fn, tensors: list[Tensor], eps: float = 1e-5) -> list[np.ndarray]:
    """d loss / d entry for every entry of every tensor, by central differences."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                hi = float(loss_fn().data)
            flat[i] = orig - eps
            with no_grad():
                lo = float(loss_fn().data)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-4) -> float:
    """max over entries of |a-b| / max(|a|, |b|, floor).

    The floor keeps finite-difference noise on near-zero derivatives from
    registering as disagreement.
    """
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def max_gradient_error(loss_fn, tensors: list[Tensor], eps: float = 1e-5) -> float:
    """Worst relative error between autodiff and finite-difference grads.

    ``loss_fn`` must rebuild the scalar loss from the current tensor values
    on every call.  Gradient buffers are zeroed, one reverse pass runs, and
    each tensor's grad is compared entrywise against central differences.
    """
    for t in tensors:
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = [t.grad.copy() for t in tensors]
    numeric = finite_difference_grads(loss_fn, tensors, eps=eps)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
