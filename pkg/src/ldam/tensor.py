"""Dense float64 tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array and, when it participates in a recorded
computation, remembers its parents and a closure that routes the incoming
gradient back to them.  Calling :meth:`Tensor.backward` on a scalar result
walks the recorded graph once, in reverse topological order, and fills the
``grad`` buffer of every tensor created with ``requires_grad=True``.

Only the primitives the risk model needs are implemented: matrix product,
same-padded 1-D convolution, channel max-pooling, the usual activations,
softmax, concatenation/stacking, and a handful of reductions.  Everything
is float64; there is no broadcasting beyond what the ops below state.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .errors import DimensionError, GraphError, ConfigError

__all__ = [
    "Tensor",
    "no_grad",
    "matmul",
    "conv1d_same",
    "maxpool_channels",
    "softmax",
    "relu",
    "sigmoid",
    "tanh",
    "concat",
    "stack",
    "logsumexp",
    "affine_cols",
    "affine_rows",
]

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    """A dense float64 array that can take part in reverse-mode autodiff.

    Attributes:
        data: the numpy value buffer (row-major float64).
        grad: gradient buffer of the same shape, or None before backward.
        requires_grad: leaf flag; gradients are accumulated only here and
            in intermediate nodes that depend on such a leaf.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._done = False

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape), requires_grad)

    @staticmethod
    def _node(data, parents, backward_fn) -> "Tensor":
        """Create a graph node; collapses to a constant when grads are off."""
        if _grad_enabled and any(p.requires_grad for p in parents):
            out = Tensor(data, requires_grad=True)
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
            return out
        return Tensor(data)

    # -- basic properties ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def check_finite(self) -> bool:
        """True when every value is finite (no NaN/Inf)."""
        return bool(np.isfinite(self.data).all())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def detach(self) -> "Tensor":
        """A constant tensor sharing this tensor's values."""
        return Tensor(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        """Reset the gradient buffer to zeros (allocating it if needed)."""
        if self.grad is None or self.grad.shape != self.data.shape:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    # -- reverse pass ----------------------------------------------------------

    def backward(self) -> None:
        """Propagate d(self)/d(leaf) into every reachable grad buffer.

        ``self`` must be a scalar produced by a recorded computation.  A
        second call on the same node is rejected: the graph's buffers have
        already been consumed and re-running would double-count.
        """
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._done:
            raise GraphError("backward() already ran for this graph; rebuild the loss")
        if not self.requires_grad:
            raise GraphError("loss is detached from any tensor that requires grad")

        # Iterative topological order; recursion would overflow on long
        # recurrent chains.
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
        self._done = True

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out_data = a.data + b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._node(out_data, (a, b), bwd)

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out_data = a.data * b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._node(out_data, (a, b), bwd)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other) -> "Tensor":
        return Tensor(other) + (-self)

    def __truediv__(self, scalar) -> "Tensor":
        if isinstance(scalar, Tensor):
            raise DimensionError("tensor/tensor division is not a primitive here")
        return self * (1.0 / float(scalar))

    # -- shape ops ---------------------------------------------------------

    def reshape(self, shape) -> "Tensor":
        src = self
        old_shape = self.data.shape

        def bwd(g):
            src._accumulate(g.reshape(old_shape))

        return Tensor._node(self.data.reshape(shape), (self,), bwd)

    @property
    def T(self) -> "Tensor":
        if self.data.ndim != 2:
            raise DimensionError("T is defined for 2-D tensors")
        src = self

        def bwd(g):
            src._accumulate(g.T)

        return Tensor._node(self.data.T, (self,), bwd)

    def __getitem__(self, idx) -> "Tensor":
        src = self
        out_data = self.data[idx]

        def bwd(g):
            full = np.zeros_like(src.data)
            np.add.at(full, idx, g)
            src._accumulate(full)

        return Tensor._node(out_data, (self,), bwd)

    def diag(self) -> "Tensor":
        """Diagonal of a square matrix as a vector."""
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise DimensionError(f"diag() needs a square matrix, got {self.shape}")
        n = self.data.shape[0]
        src = self

        def bwd(g):
            full = np.zeros_like(src.data)
            full[np.arange(n), np.arange(n)] = g
            src._accumulate(full)

        return Tensor._node(self.data.diagonal().copy(), (self,), bwd)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None) -> "Tensor":
        src = self
        in_shape = self.data.shape

        def bwd(g):
            if axis is None:
                src._accumulate(np.full(in_shape, g))
            else:
                src._accumulate(np.broadcast_to(np.expand_dims(g, axis), in_shape).copy())

        return Tensor._node(self.data.sum(axis=axis), (self,), bwd)

    def mean(self) -> "Tensor":
        return self.sum() / self.data.size

    # -- elementwise nonlinearities ---------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        src = self

        def bwd(g):
            src._accumulate(g * out_data)

        return Tensor._node(out_data, (self,), bwd)

    def log(self) -> "Tensor":
        src = self

        def bwd(g):
            src._accumulate(g / src.data)

        return Tensor._node(np.log(self.data), (self,), bwd)

    def clip(self, lo: float, hi: float) -> "Tensor":
        """Clamp values into [lo, hi]; gradient is zero outside the band."""
        src = self
        mask = (self.data >= lo) & (self.data <= hi)

        def bwd(g):
            src._accumulate(g * mask)

        return Tensor._node(np.clip(self.data, lo, hi), (self,), bwd)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- primitive operations ------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-D ``a`` (M x K) and 2-D ``b`` (K x N)."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor._node(out_data, (a, b), bwd)


def conv1d_same(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Same-padded 1-D cross-correlation.

    ``x`` is C_in x L, ``kernels`` is C_out x C_in x k with odd k, ``bias``
    is C_out.  The output is C_out x L: position l of output channel o is
    ``bias[o] + sum_{c,t} kernels[o,c,t] * x[c, l + t - (k-1)/2]`` with zero
    padding outside [0, L).  No kernel flip is applied.
    """
    if x.ndim != 2:
        raise DimensionError(f"conv1d_same input must be C_in x L, got {x.shape}")
    if kernels.ndim != 3:
        raise DimensionError(f"kernels must be C_out x C_in x k, got {kernels.shape}")
    c_out, c_in, k = kernels.shape
    if k % 2 == 0:
        raise ConfigError(f"same padding needs an odd kernel width, got k={k}")
    if x.shape[0] != c_in:
        raise DimensionError(f"input has {x.shape[0]} channels, kernels expect {c_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"bias must have shape ({c_out},), got {bias.shape}")

    L = x.shape[1]
    pad = (k - 1) // 2
    xp = np.zeros((c_in, L + 2 * pad))
    xp[:, pad:pad + L] = x.data
    out_data = np.repeat(bias.data[:, None], L, axis=1)
    for t in range(k):
        out_data += kernels.data[:, :, t] @ xp[:, t:t + L]

    def bwd(g):
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=1))
        if kernels.requires_grad:
            gk = np.empty_like(kernels.data)
            for t in range(k):
                gk[:, :, t] = g @ xp[:, t:t + L].T
            kernels._accumulate(gk)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for t in range(k):
                gxp[:, t:t + L] += kernels.data[:, :, t].T @ g
            x._accumulate(gxp[:, pad:pad + L])

    return Tensor._node(out_data, (x, kernels, bias), bwd)


def maxpool_channels(x: Tensor) -> Tensor:
    """Reduce a C x L tensor to length L by taking the max over channels.

    The gradient is routed to the winning channel only; ties go to the
    lowest channel index.
    """
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionError(f"maxpool_channels needs a non-empty C x L tensor, got {x.shape}")
    arg = np.argmax(x.data, axis=0)  # first index on ties
    cols = np.arange(x.shape[1])
    out_data = x.data[arg, cols]

    def bwd(g):
        full = np.zeros_like(x.data)
        full[arg, cols] = g
        x._accumulate(full)

    return Tensor._node(out_data, (x,), bwd)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax of a 1-D tensor; outputs are positive and sum to 1."""
    if x.ndim != 1:
        raise DimensionError(f"softmax expects a vector, got {x.shape}")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    s = e / e.sum()

    def bwd(g):
        x._accumulate(s * (g - np.dot(g, s)))

    return Tensor._node(s, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bwd(g):
        x._accumulate(g * mask)

    return Tensor._node(x.data * mask, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        x._accumulate(g * out_data * (1.0 - out_data))

    return Tensor._node(out_data, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def bwd(g):
        x._accumulate(g * (1.0 - out_data * out_data))

    return Tensor._node(out_data, (x,), bwd)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along an existing axis."""
    if not parts:
        raise DimensionError("concat of an empty list")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    splits = np.cumsum([p.data.shape[axis] for p in parts])[:-1]

    def bwd(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            if p.requires_grad:
                p._accumulate(piece)

    return Tensor._node(out_data, tuple(parts), bwd)


def stack(parts: list[Tensor], axis: int = 0) -> Tensor:
    """Stack same-shaped tensors along a new axis."""
    if not parts:
        raise DimensionError("stack of an empty list")
    out_data = np.stack([p.data for p in parts], axis=axis)

    def bwd(g):
        for i, p in enumerate(parts):
            if p.requires_grad:
                p._accumulate(np.take(g, i, axis=axis))

    return Tensor._node(out_data, tuple(parts), bwd)


def logsumexp(x: Tensor) -> Tensor:
    """log(sum(exp(x))) for a vector, computed around the detached max."""
    m = float(x.data.max())
    return (x - m).exp().sum().log() + m


def affine_cols(w: Tensor, b: Tensor, x: Tensor) -> Tensor:
    """Column-wise linear map: W @ X + b per column (X is in_dim x n)."""
    if w.ndim != 2 or x.ndim != 2 or w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
        raise DimensionError(f"affine_cols shapes: W {w.shape}, b {b.shape}, X {x.shape}")
    out_data = w.data @ x.data + b.data[:, None]

    def bwd(g):
        if w.requires_grad:
            w._accumulate(g @ x.data.T)
        if b.requires_grad:
            b._accumulate(g.sum(axis=1))
        if x.requires_grad:
            x._accumulate(w.data.T @ g)

    return Tensor._node(out_data, (w, b, x), bwd)


def affine_rows(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Row-wise linear map: X @ W^T + b per row (X is batch x in_dim)."""
    if w.ndim != 2 or x.ndim != 2 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise DimensionError(f"affine_rows shapes: X {x.shape}, W {w.shape}, b {b.shape}")
    out_data = x.data @ w.data.T + b.data

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g @ w.data)
        if w.requires_grad:
            w._accumulate(g.T @ x.data)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    return Tensor._node(out_data, (x, w, b), bwd)
