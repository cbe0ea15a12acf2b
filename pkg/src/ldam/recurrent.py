"""Gated recurrent cells and the bidirectional sequence encoder.

The cell follows the standard gating scheme: update gate z, reset gate r,
candidate state, and ``h_t = (1 - z) * h_prev + z * candidate`` with sigmoid
gates and a tanh candidate.  The step is a single autodiff node with a
hand-derived backward pass, which keeps recurrent graphs short; the
finite-difference suite in the tests pins the derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import Tensor, concat

__all__ = ["GruCellParams", "gru_step", "gru_sequence", "bigru_states", "bigru_sequence"]


@dataclass
class GruCellParams:
    """Weights of one GRU cell.

    W_* map the input (hidden x input), U_* map the previous hidden state
    (hidden x hidden), b_* are bias vectors (hidden).
    """

    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_h: Tensor
    U_h: Tensor
    b_h: Tensor

    def __post_init__(self):
        h, i = self.W_z.shape
        for name, t in self.tensors():
            want = (h, i) if name.startswith("W") else (h, h) if name.startswith("U") else (h,)
            if t.shape != want:
                raise DimensionError(f"GRU parameter {name} has shape {t.shape}, expected {want}")

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    def tensors(self):
        yield "W_z", self.W_z
        yield "U_z", self.U_z
        yield "b_z", self.b_z
        yield "W_r", self.W_r
        yield "U_r", self.U_r
        yield "b_r", self.b_r
        yield "W_h", self.W_h
        yield "U_h", self.U_h
        yield "b_h", self.b_h

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator,
             trainable: bool = True) -> "GruCellParams":
        """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""

        def w(fan_in, shape):
            bound = 1.0 / np.sqrt(fan_in)
            return Tensor(rng.uniform(-bound, bound, shape), requires_grad=trainable)

        def b():
            return Tensor(np.zeros(hidden_size), requires_grad=trainable)

        return cls(
            W_z=w(input_size, (hidden_size, input_size)),
            U_z=w(hidden_size, (hidden_size, hidden_size)),
            b_z=b(),
            W_r=w(input_size, (hidden_size, input_size)),
            U_r=w(hidden_size, (hidden_size, hidden_size)),
            b_r=b(),
            W_h=w(input_size, (hidden_size, input_size)),
            U_h=w(hidden_size, (hidden_size, hidden_size)),
            b_h=b(),
        )


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-a))


def _gru_step_2d(p: GruCellParams, x: Tensor, h: Tensor) -> Tensor:
    """One cell step on batched rows: x is B x input, h is B x hidden."""
    Wz, Uz, bz = p.W_z.data, p.U_z.data, p.b_z.data
    Wr, Ur, br = p.W_r.data, p.U_r.data, p.b_r.data
    Wh, Uh, bh = p.W_h.data, p.U_h.data, p.b_h.data

    z = _sigmoid(x.data @ Wz.T + h.data @ Uz.T + bz)
    r = _sigmoid(x.data @ Wr.T + h.data @ Ur.T + br)
    rh = r * h.data
    c = np.tanh(x.data @ Wh.T + rh @ Uh.T + bh)
    out = h.data + z * (c - h.data)

    def bwd(g):
        gz_pre = g * (c - h.data) * z * (1.0 - z)
        gc_pre = g * z * (1.0 - c * c)
        g_rh = gc_pre @ Uh
        gr_pre = g_rh * h.data * r * (1.0 - r)
        if h.requires_grad:
            gh = g * (1.0 - z) + g_rh * r + gz_pre @ Uz + gr_pre @ Ur
            h._accumulate(gh)
        if x.requires_grad:
            x._accumulate(gz_pre @ Wz + gr_pre @ Wr + gc_pre @ Wh)
        if p.W_z.requires_grad:
            p.W_z._accumulate(gz_pre.T @ x.data)
            p.U_z._accumulate(gz_pre.T @ h.data)
            p.b_z._accumulate(gz_pre.sum(axis=0))
            p.W_r._accumulate(gr_pre.T @ x.data)
            p.U_r._accumulate(gr_pre.T @ h.data)
            p.b_r._accumulate(gr_pre.sum(axis=0))
            p.W_h._accumulate(gc_pre.T @ x.data)
            p.U_h._accumulate(gc_pre.T @ rh)
            p.b_h._accumulate(gc_pre.sum(axis=0))

    parents = (x, h) + tuple(t for _, t in p.tensors())
    return Tensor._node(out, parents, bwd)


def gru_step(params: GruCellParams, x_t: Tensor, h_prev: Tensor) -> Tensor:
    """Advance the cell one step; accepts vectors or batched row matrices."""
    if x_t.ndim == 1 and h_prev.ndim == 1:
        if x_t.shape[0] != params.input_size or h_prev.shape[0] != params.hidden_size:
            raise DimensionError(
                f"gru_step got x {x_t.shape}, h {h_prev.shape} for cell "
                f"(input={params.input_size}, hidden={params.hidden_size})")
        out = _gru_step_2d(params, x_t.reshape((1, -1)), h_prev.reshape((1, -1)))
        return out.reshape((params.hidden_size,))
    if x_t.ndim == 2 and h_prev.ndim == 2:
        if (x_t.shape[1] != params.input_size or h_prev.shape[1] != params.hidden_size
                or x_t.shape[0] != h_prev.shape[0]):
            raise DimensionError(
                f"gru_step got x {x_t.shape}, h {h_prev.shape} for cell "
                f"(input={params.input_size}, hidden={params.hidden_size})")
        return _gru_step_2d(params, x_t, h_prev)
    raise DimensionError(f"gru_step expects matching 1-D or 2-D inputs, got {x_t.shape}, {h_prev.shape}")


def gru_sequence(p: GruCellParams, xs: Tensor, reverse: bool = False) -> Tensor:
    """All hidden states of one direction over a T x B x input tensor.

    The whole recurrence is a single autodiff node: input projections for
    every step are batched into one matmul, the time loop only carries the
    hidden-state recursion, and the backward pass runs truncated-free BPTT
    with the weight gradients again assembled by batched matmuls.  The
    returned tensor is T x B x hidden, indexed by time (for ``reverse``,
    entry t is the state emitted after scanning from the end down to t).
    """
    if xs.ndim != 3:
        raise DimensionError(f"gru_sequence expects T x B x input, got {xs.shape}")
    t_len, batch, n_in = xs.shape
    if t_len == 0:
        raise DimensionError("gru over an empty sequence")
    if n_in != p.input_size:
        raise DimensionError(f"input size {n_in} does not match cell input {p.input_size}")
    hsize = p.hidden_size
    Uh, Wh, bh = p.U_h.data, p.W_h.data, p.b_h.data
    # The z and r gates share their matmuls: weights stacked z-first.
    Wzr = np.concatenate([p.W_z.data, p.W_r.data])
    Uzr = np.concatenate([p.U_z.data, p.U_r.data])
    bzr = np.concatenate([p.b_z.data, p.b_r.data])

    flat = xs.data.reshape(t_len * batch, n_in)
    x_zr = (flat @ Wzr.T + bzr).reshape(t_len, batch, 2 * hsize)
    x_h = (flat @ Wh.T + bh).reshape(t_len, batch, hsize)

    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    gates = np.empty((t_len, batch, 2 * hsize))
    cs = np.empty((t_len, batch, hsize))
    hs = np.empty((t_len, batch, hsize))
    h = np.zeros((batch, hsize))
    UzrT = np.ascontiguousarray(Uzr.T)
    UhT = np.ascontiguousarray(Uh.T)
    for t in order:
        zr = gates[t]
        np.matmul(h, UzrT, out=zr)
        zr += x_zr[t]
        np.negative(zr, out=zr)
        np.exp(zr, out=zr)
        zr += 1.0
        np.reciprocal(zr, out=zr)
        z, r = zr[:, :hsize], zr[:, hsize:]
        c = cs[t]
        np.matmul(r * h, UhT, out=c)
        c += x_h[t]
        np.tanh(c, out=c)
        h_new = hs[t]
        np.subtract(c, h, out=h_new)
        h_new *= z
        h_new += h
        h = h_new

    # Previous-state array in iteration order (zeros before the first step).
    h_prev = np.zeros_like(hs)
    if reverse:
        h_prev[:t_len - 1] = hs[1:]
    else:
        h_prev[1:] = hs[:t_len - 1]

    def bwd(g):
        # Recurrence-independent factors, vectorized over all steps.
        dc = 1.0 - cs * cs
        sig_deriv = gates * (1.0 - gates)
        c_minus_hp = cs - h_prev
        gzr_pre = np.empty_like(gates)
        gc_pre = np.empty_like(cs)
        gh_next = np.zeros((batch, hsize))
        for t in reversed(order):
            gh = g[t] + gh_next
            zr, hp = gates[t], h_prev[t]
            z, r = zr[:, :hsize], zr[:, hsize:]
            gc = gc_pre[t]
            np.multiply(gh, z, out=gc)
            gc *= dc[t]
            g_rh = gc @ Uh
            pre = gzr_pre[t]
            np.multiply(gh, c_minus_hp[t], out=pre[:, :hsize])
            np.multiply(g_rh, hp, out=pre[:, hsize:])
            pre *= sig_deriv[t]
            gh_next = gh * (1.0 - z) + g_rh * r + pre @ Uzr

        flat_gzr = gzr_pre.reshape(t_len * batch, 2 * hsize)
        flat_gc = gc_pre.reshape(t_len * batch, hsize)
        if p.W_z.requires_grad:
            flat_hp = h_prev.reshape(t_len * batch, hsize)
            flat_rh = (gates[:, :, hsize:] * h_prev).reshape(t_len * batch, hsize)
            gw_zr = flat_gzr.T @ flat
            gu_zr = flat_gzr.T @ flat_hp
            gb_zr = flat_gzr.sum(axis=0)
            p.W_z._accumulate(gw_zr[:hsize])
            p.W_r._accumulate(gw_zr[hsize:])
            p.U_z._accumulate(gu_zr[:hsize])
            p.U_r._accumulate(gu_zr[hsize:])
            p.b_z._accumulate(gb_zr[:hsize])
            p.b_r._accumulate(gb_zr[hsize:])
            p.W_h._accumulate(flat_gc.T @ flat)
            p.U_h._accumulate(flat_gc.T @ flat_rh)
            p.b_h._accumulate(flat_gc.sum(axis=0))
        if xs.requires_grad:
            gx = flat_gzr @ Wzr
            gx += flat_gc @ Wh
            xs._accumulate(gx.reshape(t_len, batch, n_in))

    parents = (xs,) + tuple(t for _, t in p.tensors())
    return Tensor._node(hs, parents, bwd)


def bigru_states(fwd: GruCellParams, bwd: GruCellParams, xs: Tensor) -> tuple[Tensor, Tensor]:
    """Both directions over T x B x input; returns (states, last).

    states is T x B x 2H with the forward half first; last is B x 2H made
    of each direction's final state (time T-1 forward, time 0 backward).
    """
    if fwd.hidden_size != bwd.hidden_size or fwd.input_size != bwd.input_size:
        raise DimensionError("forward and backward cells must have matching sizes")
    t_len = xs.shape[0]
    f = gru_sequence(fwd, xs, reverse=False)
    b = gru_sequence(bwd, xs, reverse=True)
    states = concat([f, b], axis=2)
    last = concat([f[t_len - 1], b[0]], axis=1)
    return states, last


def bigru_sequence(fwd: GruCellParams, bwd: GruCellParams,
                   xs: Tensor) -> tuple[Tensor, Tensor]:
    """Encode a T x input sequence bidirectionally.

    Returns (states, last) where states is T x F with
    ``states[t] = concat(h_fwd[t], h_bwd[t])`` and last is the length-F
    concatenation of each direction's final state; F = 2 * hidden size.
    """
    if xs.ndim != 2:
        raise DimensionError(f"bigru_sequence expects a T x input tensor, got {xs.shape}")
    t_len = xs.shape[0]
    if t_len == 0:
        raise DimensionError("bigru over an empty sequence")
    states, last = bigru_states(fwd, bwd, xs.reshape((t_len, 1, fwd.input_size)))
    return states.reshape((t_len, 2 * fwd.hidden_size)), last.reshape((2 * fwd.hidden_size,))
