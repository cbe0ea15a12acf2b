"""The label-dependent attention network.

Text branch: token embeddings and label-name embeddings are projected by a
shared linear map f1, their scaled dot product is sharpened by a same-padded
1-D convolution, max-pooled across channels, and softmax-normalized into
token weights; the weighted token sum, projected by f1 again, is the text
vector.  Time-series branch: each indicator channel runs through a shared
bidirectional GRU, a second shared BiGRU integrates along time, and the
channel states are mixed by attention between indicator-name and label-name
embeddings.  A two-layer head on the concatenated branch vectors produces
per-label probabilities.  The training objective adds a label-discrimination
term that pushes the projected label-name embeddings apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import EhrSample, TaskSchema
from .embeddings import EmbeddingProvider, embed_names, embed_note
from .errors import ConfigError, DimensionError
from .recurrent import GruCellParams, bigru_states
from .tensor import (Tensor, affine_cols, affine_rows, concat, conv1d_same,
                     matmul, maxpool_channels, relu, sigmoid, softmax)

__all__ = [
    "ModelConfig",
    "ModelParams",
    "ForwardOutput",
    "TaskEmbeddings",
    "build_task_embeddings",
    "cross_attention_scores",
    "self_attention_scores",
    "text_forward",
    "timeseries_forward",
    "fuse_predict",
    "loss",
    "forward",
    "forward_batch",
]

MODES = ("multimodal", "text_only", "timeseries_only")
ATTENTION_KINDS = ("cross", "self")

PROB_EPS = 1e-12


@dataclass
class ModelConfig:
    """Hyperparameters and structural switches.

    F must be even (two recurrent directions); k1 and ts_k1 must be odd for
    symmetric same padding.  ts_k1 defaults to 1: indicator channels carry
    no spatial order, and width 1 keeps channel attention equivariant under
    channel permutations.  conv_channels=None means "match the convolution's
    input channel count".
    """

    n_indicators: int
    n_labels: int
    T: int
    D: int = 64
    F: int = 32
    L_max: int = 512
    k1: int = 3
    ts_k1: int = 1
    conv_channels: int | None = None
    mode: str = "multimodal"
    attention: str = "cross"
    lambda_label: float = 1.0

    def __post_init__(self):
        if self.F % 2 != 0:
            raise ConfigError(f"F must be even, got {self.F}")
        if self.k1 % 2 == 0 or self.ts_k1 % 2 == 0:
            raise ConfigError("conv widths must be odd for same padding")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.attention not in ATTENTION_KINDS:
            raise ConfigError(f"attention must be one of {ATTENTION_KINDS}, got {self.attention!r}")
        for name in ("n_indicators", "n_labels", "T", "D", "F", "L_max"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @classmethod
    def from_schema(cls, schema: TaskSchema, **kwargs) -> "ModelConfig":
        return cls(n_indicators=schema.n_indicators, n_labels=schema.n_labels,
                   T=schema.T, **kwargs)

    @property
    def text_conv_in(self) -> int:
        return self.n_labels if self.attention == "cross" else self.L_max

    @property
    def ts_conv_in(self) -> int:
        return self.n_labels if self.attention == "cross" else self.n_indicators

    def conv_out(self, conv_in: int) -> int:
        return self.conv_channels if self.conv_channels is not None else conv_in

    def text_active(self) -> bool:
        return self.mode in ("multimodal", "text_only")

    def timeseries_active(self) -> bool:
        return self.mode in ("multimodal", "timeseries_only")


class ModelParams:
    """All trainable weights, created from a seeded RNG.

    Matrices are uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero.
    The head accepts the concatenated branch vectors (2F) and maps through
    an F-wide layer to the label logits; the F-wide layer output size is
    pinned by the label-discrimination term, which applies the final layer
    directly to f1-projected label embeddings.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        F, D = config.F, config.D

        def mat(fan_in, shape):
            bound = 1.0 / math.sqrt(fan_in)
            return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

        def vec(n):
            return Tensor(np.zeros(n), requires_grad=True)

        self.f1_W = mat(D, (F, D))
        self.f1_b = vec(F)
        tc_in, tc_out = config.text_conv_in, config.conv_out(config.text_conv_in)
        self.text_conv_K = mat(tc_in * config.k1, (tc_out, tc_in, config.k1))
        self.text_conv_b = vec(tc_out)
        sc_in, sc_out = config.ts_conv_in, config.conv_out(config.ts_conv_in)
        self.ts_conv_K = mat(sc_in * config.ts_k1, (sc_out, sc_in, config.ts_k1))
        self.ts_conv_b = vec(sc_out)
        hidden = F // 2
        self.gru_channel_fwd = GruCellParams.init(1, hidden, rng)
        self.gru_channel_bwd = GruCellParams.init(1, hidden, rng)
        self.gru_integrate_fwd = GruCellParams.init(F, hidden, rng)
        self.gru_integrate_bwd = GruCellParams.init(F, hidden, rng)
        self.f6_W = mat(2 * F, (F, 2 * F))
        self.f6_b = vec(F)
        self.f7_W = mat(F, (config.n_labels, F))
        self.f7_b = vec(config.n_labels)

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = [("f1_W", self.f1_W), ("f1_b", self.f1_b),
               ("text_conv_K", self.text_conv_K), ("text_conv_b", self.text_conv_b),
               ("ts_conv_K", self.ts_conv_K), ("ts_conv_b", self.ts_conv_b)]
        for cell_name in ("gru_channel_fwd", "gru_channel_bwd",
                          "gru_integrate_fwd", "gru_integrate_bwd"):
            cell: GruCellParams = getattr(self, cell_name)
            out.extend((f"{cell_name}.{n}", t) for n, t in cell.tensors())
        out.extend([("f6_W", self.f6_W), ("f6_b", self.f6_b),
                    ("f7_W", self.f7_W), ("f7_b", self.f7_b)])
        return out

    def check_finite(self) -> bool:
        return all(t.check_finite() for _, t in self.named_tensors())


@dataclass
class ForwardOutput:
    """Per-sample prediction plus the attention traces behind it."""

    y_hat: np.ndarray
    beta: np.ndarray | None
    alpha: np.ndarray | None
    z_m: np.ndarray | None
    z_s: np.ndarray | None


@dataclass
class TaskEmbeddings:
    """Frozen embedding inputs shared by every forward pass of a run."""

    provider: EmbeddingProvider
    e_indicators: Tensor  # D x N_S
    e_labels: Tensor      # D x N_Y


def build_task_embeddings(provider: EmbeddingProvider, schema: TaskSchema,
                          config: ModelConfig) -> TaskEmbeddings:
    """Embed the schema's names once; verifies one shared dimension D."""
    if provider.dim != config.D:
        raise ConfigError(f"provider dim {provider.dim} != config D {config.D}")
    if (schema.n_indicators, schema.n_labels) != (config.n_indicators, config.n_labels):
        raise ConfigError("schema and config disagree on indicator/label counts")
    if schema.T != config.T:
        raise ConfigError(f"schema T {schema.T} != config T {config.T}")
    return TaskEmbeddings(provider=provider,
                          e_indicators=embed_names(provider, schema.indicator_names),
                          e_labels=embed_names(provider, schema.label_names))


def _project(params: ModelParams, x: Tensor) -> Tensor:
    """The shared f1 map applied column-wise to a D x n matrix."""
    return affine_cols(params.f1_W, params.f1_b, x)


def _scores_from_grid(grid: Tensor, conv_K: Tensor, conv_b: Tensor) -> Tensor:
    """softmax(maxpool_channels(relu(conv1d_same(grid^T)))) for an n x C grid."""
    x = grid.T
    n_channels = x.shape[0]
    if conv_K.shape[1] > n_channels:
        # Unused kernel input channels pair with implicit zero channels.
        conv_K = conv_K[:, :n_channels, :]
    elif conv_K.shape[1] < n_channels:
        raise DimensionError(
            f"attention grid has {n_channels} channels, conv accepts {conv_K.shape[1]}")
    return softmax(maxpool_channels(relu(conv1d_same(x, conv_K, conv_b))))


def cross_attention_scores(e_feat: Tensor, e_lab: Tensor, conv_K: Tensor,
                           conv_b: Tensor, params: ModelParams) -> Tensor:
    """Length-n convex weights from feature/label embedding similarity.

    Both sides go through the shared projection; the n x N_Y scaled dot
    grid is then convolved, max-pooled across label channels, and softmax
    normalized.  The same routine serves note tokens (n = L) and indicator
    channels (n = N_S), with separate convolution parameters.
    """
    if e_feat.shape[1] < 1:
        raise DimensionError("attention over zero feature columns")
    pf = _project(params, e_feat)
    pl = _project(params, e_lab)
    grid = matmul(pf.T, pl) / math.sqrt(params.config.F)
    return _scores_from_grid(grid, conv_K, conv_b)


def self_attention_scores(e_feat: Tensor, conv_K: Tensor, conv_b: Tensor,
                          params: ModelParams) -> Tensor:
    """Cross-attention with the features standing in for the labels."""
    if e_feat.shape[1] < 1:
        raise DimensionError("attention over zero feature columns")
    pf = _project(params, e_feat)
    grid = matmul(pf.T, pf) / math.sqrt(params.config.F)
    return _scores_from_grid(grid, conv_K, conv_b)


def _branch_scores(e_feat: Tensor, e_lab: Tensor, conv_K: Tensor, conv_b: Tensor,
                   params: ModelParams) -> Tensor:
    if params.config.attention == "cross":
        return cross_attention_scores(e_feat, e_lab, conv_K, conv_b, params)
    return self_attention_scores(e_feat, conv_K, conv_b, params)


def text_forward(e_note: Tensor, e_labels: Tensor,
                 params: ModelParams) -> tuple[Tensor, Tensor]:
    """Token weights and the projected weighted token sum (z_m, length F)."""
    beta = _branch_scores(e_note, e_labels, params.text_conv_K, params.text_conv_b, params)
    weighted = matmul(e_note, beta.reshape((beta.shape[0], 1)))  # D x 1
    z_m = _project(params, weighted)
    return z_m.reshape((params.config.F,)), beta


def timeseries_forward(series: Tensor, e_indicators: Tensor, e_labels: Tensor,
                       params: ModelParams) -> tuple[Tensor, Tensor]:
    """Channel attention applied to per-channel recurrent summaries.

    Every channel's scalar sequence runs through the shared bidirectional
    cell; a second shared BiGRU integrates each channel's state sequence
    and its final state summarizes the channel.  The attention weights mix
    the channel summaries into z_s (length F).
    """
    if series.ndim != 2:
        raise DimensionError(f"series must be N_S x T, got {series.shape}")
    n_s, t_steps = series.shape
    if t_steps < 1 or n_s < 1:
        raise DimensionError("time-series branch needs at least one channel and one step")
    h_all = _encode_series_batch(series.data[None, :, :], params)  # 1 x N_S x F
    alpha = _branch_scores(e_indicators, e_labels, params.ts_conv_K, params.ts_conv_b, params)
    z_rows = channel_weighted_sum(h_all, alpha)  # 1 x F
    return z_rows.reshape((params.config.F,)), alpha


def _encode_series_batch(series: np.ndarray, params: ModelParams) -> Tensor:
    """B x N_S x T constant input -> B x N_S x F channel summaries."""
    b, n_s, t_steps = series.shape
    # Channels ride along the batch axis; both cells are shared across them.
    steps = Tensor(np.ascontiguousarray(series.transpose(2, 0, 1)).reshape(t_steps, b * n_s, 1))
    states, _ = bigru_states(params.gru_channel_fwd, params.gru_channel_bwd, steps)
    _, last = bigru_states(params.gru_integrate_fwd, params.gru_integrate_bwd, states)
    return last.reshape((b, n_s, params.config.F))


def channel_weighted_sum(h_all: Tensor, alpha: Tensor) -> Tensor:
    """sum_i alpha[i] * h_all[:, i, :] for a B x N_S x F stack."""
    if h_all.ndim != 3 or alpha.ndim != 1 or h_all.shape[1] != alpha.shape[0]:
        raise DimensionError(f"cannot mix {h_all.shape} with weights {alpha.shape}")
    out_data = np.einsum("bif,i->bf", h_all.data, alpha.data)

    def bwd(g):
        if h_all.requires_grad:
            h_all._accumulate(g[:, None, :] * alpha.data[None, :, None])
        if alpha.requires_grad:
            alpha._accumulate(np.einsum("bf,bif->i", g, h_all.data))

    return Tensor._node(out_data, (h_all, alpha), bwd)


def fuse_predict(z_m: Tensor | None, z_s: Tensor | None, params: ModelParams,
                 mode: str | None = None) -> Tensor:
    """Head on the concatenated branch vectors; absent branches are zeros."""
    mode = mode if mode is not None else params.config.mode
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    F = params.config.F
    zero = Tensor(np.zeros(F))
    zm = z_m if (z_m is not None and mode != "timeseries_only") else zero
    zs = z_s if (z_s is not None and mode != "text_only") else zero
    cat = concat([zm.reshape((1, F)), zs.reshape((1, F))], axis=1)
    logits = affine_rows(affine_rows(cat, params.f6_W, params.f6_b),
                         params.f7_W, params.f7_b)
    return sigmoid(logits).reshape((params.config.n_labels,))


def _bce_term(y_hat: Tensor, y_true: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over all (sample, label) cells."""
    p = y_hat.clip(PROB_EPS, 1.0 - PROB_EPS)
    y = Tensor(y_true.astype(np.float64))
    cell = y * p.log() + (1.0 - y) * (1.0 - p).log()
    return -cell.sum() / y_true.size


def _label_discrimination_term(e_labels: Tensor, params: ModelParams) -> Tensor:
    """Cross-entropy of softmax(f7(f1(label embedding j))) against class j."""
    v = affine_cols(params.f7_W, params.f7_b, _project(params, e_labels))  # N_Y x N_Y
    shift = v - v.data.max(axis=0)
    lse = shift.exp().sum(axis=0).log() + v.data.max(axis=0)
    gap = v.diag() - lse
    return -gap.sum() / params.config.n_labels


def loss(y_hat: Tensor, y_true: np.ndarray, e_labels: Tensor, params: ModelParams,
         lambda_label: float | None = None) -> Tensor:
    """Classification term plus weighted label-discrimination term."""
    lam = params.config.lambda_label if lambda_label is None else lambda_label
    total = _bce_term(y_hat.reshape((1, -1)), np.asarray(y_true).reshape(1, -1))
    if lam != 0.0:
        total = total + lam * _label_discrimination_term(e_labels, params)
    return total


@dataclass
class BatchForward:
    """Graph handles for one batched pass (used by the trainer)."""

    y_hat: Tensor                 # B x N_Y
    betas: list[Tensor] | None    # per sample, varying length
    alpha: Tensor | None          # N_S
    z_m_rows: Tensor | None       # B x F
    z_s_rows: Tensor | None       # B x F


def forward_batch(samples: list[EhrSample], task: TaskEmbeddings,
                  params: ModelParams) -> BatchForward:
    """One pass over a batch; recurrent work is vectorized across samples."""
    cfg = params.config
    b = len(samples)
    if b == 0:
        raise DimensionError("empty batch")

    z_m_rows = None
    betas = None
    if cfg.text_active():
        weighted_cols = []
        betas = []
        for s in samples:
            tokens = s.note_tokens[:cfg.L_max]
            e_note = embed_note(task.provider, tokens)
            beta = _branch_scores(e_note, task.e_labels, params.text_conv_K,
                                  params.text_conv_b, params)
            betas.append(beta)
            weighted_cols.append(matmul(e_note, beta.reshape((beta.shape[0], 1))))
        z_m_rows = _project(params, concat(weighted_cols, axis=1)).T  # B x F

    z_s_rows = None
    alpha = None
    if cfg.timeseries_active():
        series = np.stack([s.timeseries for s in samples])  # B x N_S x T
        if series.shape[1:] != (cfg.n_indicators, cfg.T):
            raise DimensionError(f"series batch shape {series.shape} does not match config")
        h_all = _encode_series_batch(series, params)
        alpha = _branch_scores(task.e_indicators, task.e_labels, params.ts_conv_K,
                               params.ts_conv_b, params)
        z_s_rows = channel_weighted_sum(h_all, alpha)

    F = cfg.F
    zm = z_m_rows if z_m_rows is not None else Tensor(np.zeros((b, F)))
    zs = z_s_rows if z_s_rows is not None else Tensor(np.zeros((b, F)))
    cat = concat([zm, zs], axis=1)
    logits = affine_rows(affine_rows(cat, params.f6_W, params.f6_b),
                         params.f7_W, params.f7_b)
    y_hat = sigmoid(logits)
    return BatchForward(y_hat=y_hat, betas=betas, alpha=alpha,
                        z_m_rows=z_m_rows, z_s_rows=z_s_rows)


def batch_loss(bf: BatchForward, samples: list[EhrSample], task: TaskEmbeddings,
               params: ModelParams) -> tuple[Tensor, float, float]:
    """Batch objective: mean per-sample classification loss + one
    label-discrimination term.  Returns (loss, term1 value, term2 value)."""
    y_true = np.stack([s.labels for s in samples])
    term1 = _bce_term(bf.y_hat, y_true)
    lam = params.config.lambda_label
    if lam != 0.0:
        term2 = _label_discrimination_term(task.e_labels, params)
        return term1 + lam * term2, float(term1.data), float(term2.data)
    return term1, float(term1.data), 0.0


def forward(sample: EhrSample, task: TaskEmbeddings, params: ModelParams,
            config: ModelConfig | None = None) -> ForwardOutput:
    """Full pass for one sample, recording the attention traces."""
    if config is not None and config is not params.config:
        params = _with_config(params, config)
    bf = forward_batch([sample], task, params)
    return ForwardOutput(
        y_hat=bf.y_hat.data[0].copy(),
        beta=bf.betas[0].data.copy() if bf.betas is not None else None,
        alpha=bf.alpha.data.copy() if bf.alpha is not None else None,
        z_m=bf.z_m_rows.data[0].copy() if bf.z_m_rows is not None else None,
        z_s=bf.z_s_rows.data[0].copy() if bf.z_s_rows is not None else None,
    )


def _with_config(params: ModelParams, config: ModelConfig) -> ModelParams:
    """Re-bind parameters to a compatible config (ablation switches only)."""
    old = params.config
    structural = ("n_indicators", "n_labels", "T", "D", "F", "L_max", "k1",
                  "ts_k1", "conv_channels", "attention")
    for name in structural:
        if getattr(old, name) != getattr(config, name):
            raise ConfigError(f"cannot rebind params across differing {name}")
    clone = object.__new__(ModelParams)
    clone.__dict__.update(params.__dict__)
    clone.config = config
    return clone
