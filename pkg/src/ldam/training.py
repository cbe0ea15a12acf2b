"""Minibatch training loop, evaluation driver, and run logging.

One step per minibatch: batched forward, per-sample classification losses
averaged (so the learning rate does not depend on batch size), the
label-discrimination term added once, a single reverse pass, one Adam
update.  Everything is deterministic given the seed; shuffling draws from
one generator whose state rides along in resumable checkpoints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import TrainState, provider_info, save_checkpoint
from .data import EhrSample, TaskSchema
from .embeddings import EmbeddingProvider
from .errors import ConfigError, MetricsError, NonFiniteLossError
from .metrics import MetricsReport, evaluate_predictions, roc_auc
from .model import (ModelConfig, ModelParams, TaskEmbeddings, batch_loss,
                    build_task_embeddings, forward_batch)
from .optim import AdamState, adam_update, zero_grads
from .tensor import no_grad

__all__ = ["TrainConfig", "TrainLog", "EpochRecord", "train", "evaluate",
           "predict_matrix"]


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    shuffle: bool = True
    checkpoint_every: int = 0          # epochs between checkpoints; 0 disables
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    term1: float
    term2: float
    val_micro_auc: float | None
    seconds: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def val_aucs(self) -> list[float | None]:
        return [r.val_micro_auc for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss,term1,term2,val_micro_auc,seconds\n")
            for r in self.records:
                auc = "" if r.val_micro_auc is None else repr(r.val_micro_auc)
                fh.write(f"{r.epoch},{r.loss!r},{r.term1!r},{r.term2!r},{auc},{r.seconds:.3f}\n")


def predict_matrix(dataset: list[EhrSample], params: ModelParams, task: TaskEmbeddings,
                   batch_size: int = 64) -> np.ndarray:
    """Stacked probabilities for a dataset, computed without recording."""
    rows = []
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            bf = forward_batch(dataset[start:start + batch_size], task, params)
            rows.append(bf.y_hat.data)
    return np.concatenate(rows, axis=0)


def train(dataset: list[EhrSample], val_dataset: list[EhrSample] | None,
          model_cfg: ModelConfig, train_cfg: TrainConfig,
          provider: EmbeddingProvider, schema: TaskSchema,
          checkpoint_dir=None, final_checkpoint=None,
          provider_source_path=None, resume: TrainState | None = None,
          initial_params: ModelParams | None = None) -> tuple[ModelParams, TrainLog]:
    """Run the minibatch loop; returns the final weights and per-epoch log.

    With ``resume`` (and the matching ``initial_params`` from the same
    checkpoint), training continues exactly where it stopped: optimizer
    moments, epoch numbering, and the shuffle stream all carry over, so a
    split run reproduces an uninterrupted one.  ``final_checkpoint`` names
    a file that receives the resumable end-of-run state.
    """
    if not dataset:
        raise ConfigError("training dataset is empty")
    for s in dataset:
        s.validate(schema)

    task = build_task_embeddings(provider, schema, model_cfg)

    rng = np.random.default_rng(train_cfg.seed)
    if resume is not None:
        if initial_params is None:
            raise ConfigError("resume needs the checkpointed parameters")
        params = initial_params
        adam = resume.adam
        adam.lr = train_cfg.lr
        rng.bit_generator.state = resume.rng_state
        start_epoch = resume.epoch
    else:
        params = initial_params if initial_params is not None else ModelParams(
            model_cfg, seed=train_cfg.seed)
        adam = AdamState(params.named_tensors(), lr=train_cfg.lr)
        start_epoch = 0

    named = params.named_tensors()
    n = len(dataset)
    log = TrainLog()
    best_auc = -np.inf
    stale = 0

    for epoch in range(start_epoch + 1, start_epoch + train_cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n) if train_cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        t1_sum = 0.0
        t2_sum = 0.0
        for b_idx, start in enumerate(range(0, n, train_cfg.batch_size)):
            batch = [dataset[k] for k in order[start:start + train_cfg.batch_size]]
            zero_grads(named)
            bf = forward_batch(batch, task, params)
            total, t1, t2 = batch_loss(bf, batch, task, params)
            if not np.isfinite(total.data):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, batch {b_idx} "
                    f"(term1={t1}, term2={t2})",
                    epoch=epoch, batch=b_idx, term1=t1, term2=t2)
            total.backward()
            adam_update(adam, named)
            loss_sum += float(total.data) * len(batch)
            t1_sum += t1 * len(batch)
            t2_sum += t2 * len(batch)

        val_auc = None
        if val_dataset:
            y_hat = predict_matrix(val_dataset, params, task)
            y = np.stack([s.labels for s in val_dataset])
            try:
                val_auc = roc_auc(y_hat, y, "micro")
            except MetricsError:
                val_auc = None

        log.records.append(EpochRecord(
            epoch=epoch, loss=loss_sum / n, term1=t1_sum / n, term2=t2_sum / n,
            val_micro_auc=val_auc, seconds=time.perf_counter() - t0))

        if checkpoint_dir is not None and train_cfg.checkpoint_every > 0 \
                and (epoch - start_epoch) % train_cfg.checkpoint_every == 0:
            state = TrainState(epoch=epoch, adam=adam, rng_state=rng.bit_generator.state)
            save_checkpoint(f"{checkpoint_dir}/checkpoint_epoch{epoch:04d}.ldam",
                            params, schema=schema,
                            provider=provider_info(provider, provider_source_path),
                            train_state=state)

        if train_cfg.early_stop_patience is not None and val_auc is not None:
            if val_auc > best_auc:
                best_auc = val_auc
                stale = 0
            else:
                stale += 1
                if stale >= train_cfg.early_stop_patience:
                    break

    if final_checkpoint is not None:
        state = TrainState(epoch=log.records[-1].epoch if log.records else start_epoch,
                           adam=adam, rng_state=rng.bit_generator.state)
        save_checkpoint(final_checkpoint, params, schema=schema,
                        provider=provider_info(provider, provider_source_path),
                        train_state=state)
    return params, log


def evaluate(dataset: list[EhrSample], params: ModelParams, provider: EmbeddingProvider,
             schema: TaskSchema, threshold: float = 0.5) -> MetricsReport:
    """Forward passes only; delegates scoring to the metrics module."""
    if not dataset:
        raise ConfigError("evaluation dataset is empty")
    if not params.check_finite():
        raise ConfigError("parameters contain non-finite values")
    task = build_task_embeddings(provider, schema, params.config)
    y_hat = predict_matrix(dataset, params, task)
    y = np.stack([s.labels for s in dataset])
    return evaluate_predictions(y_hat, y, threshold=threshold)
