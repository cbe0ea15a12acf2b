"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..7    magic ``b"LDAMCKPT"``
    bytes 8..11   format version (uint32), currently 1
    bytes 12..19  metadata length M (uint64)
    bytes 20..    UTF-8 JSON metadata (M bytes)
    then          raw float64 buffers, contiguous row-major, in the exact
                  order their shapes are declared in the metadata

The metadata object holds the model config, the task schema, a description
of the embedding provider, the parameter names/shapes, and (for resumable
training checkpoints) the optimizer moments, step counter, epoch index,
and shuffle RNG state.  Buffers are written bit-exact, so a load/save
round trip reproduces forward passes bitwise.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .data import TaskSchema
from .embeddings import EmbeddingProvider
from .errors import CheckpointError
from .model import ModelConfig, ModelParams
from .optim import AdamState

__all__ = ["TrainState", "Checkpoint", "save_checkpoint", "load_checkpoint",
           "provider_from_info", "provider_info"]

_MAGIC = b"LDAMCKPT"
_VERSION = 1


@dataclass
class TrainState:
    """Everything beyond the weights needed to resume training exactly."""

    epoch: int
    adam: AdamState
    rng_state: dict


@dataclass
class Checkpoint:
    config: ModelConfig
    schema: TaskSchema | None
    provider: dict | None
    params: ModelParams
    train_state: TrainState | None


def provider_info(provider: EmbeddingProvider, path: str | None = None) -> dict:
    if provider.source == "toy":
        return {"source": "toy", "seed": provider.toy_seed, "dim": provider.dim}
    return {"source": "file", "path": str(path) if path else None, "dim": provider.dim}


def provider_from_info(info: dict) -> EmbeddingProvider:
    if info["source"] == "toy":
        return EmbeddingProvider.toy(info["seed"], info["dim"])
    if info.get("path"):
        return EmbeddingProvider.from_file(info["path"])
    raise CheckpointError("checkpoint references a file provider without a usable path; "
                          "pass the embeddings file explicitly")


def save_checkpoint(path, params: ModelParams, schema: TaskSchema | None = None,
                    provider: dict | None = None,
                    train_state: TrainState | None = None) -> None:
    named = params.named_tensors()
    meta: dict = {
        "config": asdict(params.config),
        "schema": None if schema is None else {
            "indicator_names": schema.indicator_names,
            "label_names": schema.label_names,
            "T": schema.T,
        },
        "provider": provider,
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in named],
        "train_state": None,
    }
    buffers = [t.data for _, t in named]
    if train_state is not None:
        adam = train_state.adam
        meta["train_state"] = {
            "epoch": train_state.epoch,
            "step": adam.step,
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "rng_state": train_state.rng_state,
        }
        for name, _t in named:
            buffers.append(adam.m[name])
        for name, _t in named:
            buffers.append(adam.v[name])

    blob = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for buf in buffers:
            fh.write(np.ascontiguousarray(buf, dtype=np.float64).tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"corrupt checkpoint: truncated while reading {what}")
    return data


def load_checkpoint(path) -> Checkpoint:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise CheckpointError(f"cannot open checkpoint: {exc}") from None
    with fh:
        if _read_exact(fh, 8, "magic") != _MAGIC:
            raise CheckpointError("corrupt checkpoint: bad magic, not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<Q", _read_exact(fh, 8, "metadata length"))
        try:
            meta = json.loads(_read_exact(fh, meta_len, "metadata").decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint: unreadable metadata ({exc})") from None

        try:
            config = ModelConfig(**meta["config"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"corrupt checkpoint: bad config ({exc})") from None
        params = ModelParams(config, seed=0)
        declared = meta.get("tensors", [])
        named = params.named_tensors()
        if [d["name"] for d in declared] != [n for n, _ in named]:
            raise CheckpointError("corrupt checkpoint: tensor list does not match the config")
        for (name, tensor), decl in zip(named, declared):
            shape = tuple(decl["shape"])
            if shape != tensor.shape:
                raise CheckpointError(
                    f"corrupt checkpoint: tensor {name} has shape {shape}, expected {tensor.shape}")
            raw = _read_exact(fh, tensor.data.size * 8, f"tensor {name}")
            tensor.data = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

        schema = None
        if meta.get("schema"):
            s = meta["schema"]
            schema = TaskSchema(list(s["indicator_names"]), list(s["label_names"]), int(s["T"]))

        train_state = None
        if meta.get("train_state"):
            ts = meta["train_state"]
            adam = AdamState(named, lr=ts["lr"], beta1=ts["beta1"],
                             beta2=ts["beta2"], eps=ts["eps"])
            adam.step = int(ts["step"])
            for name, tensor in named:
                raw = _read_exact(fh, tensor.data.size * 8, f"adam m[{name}]")
                adam.m[name] = np.frombuffer(raw, dtype="<f8").reshape(tensor.shape).copy()
            for name, tensor in named:
                raw = _read_exact(fh, tensor.data.size * 8, f"adam v[{name}]")
                adam.v[name] = np.frombuffer(raw, dtype="<f8").reshape(tensor.shape).copy()
            train_state = TrainState(epoch=int(ts["epoch"]), adam=adam,
                                     rng_state=ts["rng_state"])

        if fh.read(1):
            raise CheckpointError("corrupt checkpoint: trailing bytes after declared buffers")

    return Checkpoint(config=config, schema=schema, provider=meta.get("provider"),
                      params=params, train_state=train_state)
