"""Command-line entry point: synthesize data, train, evaluate, explain.

Configuration is a flat ``key=value`` file; every key can be overridden by
a flag of the same name (flags win).  Exit codes: 0 success, 1 runtime
failure, 2 usage or validation error.  ``LDAM_SEED`` supplies the default
seed when neither a flag nor the config file sets one.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import data as data_mod
from . import explain as explain_mod
from . import metrics as metrics_mod
from .embeddings import EmbeddingProvider
from .errors import (CheckpointError, ConfigError, DataFormatError, LdamError,
                     MetricsError)
from .model import ModelConfig, build_task_embeddings, forward
from .training import TrainConfig, evaluate, train

_MODEL_KEYS = {
    "D": int, "F": int, "L_max": int, "k1": int, "ts_k1": int,
    "conv_channels": int, "mode": str, "attention": str, "lambda_label": float,
}
_TRAIN_KEYS = {
    "epochs": int, "batch_size": int, "lr": float, "seed": int,
    "shuffle": lambda s: s.lower() in ("1", "true", "yes"),
    "checkpoint_every": int, "early_stop_patience": int,
}


def _default_seed() -> int:
    env = os.environ.get("LDAM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"LDAM_SEED must be an integer, got {env!r}") from None
    return 0


def _read_kv_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _collect_config(args) -> tuple[dict, dict]:
    """Merge config file and flags into model/train keyword dicts."""
    raw = _read_kv_file(args.config) if args.config else {}
    unknown = set(raw) - set(_MODEL_KEYS) - set(_TRAIN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    model_kwargs: dict = {}
    train_kwargs: dict = {}
    for key, cast in _MODEL_KEYS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            model_kwargs[key] = flag
        elif key in raw:
            model_kwargs[key] = cast(raw[key])
    for key, cast in _TRAIN_KEYS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            train_kwargs[key] = flag
        elif key in raw:
            train_kwargs[key] = cast(raw[key])
    train_kwargs.setdefault("seed", _default_seed())
    return model_kwargs, train_kwargs


def _require_exists(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise ConfigError(f"path does not exist: {p}")


def _provider_from_args(args, toy_dim: int = 64, fallback_info=None):
    if getattr(args, "embeddings", None):
        _require_exists(args.embeddings)
        return EmbeddingProvider.from_file(args.embeddings), args.embeddings
    if getattr(args, "toy_embed", None) is not None:
        return EmbeddingProvider.toy(args.toy_embed, toy_dim), None
    if fallback_info is not None:
        return ckpt.provider_from_info(fallback_info), fallback_info.get("path")
    raise ConfigError("no embedding source: pass --embeddings or --toy-embed")


# -- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    schema = data_mod.default_schema()
    spec_kwargs = {}
    if args.spec:
        _require_exists(args.spec)
        import json
        with open(args.spec, encoding="utf-8") as fh:
            spec_kwargs = json.load(fh)
    seed = args.seed if args.seed is not None else _default_seed()
    spec = data_mod.default_synth_spec(schema, seed=seed, n_samples=args.n, **spec_kwargs)
    samples = data_mod.generate_synthetic(spec, schema)
    data_mod.save_dataset(samples, args.out)
    data_mod.save_schema(schema, args.schema)
    prevalence = np.stack([s.labels for s in samples]).mean(axis=0)
    print(f"wrote {len(samples)} samples to {args.out}")
    print(f"wrote schema ({schema.n_indicators} indicators, {schema.n_labels} labels, "
          f"T={schema.T}) to {args.schema}")
    for name, p in zip(schema.label_names, prevalence):
        print(f"  prevalence {p:.3f}  {name}")
    return 0


def cmd_train(args) -> int:
    _require_exists(args.data, args.schema, args.config, args.val_data)
    schema = data_mod.load_schema(args.schema)
    dataset = data_mod.load_dataset(args.data, schema)
    model_kwargs, train_kwargs = _collect_config(args)
    provider, provider_path = _provider_from_args(args, toy_dim=model_kwargs.get("D", 64))
    model_kwargs.setdefault("D", provider.dim)
    model_cfg = ModelConfig.from_schema(schema, **model_kwargs)
    train_cfg = TrainConfig(**train_kwargs)

    if args.val_data:
        val = data_mod.load_dataset(args.val_data, schema)
    else:
        dataset, val = data_mod.split(dataset, 0.8, train_cfg.seed)

    resume_state = None
    initial = None
    if args.resume:
        _require_exists(args.resume)
        loaded = ckpt.load_checkpoint(args.resume)
        if loaded.train_state is None:
            raise CheckpointError(f"{args.resume} holds no optimizer state; cannot resume")
        resume_state, initial = loaded.train_state, loaded.params

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params, log = train(dataset, val, model_cfg, train_cfg, provider, schema,
                        checkpoint_dir=str(out_dir),
                        final_checkpoint=str(out_dir / "checkpoint.ldam"),
                        provider_source_path=provider_path,
                        resume=resume_state, initial_params=initial)
    log.to_csv(out_dir / "trainlog.csv")
    last = log.records[-1]
    val_part = f", val micro AUC {last.val_micro_auc:.4f}" if last.val_micro_auc else ""
    print(f"trained {last.epoch} epochs, final loss {last.loss:.6f}{val_part}")
    print(f"checkpoint: {out_dir / 'checkpoint.ldam'}")
    print(f"train log:  {out_dir / 'trainlog.csv'}")
    return 0


def _load_eval_inputs(args):
    _require_exists(args.data, args.checkpoint)
    loaded = ckpt.load_checkpoint(args.checkpoint)
    if args.schema:
        _require_exists(args.schema)
        schema = data_mod.load_schema(args.schema)
    elif loaded.schema is not None:
        schema = loaded.schema
    else:
        raise ConfigError("checkpoint has no schema; pass --schema")
    provider, _path = _provider_from_args(args, toy_dim=loaded.config.D,
                                          fallback_info=loaded.provider)
    dataset = data_mod.load_dataset(args.data, schema)
    return loaded, schema, provider, dataset


def cmd_eval(args) -> int:
    loaded, schema, provider, dataset = _load_eval_inputs(args)
    report = evaluate(dataset, loaded.params, provider, schema, threshold=args.threshold)
    print(metrics_mod.render_table(report))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_mod.write_report_csv(report, out_dir / "metrics.csv")
    metrics_mod.write_per_label_csv(report, schema.label_names, out_dir / "per_label.csv")
    print(f"metrics CSV: {out_dir / 'metrics.csv'}")
    return 0


def cmd_explain(args) -> int:
    loaded, schema, provider, dataset = _load_eval_inputs(args)
    params = loaded.params
    task = build_task_embeddings(provider, schema, params.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    z_m_rows = []
    with open(out_dir / "highlights.jsonl", "w", encoding="utf-8") as hl_fh, \
            open(out_dir / "highlights.md", "w", encoding="utf-8") as md_fh, \
            open(out_dir / "channel_rankings.jsonl", "w", encoding="utf-8") as ch_fh:
        import json
        for sample in dataset:
            out = forward(sample, task, params)
            if out.beta is not None:
                note = explain_mod.highlight(sample.id,
                                             sample.note_tokens[:params.config.L_max],
                                             out.beta, args.fraction)
                hl_fh.write(note.to_json() + "\n")
                md_fh.write(f"{sample.id}: {note.to_markdown()}\n")
            if out.alpha is not None:
                ranking = explain_mod.channel_ranking(out.alpha, schema.indicator_names)
                ch_fh.write(json.dumps({"id": sample.id, "ranking": ranking}) + "\n")
            if out.z_m is not None:
                z_m_rows.append((sample.id, out.z_m))

    name_groups = {
        "label": (schema.label_names,
                  np.stack([provider.name_vector(n) for n in schema.label_names])),
        "indicator": (schema.indicator_names,
                      np.stack([provider.name_vector(n) for n in schema.indicator_names])),
    }
    explain_mod.export_embeddings(name_groups, out_dir / "embeddings_names.csv")
    if z_m_rows:
        notes_group = {"note": ([sid for sid, _ in z_m_rows],
                                np.stack([z for _, z in z_m_rows]))}
        explain_mod.export_embeddings(notes_group, out_dir / "embeddings_notes.csv")
    print(f"explain outputs in {out_dir}")
    return 0


# -- argument wiring ----------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    for key, cast in _MODEL_KEYS.items():
        p.add_argument(f"--{key}", type=cast if cast is not str else str, default=None)
    for key, cast in _TRAIN_KEYS.items():
        if key == "shuffle":
            p.add_argument("--shuffle", type=lambda s: s.lower() in ("1", "true", "yes"),
                           default=None, metavar="BOOL")
        else:
            p.add_argument(f"--{key}", type=cast, default=None)


def _add_embedding_flags(p: argparse.ArgumentParser, required: bool) -> None:
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument("--embeddings", help="TSV embedding table")
    group.add_argument("--toy-embed", dest="toy_embed", type=int, metavar="SEED",
                       help="deterministic toy embedder with this seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldam",
                                     description="label-dependent attention risk model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-signal dataset")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out", required=True, help="dataset JSONL to write")
    p.add_argument("--schema", required=True, help="schema JSON to write")
    p.add_argument("--spec", help="JSON file overriding generator settings")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--val-data", dest="val_data")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", help="resumable checkpoint to continue from")
    _add_embedding_flags(p, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=".", help="directory for metrics CSVs")
    p.add_argument("--schema", help="override the schema stored in the checkpoint")
    _add_embedding_flags(p, required=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="export attention evidence")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--schema", help="override the schema stored in the checkpoint")
    _add_embedding_flags(p, required=False)
    p.set_defaults(func=cmd_explain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, MetricsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LdamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
