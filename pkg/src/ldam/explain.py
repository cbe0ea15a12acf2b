"""Interpretability exports: highlighted notes, channel rankings, and
embedding dumps for external 2-D projection tools.

A note highlight marks the top fraction of tokens by attention weight as
important (ties resolved toward earlier positions), mirroring the usual
"bold the heavy half" presentation of attention evidence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

__all__ = [
    "HighlightedNote",
    "highlight",
    "load_highlights",
    "channel_ranking",
    "export_embeddings",
]


@dataclass
class HighlightedNote:
    """Tokens with their attention weights and an importance mark.

    Exactly ceil(threshold_fraction * L) tokens are marked, the ones with
    the largest weights; equal weights favour the earlier position.
    """

    sample_id: str
    tokens: list[tuple[str, float, bool]]
    threshold_fraction: float

    def important_tokens(self) -> list[str]:
        return [tok for tok, _w, imp in self.tokens if imp]

    def to_markdown(self) -> str:
        return " ".join(f"**{tok}**" if imp else tok for tok, _w, imp in self.tokens)

    def to_json(self) -> str:
        return json.dumps({
            "id": self.sample_id,
            "threshold_fraction": self.threshold_fraction,
            "tokens": [[tok, w, imp] for tok, w, imp in self.tokens],
        })


def highlight(sample_id: str, tokens: list[str], beta: np.ndarray,
              fraction: float = 0.5) -> HighlightedNote:
    """Mark the top ``ceil(fraction * L)`` tokens by attention weight."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1 or len(tokens) != beta.shape[0]:
        raise DimensionError(
            f"{len(tokens)} tokens but {beta.shape} attention weights")
    n_mark = math.ceil(fraction * len(tokens))
    # Stable sort on negated weights: descending weight, earliest position first.
    order = np.argsort(-beta, kind="stable")
    marked = np.zeros(len(tokens), dtype=bool)
    marked[order[:n_mark]] = True
    return HighlightedNote(
        sample_id=sample_id,
        tokens=[(tok, float(w), bool(m)) for tok, w, m in zip(tokens, beta, marked)],
        threshold_fraction=fraction,
    )


def load_highlights(path) -> list[HighlightedNote]:
    """Parse a JSON-Lines highlight export back into objects."""
    notes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            notes.append(HighlightedNote(
                sample_id=raw["id"],
                tokens=[(t, float(w), bool(i)) for t, w, i in raw["tokens"]],
                threshold_fraction=float(raw["threshold_fraction"]),
            ))
    return notes


def channel_ranking(alpha: np.ndarray, indicator_names: list[str]) -> list[tuple[str, float]]:
    """Indicator names ordered by attention weight, descending, stable on ties."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.shape[0] != len(indicator_names):
        raise DimensionError(
            f"{len(indicator_names)} names but {alpha.shape} attention weights")
    order = np.argsort(-alpha, kind="stable")
    return [(indicator_names[i], float(alpha[i])) for i in order]


def export_embeddings(groups: dict[str, tuple[list[str], np.ndarray]], path) -> None:
    """Write ``key,group,v1..vD`` CSV rows for named vector groups.

    ``groups`` maps a group tag to (keys, matrix with one row per key).
    All groups must share one dimension; a mismatch fails before anything
    is written.
    """
    dims = set()
    for tag, (keys, mat) in groups.items():
        mat = np.asarray(mat)
        if mat.ndim != 2 or mat.shape[0] != len(keys):
            raise DimensionError(f"group {tag!r}: {len(keys)} keys but matrix {mat.shape}")
        dims.add(mat.shape[1])
    if len(dims) > 1:
        raise DimensionError(f"embedding groups have mixed dimensions {sorted(dims)}")
    if not dims:
        raise DimensionError("no embedding groups to export")
    dim = dims.pop()

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("key,group," + ",".join(f"v{i + 1}" for i in range(dim)) + "\n")
        for tag, (keys, mat) in groups.items():
            mat = np.asarray(mat, dtype=np.float64)
            for key, row in zip(keys, mat):
                quoted = '"' + key.replace('"', '""') + '"'
                fh.write(quoted + "," + tag + "," + ",".join(repr(float(v)) for v in row) + "\n")
