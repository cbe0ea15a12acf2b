"""Frozen embedding lookups for note tokens and for indicator/label names.

Vectors come either from a TSV file or from a deterministic toy embedder
that hashes (seed, key) into a unit-norm gaussian direction.  Tables are
immutable after load; nothing in training may write to them.

TSV format: first line ``dim=<D>``; every following line is
``<key>\\t<v1>\\t...\\t<vD>`` with decimal floats, UTF-8.  Keys may contain
spaces (multi-word names); tab is the only separator.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DimensionError
from .tensor import Tensor

__all__ = [
    "EmbeddingTable",
    "EmbeddingProvider",
    "load_table",
    "save_table",
    "toy_embed",
    "embed_note",
    "embed_names",
]


@dataclass
class EmbeddingTable:
    """A key -> vector map of uniform dimension.

    kind selects the missing-key rule: a missing ``token`` key falls back
    to the zero UNK vector (an unknown word then contributes nothing to a
    weighted sum); a missing ``name`` key is an error, since indicator and
    label names define the model's structure.
    """

    dim: int
    kind: str
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("token", "name"):
            raise DataFormatError(f"table kind must be 'token' or 'name', got {self.kind!r}")
        if self.dim < 1:
            raise DimensionError(f"embedding dim must be positive, got {self.dim}")

    def lookup(self, key: str) -> np.ndarray:
        vec = self.entries.get(key)
        if vec is None:
            if self.kind == "token":
                return np.zeros(self.dim)
            raise DataFormatError(f"name {key!r} missing from embedding table")
        return vec

    def with_kind(self, kind: str) -> "EmbeddingTable":
        """A view over the same entries under a different missing-key rule."""
        return EmbeddingTable(dim=self.dim, kind=kind, entries=self.entries)


def load_table(path, kind: str = "token") -> EmbeddingTable:
    """Parse a TSV embedding file; rejects ragged rows and duplicate keys."""
    entries: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("dim=") or not header[4:].isdigit():
            raise DataFormatError(f"{path}: first line must be 'dim=<D>', got {header!r}")
        dim = int(header[4:])
        if dim < 1:
            raise DataFormatError(f"{path}: dim must be positive, got {dim}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            key, values = fields[0], fields[1:]
            if len(values) != dim:
                raise DataFormatError(
                    f"{path}:{lineno}: row for {key!r} has {len(values)} values, expected {dim}")
            if key in entries:
                raise DataFormatError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                entries[key] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-numeric field ({exc})") from None
    return EmbeddingTable(dim=dim, kind=kind, entries=entries)


def save_table(table: EmbeddingTable, path) -> None:
    """Write the TSV form; floats use shortest round-trip formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={table.dim}\n")
        for key, vec in table.entries.items():
            fh.write(key + "\t" + "\t".join(repr(float(v)) for v in vec) + "\n")


def toy_embed(seed: int, key: str, dim: int) -> np.ndarray:
    """Deterministic unit-norm vector for (seed, key).

    Hash-seeded gaussian directions: distinct keys land nearly orthogonal
    once dim is a few dozen, which is all the stand-in embedder needs.
    """
    if dim < 1:
        raise DimensionError(f"embedding dim must be positive, got {dim}")
    digest = hashlib.sha256(f"{seed}|{key}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


class EmbeddingProvider:
    """Uniform front end over file-backed and toy embedding sources."""

    def __init__(self, dim: int, token_table: EmbeddingTable | None,
                 name_table: EmbeddingTable | None, toy_seed: int | None):
        self.dim = dim
        self._token_table = token_table
        self._name_table = name_table
        self._toy_seed = toy_seed
        self._cache: dict[str, np.ndarray] = {}

    @classmethod
    def from_file(cls, path) -> "EmbeddingProvider":
        table = load_table(path, kind="token")
        return cls(table.dim, table, table.with_kind("name"), None)

    @classmethod
    def toy(cls, seed: int, dim: int = 64) -> "EmbeddingProvider":
        if dim < 1:
            raise DimensionError(f"embedding dim must be positive, got {dim}")
        return cls(dim, None, None, int(seed))

    @property
    def source(self) -> str:
        return "toy" if self._toy_seed is not None else "file"

    @property
    def toy_seed(self) -> int | None:
        return self._toy_seed

    def _toy_vector(self, key: str) -> np.ndarray:
        vec = self._cache.get(key)
        if vec is None:
            vec = toy_embed(self._toy_seed, key, self.dim)
            self._cache[key] = vec
        return vec

    def token_vector(self, token: str) -> np.ndarray:
        if self._toy_seed is not None:
            return self._toy_vector(token)
        return self._token_table.lookup(token)

    def name_vector(self, name: str) -> np.ndarray:
        if self._toy_seed is not None:
            return self._toy_vector(name)
        return self._name_table.lookup(name)


def embed_note(provider: EmbeddingProvider, tokens: list[str]) -> Tensor:
    """Column-per-token D x L matrix; unknown tokens become UNK columns."""
    if len(tokens) == 0:
        raise DimensionError("cannot embed an empty note")
    out = np.empty((provider.dim, len(tokens)))
    for l, tok in enumerate(tokens):
        out[:, l] = provider.token_vector(tok)
    return Tensor(out)


def embed_names(provider: EmbeddingProvider, names: list[str]) -> Tensor:
    """Column-per-name D x N matrix; each full name string is one key."""
    if len(names) == 0:
        raise DimensionError("cannot embed an empty name list")
    out = np.empty((provider.dim, len(names)))
    for n, name in enumerate(names):
        out[:, n] = provider.name_vector(name)
    return Tensor(out)
