"""Instance text -> fixed-length feature vector.

Tokenization is tailored to Essence parameter files: identifier/number runs
stay whole and every other visible character is its own token. Encoding is
signed feature hashing over token n-grams, L2-normalized.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import kernels
from .portfolio import DataError

ENCODED = "encoded"
IMPORTED = "imported"
CONCATENATED = "concatenated"

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]")


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    truncated: bool = False

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 768
    max_tokens: int = 2048
    ngram_orders: tuple[int, ...] = (1, 2)
    hash_seed: int = 0

    def __post_init__(self):
        if self.dim < 8:
            raise ValueError(f"dim must be >= 8, got {self.dim}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        orders = tuple(sorted(set(int(n) for n in self.ngram_orders)))
        if not orders or orders[0] < 1:
            raise ValueError(f"ngram_orders must be positive integers, got {self.ngram_orders}")
        object.__setattr__(self, "ngram_orders", orders)
        if not -(2**63) <= self.hash_seed < 2**64:
            raise ValueError(f"hash_seed must fit in 64 bits, got {self.hash_seed}")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    source: str = ENCODED

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("feature vector must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature vector has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.source == other.source and np.array_equal(self.values, other.values)


def tokenize(text: str, max_tokens: int = 2048) -> TokenStream:
    """Split text into word/number runs and single punctuation characters."""
    tokens = _TOKEN_RE.findall(text)
    if len(tokens) > max_tokens:
        return TokenStream(tuple(tokens[:max_tokens]), truncated=True)
    return TokenStream(tuple(tokens), truncated=False)


def encode(stream: TokenStream, config: EncoderConfig = EncoderConfig()) -> FeatureVector:
    counts = kernels.hashed_counts(list(stream.tokens), config.ngram_orders, config.hash_seed, config.dim)
    norm = math.sqrt(float(np.dot(counts, counts)))
    if norm > 0:
        counts /= norm
    return FeatureVector(counts, ENCODED)


def encode_text(text: str, config: EncoderConfig = EncoderConfig()) -> FeatureVector:
    return encode(tokenize(text, config.max_tokens), config)


def _read_vector_csv(path: Path, expected_dim: int | None, source: str) -> dict[str, FeatureVector]:
    out: dict[str, FeatureVector] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0].strip() != "instance":
            raise DataError(f"{path}: first column of the header must be 'instance'")
        width = len(header) - 1
        if expected_dim is not None and width != expected_dim:
            raise DataError(f"{path}: header has {width} value columns, expected dimension {expected_dim}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) - 1 != width:
                raise DataError(f"{path}:{lineno}: row has {len(row) - 1} values, expected {width}")
            iid = row[0].strip()
            if iid in out:
                raise DataError(f"{path}:{lineno}: duplicate instance {iid!r}")
            try:
                values = np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path}:{lineno}: non-finite value for instance {iid!r}")
            out[iid] = FeatureVector(values, source)
    return out


def import_embeddings(path, expected_dim: int | None = None) -> dict[str, FeatureVector]:
    """Load externally computed instance embeddings from ``instance,v0,v1,...`` CSV."""
    return _read_vector_csv(Path(path), expected_dim, IMPORTED)


def encode_corpus(texts: Mapping[str, str], config: EncoderConfig) -> dict[str, FeatureVector]:
    return {iid: encode_text(texts[iid], config) for iid in texts}


def read_text_dir(directory, suffix: str = ".param") -> dict[str, str]:
    """Map instance id (file stem) -> text for every ``*suffix`` file, sorted by id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    files = sorted(directory.glob(f"*{suffix}"))
    return {f.stem: f.read_text(encoding="utf-8") for f in files}
