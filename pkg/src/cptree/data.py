"""Hashed sparse features, labels and streaming example ingestion.

Input lines look like ``<label> <feat>[:<value>] ...``.  Feature names are
hashed into ``[1, 2**bits)`` with a seeded 64-bit hash; index 0 is reserved
for the constant bias feature, which every parsed example carries with
value 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np
import xxhash

from .errors import ConfigError, ParseError

BIAS_INDEX = 0
DEFAULT_HASH_SEED = 0x5EED
MIN_BITS = 1
MAX_BITS = 31


def check_bits(bits: int) -> int:
    if isinstance(bits, bool) or not isinstance(bits, (int, np.integer)):
        raise ConfigError(f"bits must be an integer, got {bits!r}")
    if not MIN_BITS <= bits <= MAX_BITS:
        raise ConfigError(f"bits must lie in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    return int(bits)


@lru_cache(maxsize=1 << 20)
def _hash_index(token: str, bits: int, seed: int) -> int:
    h = xxhash.xxh64_intdigest(token, seed)
    # 2**bits - 1 non-bias buckets; bits=1 leaves exactly one (index 1).
    return 1 + h % ((1 << bits) - 1)


def hash_feature(token: str, bits: int, seed: int = DEFAULT_HASH_SEED) -> int:
    """Map a feature name to an index in ``[1, 2**bits)``.

    The bias index 0 is never produced.  The mapping depends only on
    ``(token, bits, seed)``.
    """
    bits = check_bits(bits)
    if not token:
        raise ConfigError("feature token must be non-empty")
    return _hash_index(token, bits, int(seed))


def check_label(token: str) -> str:
    if not isinstance(token, str) or not token:
        raise ConfigError("label must be a non-empty string")
    if any(ch.isspace() for ch in token):
        raise ConfigError(f"label {token!r} contains whitespace")
    return token


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Feature vector as parallel ``indices`` / ``values`` arrays.

    Use :meth:`canonical` to build one; the raw constructor trusts its input.
    A canonical vector has strictly increasing indices and finite values.
    """

    indices: np.ndarray
    values: np.ndarray

    @classmethod
    def canonical(cls, indices, values, bits: int | None = None) -> "SparseVector":
        idx = np.asarray(indices, dtype=np.int64).ravel()
        val = np.asarray(values, dtype=np.float64).ravel()
        if idx.shape != val.shape:
            raise ConfigError("indices and values differ in length")
        if not np.all(np.isfinite(val)):
            raise ConfigError("feature values must be finite")
        if idx.size and idx.min() < 0:
            raise ConfigError("feature indices must be non-negative")
        if bits is not None and idx.size and idx.max() >= (1 << check_bits(bits)):
            raise ConfigError(f"feature index {idx.max()} out of range for bits={bits}")
        uniq, inverse = np.unique(idx, return_inverse=True)
        summed = np.bincount(inverse, weights=val, minlength=uniq.size)
        return cls(uniq.astype(np.int64), summed.astype(np.float64))

    @classmethod
    def bias_only(cls) -> "SparseVector":
        return cls(np.array([BIAS_INDEX], dtype=np.int64), np.array([1.0]))

    def __len__(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None

    def is_canonical(self) -> bool:
        return bool(
            np.all(np.diff(self.indices) > 0)
            and np.all(np.isfinite(self.values))
            and (self.indices.size == 0 or self.indices[0] >= 0)
        )

    def squared_norm(self) -> float:
        return float(self.values @ self.values)

    def key(self, seed: int = DEFAULT_HASH_SEED) -> int:
        """64-bit identity hash of the (canonical) indices and values."""
        h = xxhash.xxh64(seed=seed)
        h.update(self.indices.astype("<i8").tobytes())
        h.update(self.values.astype("<f8").tobytes())
        return h.intdigest()


@dataclass(frozen=True)
class Example:
    x: SparseVector
    y: str

    def __post_init__(self):
        if self.x is None or self.y is None:
            raise ConfigError("example needs both x and y")
        check_label(self.y)


def parse_example(
    line: str, bits: int, seed: int = DEFAULT_HASH_SEED, line_no: int | None = None
) -> Example:
    """Parse one ``<label> <feat>[:<value>] ...`` line.

    Repeated or colliding features have their values summed and the bias
    entry is added.
    """
    bits = check_bits(bits)
    fields = line.split()
    if not fields:
        raise ParseError("empty example line", line_no)
    label, feats = fields[0], fields[1:]
    if ":" in label:
        raise ParseError(f"label {label!r} looks like a feature", line_no)
    idx = [BIAS_INDEX]
    val = [1.0]
    for tok in feats:
        name, sep, raw = tok.rpartition(":")
        if not sep:
            name, value = tok, 1.0
        else:
            if not name or not raw:
                raise ParseError(f"malformed feature {tok!r}", line_no)
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(f"malformed feature value in {tok!r}", line_no) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite feature value in {tok!r}", line_no)
        idx.append(_hash_index(name, bits, int(seed)))
        val.append(value)
    return Example(SparseVector.canonical(idx, val), label)


def format_example(label: str, features: Iterable[tuple[str, float]]) -> str:
    parts = [check_label(label)]
    for name, value in features:
        parts.append(name if value == 1.0 else f"{name}:{value:.17g}")
    return " ".join(parts)


def _is_skippable(line: str) -> bool:
    stripped = line.strip()
    return not stripped or stripped.startswith("#")


def iter_examples(
    source: str | Path | TextIO, bits: int, seed: int = DEFAULT_HASH_SEED
) -> Iterator[Example]:
    """Yield examples from a path or an open text stream, skipping comments."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from iter_examples(fh, bits, seed)
        return
    for line_no, line in enumerate(source, start=1):
        if _is_skippable(line):
            continue
        yield parse_example(line, bits, seed, line_no)


class ExampleBatch:
    """Examples packed in CSR form so compiled kernels can stream them."""

    def __init__(self, indptr, indices, values, labels):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.labels = list(labels)
        if self.indptr.size != len(self.labels) + 1:
            raise ConfigError("indptr must have one more entry than there are labels")

    @classmethod
    def from_examples(cls, examples: Iterable[Example]) -> "ExampleBatch":
        indptr = [0]
        idx_parts, val_parts, labels = [], [], []
        for ex in examples:
            idx_parts.append(ex.x.indices)
            val_parts.append(ex.x.values)
            indptr.append(indptr[-1] + len(ex.x))
            labels.append(ex.y)
        if idx_parts:
            indices = np.concatenate(idx_parts)
            values = np.concatenate(val_parts)
        else:
            indices = np.zeros(0, dtype=np.int64)
            values = np.zeros(0, dtype=np.float64)
        return cls(np.asarray(indptr), indices, values, labels)

    @classmethod
    def read(cls, source, bits: int, seed: int = DEFAULT_HASH_SEED) -> "ExampleBatch":
        return cls.from_examples(iter_examples(source, bits, seed))

    def __len__(self) -> int:
        return len(self.labels)

    def x(self, i: int) -> SparseVector:
        a, b = self.indptr[i], self.indptr[i + 1]
        return SparseVector(self.indices[a:b], self.values[a:b])

    def __getitem__(self, i: int) -> Example:
        return Example(self.x(i), self.labels[i])

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self[i]

    def slice(self, start: int, stop: int) -> "ExampleBatch":
        start, stop, _ = slice(start, stop).indices(len(self))
        stop = max(start, stop)
        a, b = self.indptr[start], self.indptr[stop]
        return ExampleBatch(
            self.indptr[start : stop + 1] - a,
            self.indices[a:b],
            self.values[a:b],
            self.labels[start:stop],
        )

    def concat(self, other: "ExampleBatch") -> "ExampleBatch":
        return ExampleBatch(
            np.concatenate([self.indptr, other.indptr[1:] + self.indptr[-1]]),
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.values, other.values]),
            self.labels + other.labels,
        )

    def max_index(self) -> int:
        return int(self.indices.max()) if self.indices.size else -1
