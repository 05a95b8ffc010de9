"""Binary classification datasets: libsvm text I/O, row normalization, synthetic data.

Rows are stored in CSR form (``indptr``, ``indices``, ``values``) with 0-based feature
indices; the libsvm text format is 1-based.
"""

from __future__ import annotations

import gzip
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Union

import numpy as np

GZIP_MAGIC = b"\x1f\x8b"
_LABELS = {1.0: 1, -1.0: -1, 0.0: -1}


class ParseError(ValueError):
    """Malformed libsvm input; carries the 1-based line (and token) position."""

    def __init__(self, line: int, message: str, token: Optional[int] = None):
        where = f"line {line}" if token is None else f"line {line}, token {token}"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.token = token


@dataclass(frozen=True, eq=False)
class Dataset:
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    d: int
    provenance: str = ""
    normalized: bool = field(default=False)

    @property
    def n(self) -> int:
        return len(self.labels)

    def row(self, i: int):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    def row_norms(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return np.sqrt(np.bincount(rows, weights=self.values ** 2, minlength=self.n))

    def to_dense(self, d: Optional[int] = None) -> np.ndarray:
        d = self.d if d is None else d
        if d < self.d:
            raise ValueError(f"requested width {d} below the largest feature index {self.d}")
        X = np.zeros((self.n, d))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        X[rows, self.indices] = self.values
        return X

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.d == other.d
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def _build(rows: List, labels: List[int], d: int, provenance: str, normalized=False) -> Dataset:
    lengths = [len(r[0]) for r in rows]
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    if rows:
        indices = np.concatenate([np.asarray(r[0], dtype=np.int64) for r in rows])
        values = np.concatenate([np.asarray(r[1], dtype=np.float64) for r in rows])
    else:
        indices = np.zeros(0, dtype=np.int64)
        values = np.zeros(0)
    for a in (indptr, indices, values):
        a.setflags(write=False)
    lab = np.array(labels, dtype=np.int8)
    lab.setflags(write=False)
    return Dataset(indptr, indices, values, lab, d, provenance, normalized)


def _parse_label(tok: str, lineno: int) -> int:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(lineno, f"label {tok!r} is not a number", token=1) from None
    if v not in _LABELS:
        raise ParseError(lineno, f"label {tok!r} not in {{+1, 1, -1, 0}}", token=1)
    return _LABELS[v]


def parse_libsvm(stream: Union[str, Iterable[str]], provenance: str = "<text>",
                 d: Optional[int] = None) -> Dataset:
    """Parse ``<label> <idx>:<val> ...`` lines. ``#`` starts a comment."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows, labels = [], []
    max_index = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], lineno))
        idx, val = [], []
        prev = 0
        for k, tok in enumerate(tokens[1:], start=2):
            key, sep, num = tok.partition(":")
            if not sep or not key or not num:
                raise ParseError(lineno, f"expected <index>:<value>, got {tok!r}", token=k)
            try:
                j = int(key)
            except ValueError:
                raise ParseError(lineno, f"feature index {key!r} is not an integer", token=k) from None
            if j < 1:
                raise ParseError(lineno, f"feature index {j} must be >= 1", token=k)
            if j <= prev:
                raise ParseError(lineno, f"feature index {j} not greater than previous {prev}", token=k)
            try:
                v = float(num)
            except ValueError:
                raise ParseError(lineno, f"feature value {num!r} is not a number", token=k) from None
            if not math.isfinite(v):
                raise ParseError(lineno, f"feature value {num!r} is not finite", token=k)
            prev = j
            idx.append(j - 1)
            val.append(v)
        max_index = max(max_index, prev)
        rows.append((idx, val))
    if d is not None:
        if d < max_index:
            raise ValueError(f"override d={d} smaller than largest index {max_index}")
        max_index = d
    return _build(rows, labels, max_index, provenance)


def read_libsvm(path: Union[str, os.PathLike], d: Optional[int] = None) -> Dataset:
    """Load a libsvm file; gzip input is detected from its magic bytes."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw.count(b"\n", 0, exc.start) + 1
        raise ParseError(line, f"invalid UTF-8 byte at offset {exc.start}") from None
    return parse_libsvm(io.StringIO(text), provenance=os.fspath(path), d=d)


def serialize_libsvm(ds: Dataset) -> str:
    out = []
    for i in range(ds.n):
        idx, val = ds.row(i)
        parts = ["+1" if ds.labels[i] > 0 else "-1"]
        parts.extend(f"{j + 1}:{v!r}" for j, v in zip(idx.tolist(), val.tolist()))
        out.append(" ".join(parts))
    return "\n".join(out) + ("\n" if out else "")


def write_libsvm(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_libsvm(ds))


def normalize_rows(ds: Dataset) -> Dataset:
    """Scale every row to unit Euclidean norm."""
    norms = ds.row_norms()
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ValueError(f"row {int(bad[0])} has zero norm and cannot be normalized")
    scale = np.repeat(norms, np.diff(ds.indptr))
    values = ds.values / scale
    values.setflags(write=False)
    return Dataset(ds.indptr, ds.indices, values, ds.labels, ds.d, ds.provenance, True)


def from_dense(X, labels, provenance: str = "", normalized: bool = False) -> Dataset:
    X = np.asarray(X, dtype=np.float64)
    rows = []
    for x in X:
        nz = np.flatnonzero(x)
        rows.append((nz, x[nz]))
    return _build(rows, [int(v) for v in labels], X.shape[1], provenance, normalized)


def make_synthetic_classification(n: int, d: int, separation: float = 1.0, noise: float = 1.0,
                                  seed: int = 0) -> Dataset:
    """Two Gaussian clusters centred at ``+-separation * u`` for a random unit ``u``.

    Labels are balanced coin flips; each point is ``label * separation * u + noise * N(0, I)``.
    Rows come back unit-normalized.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    y = np.where(rng.random(n) < 0.5, -1, 1)
    X = separation * y[:, None] * u[None, :] + noise * rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    prov = f"synthetic(n={n},d={d},separation={separation!r},noise={noise!r},seed={seed})"
    ds = from_dense(X, y, provenance=prov, normalized=True)
    return ds
