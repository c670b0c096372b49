"""Embedding data model, on-disk format, corpus loading, and pooling.

A corpus file holds one embedding matrix per record (query tokens or
document patches). Layout, all little-endian:

    magic   b"VDRE"
    u16     format version (currently 1)
    u8      dtype code: 0 = float32, 1 = float16
    u32     embedding dimension h
    u64     record count
    per record:
        u16     id byte length, then that many UTF-8 bytes
        u32     row count n
        u32     grid rows (0 when absent)
        u32     grid cols (0 when absent)
        n*h     values, row-major

Token metadata lives in a JSONL sidecar next to the corpus file
(``<path>.tokens.jsonl``), one object per record:
``{"id": ..., "tokens": [{"text": ..., "kind": ...}]}``.

Values are stored as 32-bit floats; float16 files are widened at load.
Rows are L2-normalized at ingest. Rows that already sit within 1e-6 of
unit norm are kept byte-identical so that write -> load roundtrips are
bit-exact; rows with norm below 1e-12 are rejected rather than rescaled.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DimensionError, FormatError

MAGIC = b"VDRE"
FORMAT_VERSION = 1
TOKENS_SIDECAR_SUFFIX = ".tokens.jsonl"

_HEADER = struct.Struct("<4sHBIQ")
_U16 = struct.Struct("<H")
_REC_HEAD = struct.Struct("<III")

_NORM_REJECT = 1e-12
_NORM_KEEP = 1e-6  # rows this close to unit norm are kept byte-identical


class TokenKind(str, Enum):
    QUERY_TEXT = "query_text"
    SPECIAL_PAD = "special_pad"
    PROMPT = "prompt"


@dataclass(frozen=True)
class TokenMeta:
    """Surface string and kind tag for one query token."""

    text: str
    kind: TokenKind


@dataclass(frozen=True)
class MultiVectorEmbedding:
    """One retrieval unit: a matrix of unit-norm rows plus metadata.

    ``grid`` gives the (rows, cols) patch arrangement for documents;
    ``tokens`` carries per-row token metadata for queries.
    """

    id: str
    vectors: np.ndarray
    grid: tuple[int, int] | None = None
    tokens: tuple[TokenMeta, ...] | None = None

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_rows(
        cls,
        id: str,
        rows,
        grid: tuple[int, int] | None = None,
        tokens: Sequence[TokenMeta] | None = None,
    ) -> "MultiVectorEmbedding":
        """Ingest raw rows: validate, widen to float32, L2-normalize."""
        arr = _ingest_rows(id, rows)
        n = arr.shape[0]
        if grid is not None:
            gr, gc = int(grid[0]), int(grid[1])
            if gr < 1 or gc < 1 or gr * gc != n:
                raise DataError(f"record {id!r}: grid {gr}x{gc} does not cover {n} rows")
            grid = (gr, gc)
        toks = _ingest_tokens(id, tokens, n)
        return cls(id=id, vectors=arr, grid=grid, tokens=toks)


def _ingest_rows(record_id: str, rows) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(rows, dtype=np.float32))
    if arr.ndim != 2:
        raise DataError(f"record {record_id!r}: expected a 2-d row matrix, got ndim={arr.ndim}")
    n, h = arr.shape
    if n < 1 or h < 1:
        raise DataError(f"record {record_id!r}: needs at least one row and one column, got {n}x{h}")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise DataError(f"record {record_id!r}: non-finite entries in row {bad}")
    norms = np.linalg.norm(arr.astype(np.float64), axis=1)
    tiny = norms < _NORM_REJECT
    if tiny.any():
        row = int(np.flatnonzero(tiny)[0])
        raise DataError(f"record {record_id!r}: row {row} has near-zero norm and cannot be normalized")
    off = np.abs(norms - 1.0) > _NORM_KEEP
    if off.any():
        arr = arr.copy()
        arr[off] = (arr[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    arr.flags.writeable = False
    return arr


def _ingest_tokens(
    record_id: str, tokens: Sequence[TokenMeta] | None, n: int
) -> tuple[TokenMeta, ...] | None:
    if tokens is None:
        return None
    out = []
    for i, tok in enumerate(tokens):
        try:
            kind = TokenKind(tok.kind)
        except ValueError:
            raise DataError(f"record {record_id!r}: token {i} has unknown kind {tok.kind!r}") from None
        if kind is TokenKind.SPECIAL_PAD and not tok.text:
            raise DataError(f"record {record_id!r}: pad token {i} must carry its pad string")
        out.append(TokenMeta(text=tok.text, kind=kind))
    if len(out) != n:
        raise DataError(f"record {record_id!r}: {len(out)} token entries for {n} rows")
    return tuple(out)


@dataclass(frozen=True)
class Corpus:
    """Immutable, id-addressed collection with contiguous row storage.

    ``flat`` stacks every entry's rows; entry i owns rows
    ``offsets[i]:offsets[i+1]``. ``pooled`` holds one compressed vector per
    entry. All arrays are read-only; concurrent reads need no coordination.
    """

    dim: int
    entries: tuple[MultiVectorEmbedding, ...]
    flat: np.ndarray
    offsets: np.ndarray
    pooled: np.ndarray
    id_index: dict[str, int]
    pooling: str = "mean"

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def get(self, record_id: str) -> MultiVectorEmbedding:
        try:
            return self.entries[self.id_index[record_id]]
        except KeyError:
            raise DataError(f"no record with id {record_id!r} in corpus") from None


def pool(embedding: MultiVectorEmbedding, method: str = "mean") -> np.ndarray:
    """Compress an embedding to a single unit vector.

    ``mean`` averages the rows and renormalizes; ``first`` returns row 0
    (a CLS-style indicator, exposed for parity experiments).
    """
    if method == "first":
        return embedding.vectors[0].copy()
    if method != "mean":
        raise ValueError(f"unknown pooling method {method!r}")
    mean = embedding.vectors.mean(axis=0, dtype=np.float64)
    norm = float(np.linalg.norm(mean))
    if norm < _NORM_REJECT:
        raise DataError(f"record {embedding.id!r}: rows average to the zero vector; pooling undefined")
    return (mean / norm).astype(np.float32)


def build_corpus(
    records: Iterable[MultiVectorEmbedding],
    pooling: str = "mean",
    dim: int | None = None,
) -> Corpus:
    """Assemble records into an immutable corpus with a pooled sidecar.

    ``dim`` is only needed for an empty corpus, where it cannot be inferred.
    """
    entries = list(records)
    if entries:
        first = entries[0]
        dim = first.dim
        for e in entries[1:]:
            if e.dim != dim:
                raise DimensionError(
                    f"record {e.id!r} has dim {e.dim}, but record {first.id!r} has dim {dim}"
                )
    elif dim is None or dim < 1:
        raise ValueError("an empty corpus needs an explicit positive dim")

    id_index: dict[str, int] = {}
    for i, e in enumerate(entries):
        if e.id in id_index:
            raise DataError(f"duplicate record id {e.id!r}")
        id_index[e.id] = i

    counts = np.array([e.n for e in entries], dtype=np.int64)
    offsets = np.zeros(len(entries) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    flat = np.empty((int(offsets[-1]), dim), dtype=np.float32)
    for e, start in zip(entries, offsets[:-1]):
        flat[start : start + e.n] = e.vectors
    flat.flags.writeable = False
    offsets.flags.writeable = False

    # rebind entry matrices as views into the shared storage
    views = tuple(
        MultiVectorEmbedding(e.id, flat[offsets[i] : offsets[i + 1]], e.grid, e.tokens)
        for i, e in enumerate(entries)
    )
    if views:
        pooled = np.stack([pool(e, pooling) for e in views])
    else:
        pooled = np.zeros((0, dim), dtype=np.float32)
    pooled.flags.writeable = False
    return Corpus(
        dim=dim,
        entries=views,
        flat=flat,
        offsets=offsets,
        pooled=pooled,
        id_index=id_index,
        pooling=pooling,
    )


def default_tokens_path(path) -> Path:
    return Path(str(path) + TOKENS_SIDECAR_SUFFIX)


def write_corpus(corpus: Corpus, path, tokens_path=None) -> None:
    """Write the binary corpus file (always float32) plus the token sidecar.

    The sidecar is written only when some entry carries token metadata; a
    stale sidecar at the default location is removed otherwise, so that
    load(write(c)) reproduces c exactly.
    """
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, 0, corpus.dim, len(corpus.entries)))
        for e in corpus.entries:
            idb = e.id.encode("utf-8")
            if len(idb) > 0xFFFF:
                raise DataError(f"record id {e.id!r} exceeds 65535 bytes when encoded")
            gr, gc = e.grid if e.grid is not None else (0, 0)
            f.write(_U16.pack(len(idb)))
            f.write(idb)
            f.write(_REC_HEAD.pack(e.n, gr, gc))
            f.write(np.ascontiguousarray(e.vectors, dtype="<f4").tobytes())

    tpath = Path(tokens_path) if tokens_path is not None else default_tokens_path(path)
    with_tokens = [e for e in corpus.entries if e.tokens is not None]
    if with_tokens:
        with open(tpath, "w", encoding="utf-8") as f:
            for e in with_tokens:
                rec = {
                    "id": e.id,
                    "tokens": [{"text": t.text, "kind": t.kind.value} for t in e.tokens],
                }
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    elif tokens_path is None and tpath.exists():
        tpath.unlink()


def load_corpus(path, tokens_path=None, pooling: str = "mean") -> Corpus:
    """Load, validate, and normalize a corpus file.

    The token sidecar is read from ``tokens_path`` when given, otherwise
    from the default location next to the file when present.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(
            f"{path}: truncated header at byte 0 (need {_HEADER.size} bytes, have {len(data)})"
        )
    magic, version, dtype_code, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0: expected {MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at byte 4")
    if dtype_code not in (0, 1):
        raise FormatError(f"{path}: unknown dtype code {dtype_code} at byte 6")
    if dim < 1:
        raise FormatError(f"{path}: dimension must be positive at byte 7")
    value_dtype = np.dtype("<f4") if dtype_code == 0 else np.dtype("<f2")

    off = _HEADER.size
    records: list[MultiVectorEmbedding] = []
    for r in range(count):
        off = _need(path, data, off, _U16.size, f"id length of record {r}")
        (id_len,) = _U16.unpack_from(data, off - _U16.size)
        id_off = off
        off = _need(path, data, off, id_len, f"id bytes of record {r}")
        try:
            record_id = data[id_off : id_off + id_len].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: invalid UTF-8 id at byte {id_off} (record {r})") from None
        off = _need(path, data, off, _REC_HEAD.size, f"row header of record {record_id!r}")
        n, gr, gc = _REC_HEAD.unpack_from(data, off - _REC_HEAD.size)
        if n < 1:
            raise FormatError(
                f"{path}: record {record_id!r} declares {n} rows at byte {off - _REC_HEAD.size}"
            )
        payload = n * dim * value_dtype.itemsize
        val_off = off
        off = _need(path, data, off, payload, f"values of record {record_id!r}")
        vals = np.frombuffer(data, dtype=value_dtype, count=n * dim, offset=val_off)
        rows = vals.reshape(n, dim).astype(np.float32, copy=True)
        grid = (gr, gc) if (gr or gc) else None
        records.append(MultiVectorEmbedding.from_rows(record_id, rows, grid=grid))
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes at byte {off}")

    tokens_by_id = _load_tokens_sidecar(path, tokens_path)
    if tokens_by_id:
        by_id = {rec.id: i for i, rec in enumerate(records)}
        for rec_id, toks in tokens_by_id.items():
            if rec_id not in by_id:
                raise DataError(f"token sidecar names unknown record id {rec_id!r}")
            i = by_id[rec_id]
            rec = records[i]
            records[i] = MultiVectorEmbedding(
                rec.id, rec.vectors, rec.grid, _ingest_tokens(rec.id, toks, rec.n)
            )
    return build_corpus(records, pooling=pooling, dim=dim)


def _need(path: Path, data: bytes, off: int, nbytes: int, what: str) -> int:
    end = off + nbytes
    if end > len(data):
        raise FormatError(f"{path}: truncated file at byte {off} while reading {what}")
    return end


def _load_tokens_sidecar(path: Path, tokens_path) -> dict[str, list[TokenMeta]]:
    if tokens_path is not None:
        tpath = Path(tokens_path)
        if not tpath.exists():
            raise DataError(f"token sidecar {tpath} does not exist")
    else:
        tpath = default_tokens_path(path)
        if not tpath.exists():
            return {}
    out: dict[str, list[TokenMeta]] = {}
    with open(tpath, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{tpath}: line {lineno}: invalid JSON ({exc})") from None
            rec_id = rec.get("id")
            toks = rec.get("tokens")
            if not isinstance(rec_id, str) or not isinstance(toks, list):
                raise DataError(f"{tpath}: line {lineno}: expected an object with 'id' and 'tokens'")
            if rec_id in out:
                raise DataError(f"{tpath}: line {lineno}: duplicate token entry for {rec_id!r}")
            parsed = []
            for t in toks:
                if not isinstance(t, dict) or "text" not in t or "kind" not in t:
                    raise DataError(
                        f"{tpath}: line {lineno}: each token needs 'text' and 'kind' fields"
                    )
                parsed.append(TokenMeta(text=str(t["text"]), kind=t["kind"]))
            out[rec_id] = parsed
    return out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors via a float64 dot product."""
    val = float(np.dot(a.astype(np.float64), b.astype(np.float64)))
    return max(-1.0, min(1.0, val))


def near_square_grid(n: int) -> tuple[int, int]:
    """Most square (rows, cols) factorization of n, rows <= cols."""
    r = int(math.isqrt(n))
    while n % r:
        r -= 1
    return (r, n // r)
