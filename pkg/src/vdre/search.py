"""Exhaustive top-k retrieval over a corpus, in either scoring mode.

Every document is scored (no pruning); the hit list therefore equals the
brute-force score-all-then-sort result by construction. Ties of computed
scores are broken by ascending document id, so rankings are deterministic
and stable across corpus shuffles. Note that the BLAS-backed numpy kernel
may separate mathematically identical documents by last-bit rounding that
depends on their position in the corpus (deterministically per run); the
compiled kernel's per-document arithmetic is position-independent.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Mapping, Sequence

import numpy as np

from . import kernels
from .corpus import Corpus, MultiVectorEmbedding, pool
from .errors import BatchSearchError, DataError, DimensionError
from .scoring import ScoreKind, ScoreMask, ScoreMode, masks_for

logger = logging.getLogger(__name__)

_LEXICAL_MASKS = (ScoreMask.QTM_LEXICAL_ONLY, ScoreMask.QTM_NONLEXICAL_ONLY)


@dataclass(frozen=True)
class Hit:
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class Ranking:
    query_id: str
    hits: tuple[Hit, ...]


def score_all(
    corpus: Corpus,
    query: MultiVectorEmbedding,
    mode: ScoreMode,
    ocr_index: Mapping[str, Collection] | None = None,
    *,
    stm_includes_prompt: bool = True,
    near_match: bool = False,
) -> np.ndarray:
    """Score the query against every document; float64, corpus order."""
    if query.dim != corpus.dim:
        raise DimensionError(f"query {query.id!r} has dim {query.dim}, corpus has dim {corpus.dim}")
    if mode.kind is ScoreKind.POOLED:
        pooled_q = pool(query, corpus.pooling).astype(np.float64)
        return corpus.pooled.astype(np.float64) @ pooled_q

    if mode.mask in _LEXICAL_MASKS:
        return _score_all_lexical(
            corpus, query, mode, ocr_index, stm_includes_prompt=stm_includes_prompt, near_match=near_match
        )
    mask = masks_for(query, mode, stm_includes_prompt=stm_includes_prompt)
    if mask.count == 0:
        logger.warning("query %r: no active tokens under mask %s; all scores 0", query.id, mode.mask.value)
        return np.zeros(len(corpus), dtype=np.float64)
    rows = query.vectors[mask.active]
    return kernels.maxsim_scores(rows, corpus.flat, corpus.offsets)


def _score_all_lexical(
    corpus: Corpus,
    query: MultiVectorEmbedding,
    mode: ScoreMode,
    ocr_index,
    *,
    stm_includes_prompt: bool,
    near_match: bool,
) -> np.ndarray:
    """Lexical masks depend on each document's OCR tokens, so documents are
    bucketed by their effective mask and each bucket is scored in one kernel
    call over a gathered sub-corpus."""
    if ocr_index is None:
        raise ValueError(f"mask {mode.mask.value!r} needs an OCR token index covering every document")
    out = np.zeros(len(corpus), dtype=np.float64)
    buckets: dict[bytes, list[int]] = {}
    masks: dict[bytes, np.ndarray] = {}
    for ord_, entry in enumerate(corpus.entries):
        if entry.id not in ocr_index:
            raise DataError(f"no OCR token set for document {entry.id!r} under mask {mode.mask.value!r}")
        mask = masks_for(
            query, mode, ocr_index[entry.id], stm_includes_prompt=stm_includes_prompt, near_match=near_match
        )
        key = np.packbits(mask.active).tobytes()
        buckets.setdefault(key, []).append(ord_)
        masks[key] = mask.active
    warned = False
    for key, ords in buckets.items():
        active = masks[key]
        if not active.any():
            if not warned:
                logger.warning(
                    "query %r: no active tokens under mask %s for %d documents; scores 0",
                    query.id,
                    mode.mask.value,
                    len(ords),
                )
                warned = True
            continue
        rows = query.vectors[active]
        lengths = np.array([corpus.offsets[d + 1] - corpus.offsets[d] for d in ords], dtype=np.int64)
        row_idx = np.concatenate(
            [np.arange(corpus.offsets[d], corpus.offsets[d + 1]) for d in ords]
        )
        sub_flat = corpus.flat[row_idx]
        sub_offsets = np.zeros(len(ords) + 1, dtype=np.int64)
        np.cumsum(lengths, out=sub_offsets[1:])
        out[np.asarray(ords)] = kernels.maxsim_scores(rows, sub_flat, sub_offsets)
    return out


def _top_k(scores: np.ndarray, ids: Sequence[str], k: int) -> list[Hit]:
    m = scores.shape[0]
    kk = min(k, m)
    if kk == 0:
        return []
    if kk < m:
        part = np.argpartition(-scores, kk - 1)
        threshold = scores[part[kk - 1]]
        cand = np.flatnonzero(scores >= threshold)
    else:
        cand = np.arange(m)
    order = sorted(cand.tolist(), key=lambda i: (-scores[i], ids[i]))[:kk]
    return [Hit(doc_id=ids[i], score=float(scores[i]), rank=r + 1) for r, i in enumerate(order)]


def search(
    corpus: Corpus,
    query: MultiVectorEmbedding,
    mode: ScoreMode,
    k: int,
    ocr_index=None,
    *,
    stm_includes_prompt: bool = True,
    near_match: bool = False,
) -> Ranking:
    """Top-k documents for one query under the given scoring mode."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    scores = score_all(
        corpus, query, mode, ocr_index, stm_includes_prompt=stm_includes_prompt, near_match=near_match
    )
    ids = corpus.ids
    return Ranking(query_id=query.id, hits=tuple(_top_k(scores, ids, k)))


def batch_search(
    corpus: Corpus,
    queries: Sequence[MultiVectorEmbedding],
    mode: ScoreMode,
    k: int,
    ocr_index=None,
    workers: int | None = None,
    *,
    stm_includes_prompt: bool = True,
    near_match: bool = False,
) -> list[Ranking]:
    """search() over a query list; output order matches input order.

    Queries are evaluated concurrently over the immutable corpus; failures
    are collected and raised together with query-id attribution.
    """

    def one(query: MultiVectorEmbedding) -> Ranking:
        return search(
            corpus,
            query,
            mode,
            k,
            ocr_index,
            stm_includes_prompt=stm_includes_prompt,
            near_match=near_match,
        )

    results: list[Ranking | None] = [None] * len(queries)
    failures: list[tuple[str, Exception]] = []
    if workers is not None and workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    if workers == 1 or len(queries) <= 1:
        for i, q in enumerate(queries):
            try:
                results[i] = one(q)
            except Exception as exc:  # noqa: BLE001 - aggregated below
                failures.append((q.id, exc))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool_:
            futures = [pool_.submit(one, q) for q in queries]
            for i, (q, fut) in enumerate(zip(queries, futures)):
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures.append((q.id, exc))
    if failures:
        raise BatchSearchError(failures)
    return results  # type: ignore[return-value]


def write_run(rankings: Sequence[Ranking], path, tag: str = "vdre") -> None:
    """Write the six-column tab-separated run file.

    Columns: query_id, Q0, doc_id, rank, score (9 significant digits), tag.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for ranking in rankings:
            for hit in ranking.hits:
                f.write(
                    f"{ranking.query_id}\tQ0\t{hit.doc_id}\t{hit.rank}\t{hit.score:.9g}\t{tag}\n"
                )


def read_run(path) -> list[Ranking]:
    """Parse a run file back into rankings, preserving file order."""
    path = Path(path)
    per_query: dict[str, list[Hit]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise DataError(f"{path}: line {lineno}: expected 6 tab-separated columns, got {len(parts)}")
            qid, _, doc_id, rank, score, _ = parts
            if qid not in per_query:
                per_query[qid] = []
                order.append(qid)
            per_query[qid].append(Hit(doc_id=doc_id, score=float(score), rank=int(rank)))
    out = []
    for qid in order:
        hits = sorted(per_query[qid], key=lambda h: h.rank)
        for i, h in enumerate(hits, start=1):
            if h.rank != i:
                raise DataError(f"{path}: query {qid!r} has non-contiguous ranks")
        out.append(Ranking(query_id=qid, hits=tuple(hits)))
    return out
