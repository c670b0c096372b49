"""Retrieval metrics against graded qrels, plus the index-scaling benchmark.

Qrels files are tab-separated ``query_id 0 doc_id grade``. Unjudged
documents count as non-relevant. A query that appears in a run but not in
the qrels is an explicit error, never a silent zero.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, MultiVectorEmbedding, build_corpus
from .errors import DataError, EvaluationError
from .scoring import ScoreMode
from .search import Ranking, search

Qrels = dict[str, dict[str, int]]


def load_qrels(path) -> Qrels:
    path = Path(path)
    out: Qrels = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataError(f"{path}: line {lineno}: expected 4 columns, got {len(parts)}")
            qid, _, doc_id, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: grade {grade!r} is not an integer") from None
            if g < 0:
                raise DataError(f"{path}: line {lineno}: negative grade {g}")
            out.setdefault(qid, {})[doc_id] = g
    return out


def write_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid in qrels:
            for doc_id, grade in qrels[qid].items():
                f.write(f"{qid}\t0\t{doc_id}\t{grade}\n")


def _judgments(ranking: Ranking, qrels: Qrels) -> dict[str, int]:
    try:
        return qrels[ranking.query_id]
    except KeyError:
        raise EvaluationError(f"query {ranking.query_id!r} has no qrels entry") from None


def ndcg_at_k(ranking: Ranking, qrels: Qrels, k: int) -> float:
    """Discounted cumulative gain at k over the ideal arrangement.

    Gain is the relevance grade, discount 1/log2(rank+1). The ideal uses
    the query's full judged set, truncated at k.
    """
    rels = _judgments(ranking, qrels)
    ideal = sorted((g for g in rels.values() if g > 0), reverse=True)
    if not ideal:
        raise EvaluationError(
            f"query {ranking.query_id!r} has no relevant documents; ideal DCG undefined"
        )
    dcg = sum(
        rels.get(hit.doc_id, 0) / math.log2(hit.rank + 1)
        for hit in ranking.hits
        if hit.rank <= k
    )
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal[:k]))
    return dcg / idcg


def recall_at_k(ranking: Ranking, qrels: Qrels, k: int) -> float:
    """Fraction of the query's relevant documents present in the top k."""
    rels = _judgments(ranking, qrels)
    relevant = {d for d, g in rels.items() if g > 0}
    if not relevant:
        raise EvaluationError(
            f"query {ranking.query_id!r} has no relevant documents; recall undefined"
        )
    found = sum(1 for hit in ranking.hits if hit.rank <= k and hit.doc_id in relevant)
    return found / len(relevant)


def evaluate_rankings(
    rankings: Sequence[Ranking], qrels: Qrels, ndcg_k: int = 5, recall_k: int = 1
) -> list[dict]:
    """Per-query metric records followed by a mean summary record."""
    records = []
    for r in rankings:
        records.append(
            {
                "query_id": r.query_id,
                f"ndcg@{ndcg_k}": ndcg_at_k(r, qrels, ndcg_k),
                f"recall@{recall_k}": recall_at_k(r, qrels, recall_k),
            }
        )
    if records:
        mean_ndcg = sum(rec[f"ndcg@{ndcg_k}"] for rec in records) / len(records)
        mean_recall = sum(rec[f"recall@{recall_k}"] for rec in records) / len(records)
    else:
        mean_ndcg = mean_recall = 0.0
    records.append(
        {
            "summary": True,
            "queries": len(rankings),
            f"mean_ndcg@{ndcg_k}": mean_ndcg,
            f"mean_recall@{recall_k}": mean_recall,
        }
    )
    return records


def write_jsonl(records: Sequence[Mapping], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class LatencyReport:
    """Per-query latency and effectiveness at one corpus size."""

    corpus_size: int
    mode: str
    workers: int
    latencies: tuple[float, ...]
    ndcg5: float
    mean: float = field(init=False)
    p50: float = field(init=False)
    p95: float = field(init=False)

    def __post_init__(self):
        lat = np.asarray(self.latencies, dtype=np.float64)
        object.__setattr__(self, "mean", float(lat.mean()) if lat.size else 0.0)
        object.__setattr__(self, "p50", float(np.percentile(lat, 50)) if lat.size else 0.0)
        object.__setattr__(self, "p95", float(np.percentile(lat, 95)) if lat.size else 0.0)

    def to_record(self) -> dict:
        return {
            "corpus_size": self.corpus_size,
            "mode": self.mode,
            "workers": self.workers,
            "queries": len(self.latencies),
            "mean_latency_s": self.mean,
            "p50_latency_s": self.p50,
            "p95_latency_s": self.p95,
            "ndcg@5": self.ndcg5,
            "latencies_s": list(self.latencies),
        }


def _timed_pass(
    corpus: Corpus,
    queries: Sequence[MultiVectorEmbedding],
    mode: ScoreMode,
    k: int,
    ocr_index,
    workers: int,
) -> tuple[list[Ranking], list[float]]:
    def one(q: MultiVectorEmbedding) -> tuple[Ranking, float]:
        t0 = time.perf_counter()
        r = search(corpus, q, mode, k, ocr_index)
        return r, time.perf_counter() - t0

    if workers == 1:
        pairs = [one(q) for q in queries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool_:
            pairs = list(pool_.map(one, queries))
    return [p[0] for p in pairs], [p[1] for p in pairs]


def bench_scaling(
    corpus_sizes: Sequence[int],
    base_corpus: Corpus,
    distractor_source: Corpus,
    queries: Sequence[MultiVectorEmbedding],
    qrels: Qrels,
    mode: ScoreMode,
    k: int = 5,
    workers: int = 1,
    ocr_index=None,
) -> list[LatencyReport]:
    """Effectiveness and per-query latency as the index grows.

    Each size takes the whole base corpus plus a prefix of the distractor
    source. The first search pass at each size is a discarded warm-up;
    the second records per-query wall clock (scoring plus ranking, not
    corpus construction) and nDCG@5 on the same run.
    """
    sizes = [int(s) for s in corpus_sizes]
    if sizes != sorted(sizes):
        raise ValueError(f"corpus sizes must be ascending, got {sizes}")
    base_n = len(base_corpus)
    total = base_n + len(distractor_source)
    for s in sizes:
        if s < base_n:
            raise ValueError(f"size {s} is smaller than the base corpus ({base_n} documents)")
        if s > total:
            raise DataError(
                f"size {s} needs {s - base_n} distractors but only {len(distractor_source)} are available"
            )
    overlap = set(base_corpus.id_index) & set(distractor_source.id_index)
    if overlap:
        raise DataError(f"duplicate ids across base and distractors: {sorted(overlap)[:5]}")
    relevant_ids = {d for per_q in qrels.values() for d, g in per_q.items() if g > 0}
    judged_distractors = relevant_ids & set(distractor_source.id_index)
    if judged_distractors:
        raise DataError(
            f"distractor documents appear as relevant in the qrels: {sorted(judged_distractors)[:5]}"
        )

    reports = []
    for s in sizes:
        entries = list(base_corpus.entries) + list(distractor_source.entries[: s - base_n])
        corpus = build_corpus(entries, pooling=base_corpus.pooling)
        _timed_pass(corpus, queries, mode, k, ocr_index, workers)  # warm-up, discarded
        rankings, latencies = _timed_pass(corpus, queries, mode, k, ocr_index, workers)
        ndcg5 = (
            sum(ndcg_at_k(r, qrels, 5) for r in rankings) / len(rankings) if rankings else 0.0
        )
        reports.append(
            LatencyReport(
                corpus_size=s,
                mode=mode.label,
                workers=workers,
                latencies=tuple(latencies),
                ndcg5=ndcg5,
            )
        )
    return reports
