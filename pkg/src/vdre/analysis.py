"""Retrieval behavior analysis: feature significance, matching ablation,
and per-token similarity-map export.

The significance analysis splits the judged relevant documents of a run
into the ones their query ranked first versus the rest, then asks, per
visual feature, whether the first group's values are stochastically
larger (one-sided by default, two-sided available).

The matching ablation re-ranks the corpus once per token-mask mode and
reports nDCG@5 with the percentage change against unmasked scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, MultiVectorEmbedding
from .coverage import FEATURE_NAMES, VisualFeatures
from .errors import DataError, EvaluationError
from .evaluation import Qrels, ndcg_at_k
from .mannwhitney import mann_whitney
from .scoring import ScoreKind, ScoreMask, ScoreMode
from .search import Ranking, batch_search


@dataclass(frozen=True)
class GroupSplit:
    """Judged relevant documents split by first-rank success.

    ``ranked_first`` holds (query_id, doc_id) pairs where the query's top
    hit is that relevant document; ``not_ranked_first`` holds the rest.
    Together they cover every judged relevant document of the evaluated
    queries.
    """

    ranked_first: tuple[tuple[str, str], ...]
    not_ranked_first: tuple[tuple[str, str], ...]


def split_by_first_rank(rankings: Sequence[Ranking], qrels: Qrels) -> GroupSplit:
    group_a: list[tuple[str, str]] = []
    group_b: list[tuple[str, str]] = []
    for r in rankings:
        try:
            rels = qrels[r.query_id]
        except KeyError:
            raise EvaluationError(f"query {r.query_id!r} has no qrels entry") from None
        top = r.hits[0].doc_id if r.hits else None
        for doc_id, grade in rels.items():
            if grade <= 0:
                continue
            (group_a if doc_id == top else group_b).append((r.query_id, doc_id))
    return GroupSplit(ranked_first=tuple(group_a), not_ranked_first=tuple(group_b))


@dataclass(frozen=True)
class SignificanceCell:
    feature: str
    dataset: str
    n_a: int
    n_b: int
    u: float | None
    p: float | None

    @property
    def computable(self) -> bool:
        return self.p is not None

    def to_record(self) -> dict:
        return {
            "feature": self.feature,
            "dataset": self.dataset,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "u": self.u,
            "p": self.p,
        }


@dataclass(frozen=True)
class SignificanceGrid:
    feature_names: tuple[str, ...]
    dataset_names: tuple[str, ...]
    cells: tuple[SignificanceCell, ...]

    def cell(self, feature: str, dataset: str) -> SignificanceCell:
        for c in self.cells:
            if c.feature == feature and c.dataset == dataset:
                return c
        raise KeyError((feature, dataset))

    def to_records(self) -> list[dict]:
        return [c.to_record() for c in self.cells]


def feature_significance(
    splits: Mapping[str, GroupSplit],
    features: Mapping[str, Mapping[str, VisualFeatures]],
    feature_names: Sequence[str] = FEATURE_NAMES,
    alternative: str = "a_greater",
) -> SignificanceGrid:
    """Rank-test p-value per (feature, dataset) cell.

    ``splits`` and ``features`` are keyed by dataset name; ``features``
    maps doc_id to the document's feature record. A cell whose split
    leaves either group empty is marked not computable (p is None).
    """
    datasets = tuple(splits.keys())
    cells = []
    for feature in feature_names:
        for dataset in datasets:
            split = splits[dataset]
            feats = features[dataset]
            vals_a = [_feature_value(feats, d, feature, dataset) for _, d in split.ranked_first]
            vals_b = [_feature_value(feats, d, feature, dataset) for _, d in split.not_ranked_first]
            if not vals_a or not vals_b:
                cells.append(
                    SignificanceCell(feature, dataset, len(vals_a), len(vals_b), None, None)
                )
                continue
            u, p = mann_whitney(vals_a, vals_b, alternative=alternative)
            cells.append(SignificanceCell(feature, dataset, len(vals_a), len(vals_b), u, p))
    return SignificanceGrid(
        feature_names=tuple(feature_names), dataset_names=datasets, cells=tuple(cells)
    )


def _feature_value(feats: Mapping[str, VisualFeatures], doc_id: str, feature: str, dataset: str) -> float:
    try:
        rec = feats[doc_id]
    except KeyError:
        raise DataError(f"dataset {dataset!r}: no feature record for document {doc_id!r}") from None
    return float(getattr(rec, feature))


_MASK_LABELS = {
    ScoreMask.ALL: "all",
    ScoreMask.STM_ONLY: "stm",
    ScoreMask.QTM_ONLY: "qtm",
    ScoreMask.QTM_LEXICAL_ONLY: "qtm_lexical",
    ScoreMask.QTM_NONLEXICAL_ONLY: "qtm_nonlexical",
}


def matching_ablation(
    corpus: Corpus,
    queries: Sequence[MultiVectorEmbedding],
    qrels: Qrels,
    modes: Sequence[ScoreMask | ScoreMode],
    ocr_index=None,
    k: int = 5,
    workers: int = 1,
    *,
    stm_includes_prompt: bool = True,
    near_match: bool = False,
) -> list[dict]:
    """nDCG@5 per token-mask mode with deltas against unmasked scoring.

    The unmasked baseline is always evaluated (and prepended when not
    requested) because the deltas are defined relative to it.
    """
    masks: list[ScoreMask] = []
    for m in modes:
        mask = m.mask if isinstance(m, ScoreMode) else ScoreMask(m)
        if mask not in masks:
            masks.append(mask)
    if ScoreMask.ALL not in masks:
        masks.insert(0, ScoreMask.ALL)

    rows = []
    baseline: float | None = None
    for mask in masks:
        mode = ScoreMode(ScoreKind.MAXSIM, mask)
        rankings = batch_search(
            corpus,
            queries,
            mode,
            max(k, 5),
            ocr_index,
            workers=workers,
            stm_includes_prompt=stm_includes_prompt,
            near_match=near_match,
        )
        ndcg5 = sum(ndcg_at_k(r, qrels, 5) for r in rankings) / len(rankings) if rankings else 0.0
        if mask is ScoreMask.ALL:
            baseline = ndcg5
        rows.append({"mask": _MASK_LABELS[mask], "ndcg@5": ndcg5})
    assert baseline is not None
    for row in rows:
        row["delta_pct"] = 0.0 if baseline == 0 else (row["ndcg@5"] - baseline) / baseline * 100.0
    return rows


def write_tsv(rows: Sequence[Mapping], path, columns: Sequence[str]) -> None:
    """Tab-separated summary with a header row; floats at 6 digits."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(columns) + "\n")
        for row in rows:
            cells = []
            for col in columns:
                v = row.get(col)
                if v is None:
                    cells.append("NA")
                elif isinstance(v, float):
                    cells.append(f"{v:.6g}")
                else:
                    cells.append(str(v))
            f.write("\t".join(cells) + "\n")


def export_simmap(query: MultiVectorEmbedding, doc: MultiVectorEmbedding, path) -> None:
    """Per-token similarity map over the document's patch grid, as JSONL.

    The first line is a header with ids and the grid shape; each following
    line carries one query token's full similarity vector, its best patch
    index, and that patch's (row, col) position. This is everything needed
    to plot token-to-patch heatmaps externally.
    """
    if doc.grid is None:
        raise DataError(f"document {doc.id!r} has no patch grid; cannot export a similarity map")
    if query.dim != doc.dim:
        raise DataError(f"query {query.id!r} dim {query.dim} != document {doc.id!r} dim {doc.dim}")
    rows, cols = doc.grid
    sims = query.vectors @ doc.vectors.T
    with open(Path(path), "w", encoding="utf-8") as f:
        header = {
            "query_id": query.id,
            "doc_id": doc.id,
            "grid_rows": rows,
            "grid_cols": cols,
            "dim": query.dim,
        }
        f.write(json.dumps(header, ensure_ascii=False) + "\n")
        for i in range(query.n):
            vec = sims[i]
            arg = int(np.argmax(vec))
            tok = query.tokens[i] if query.tokens is not None else None
            rec = {
                "token": tok.text if tok else None,
                "kind": tok.kind.value if tok else None,
                "similarities": [float(v) for v in vec],
                "argmax": arg,
                "argmax_row": arg // cols,
                "argmax_col": arg % cols,
                "max": float(vec[arg]),
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
