"""Shared fixtures and independent oracle implementations.

The oracles here are deliberately naive (explicit loops, from-definition
formulas) and never call the engine code paths they are used to check.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from vdre.corpus import MultiVectorEmbedding, TokenKind, TokenMeta


def oracle_maxsim(query_rows: np.ndarray, doc_rows: np.ndarray, active=None) -> float:
    """Late-interaction score by explicit double loop over tokens and rows."""
    total = 0.0
    for i in range(query_rows.shape[0]):
        if active is not None and not active[i]:
            continue
        best = -math.inf
        for j in range(doc_rows.shape[0]):
            s = float(np.dot(query_rows[i].astype(np.float64), doc_rows[j].astype(np.float64)))
            if s > best:
                best = s
        total += best
    return total


def oracle_ndcg(ranked_doc_ids, rels: dict[str, int], k: int) -> float:
    """nDCG@k straight from the definition, no shared code with the engine."""
    dcg = 0.0
    for rank, doc_id in enumerate(ranked_doc_ids[:k], start=1):
        gain = rels.get(doc_id, 0)
        dcg += gain / math.log2(rank + 1)
    ideal = sorted((g for g in rels.values() if g > 0), reverse=True)[:k]
    idcg = 0.0
    for rank, gain in enumerate(ideal, start=1):
        idcg += gain / math.log2(rank + 1)
    return dcg / idcg


def oracle_recall(ranked_doc_ids, rels: dict[str, int], k: int) -> float:
    relevant = {d for d, g in rels.items() if g > 0}
    hit = sum(1 for d in ranked_doc_ids[:k] if d in relevant)
    return hit / len(relevant)


def central_difference(f, x: float, step: float = 1e-4) -> float:
    return (f(x + step) - f(x - step)) / (2.0 * step)


def random_unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def make_embedding(rng, rec_id: str, n: int, dim: int, grid=None, tokens=None) -> MultiVectorEmbedding:
    return MultiVectorEmbedding.from_rows(rec_id, random_unit_rows(rng, n, dim), grid=grid, tokens=tokens)


def make_query_with_kinds(rng, rec_id: str, dim: int, n_text: int, n_pad: int, n_prompt: int):
    """Query embedding whose rows mix all three token kinds."""
    n = n_text + n_pad + n_prompt
    rows = random_unit_rows(rng, n, dim)
    tokens = []
    for i in range(n_prompt):
        tokens.append(TokenMeta(text="query:", kind=TokenKind.PROMPT))
    for i in range(n_text):
        tokens.append(TokenMeta(text=f"word{i}", kind=TokenKind.QUERY_TEXT))
    for i in range(n_pad):
        tokens.append(TokenMeta(text="<|endoftext|>", kind=TokenKind.SPECIAL_PAD))
    return MultiVectorEmbedding.from_rows(rec_id, rows, tokens=tokens)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
