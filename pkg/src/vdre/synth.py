"""Deterministic synthetic corpora, queries, judgments, and OCR sidecars.

Every draw comes from the Philox counter-based generator, keyed by the
spec seed plus a purpose/record path, so generation is reproducible
byte-for-byte across platforms and parallelizable per record.

Structure: query i's single relevant document is document i. A configurable
fraction of the query's user-text token vectors is copied (optionally with
spherical noise) into that document's patch set among random distractor
patches; the document's OCR vocabulary contains exactly those planted token
strings, so they are lexical matches by construction. The adversarial
variant fills the relevant document's remaining patches with vectors
opposite to the query's pooled direction, which sinks its pooled score
while leaving its late-interaction score maximal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .corpus import (
    Corpus,
    MultiVectorEmbedding,
    TokenKind,
    TokenMeta,
    build_corpus,
    near_square_grid,
)
from .coverage import OcrPage, OcrBox
from .evaluation import Qrels

PAD_TEXT = "<|endoftext|>"
PROMPT_TEXT = "query:"

# stream purposes for per-record generator keys
_S_PAD = 1
_S_PROMPT = 2
_S_QUERY = 3
_S_DOC = 4
_S_WORDS = 5
_S_LAYOUT = 6


@dataclass(frozen=True)
class SynthSpec:
    """Generation parameters; identical specs yield identical bytes."""

    seed: int
    num_docs: int
    num_queries: int
    patches_per_doc: int | tuple[int, int] = 30
    tokens_per_query: int | tuple[int, int] = 8
    dim: int = 32
    planted_relevance: float = 1.0
    noise: float = 0.0
    pad_tokens: int = 4
    prompt_tokens: int = 1
    antipode_distractors: bool = False
    id_prefix: str = ""

    def validate(self) -> None:
        if self.dim < 8:
            raise ValueError(f"dim must be at least 8 to embed the planted structure, got {self.dim}")
        if self.num_docs < 0 or self.num_queries < 0:
            raise ValueError("num_docs and num_queries must be non-negative")
        if self.num_queries > self.num_docs:
            raise ValueError(
                f"need one relevant document per query: {self.num_queries} queries > {self.num_docs} docs"
            )
        if not 0.0 <= self.planted_relevance <= 1.0:
            raise ValueError(f"planted_relevance must lie in [0, 1], got {self.planted_relevance}")
        if self.noise < 0:
            raise ValueError(f"noise must be non-negative, got {self.noise}")
        if self.pad_tokens < 0 or self.prompt_tokens < 0:
            raise ValueError("pad_tokens and prompt_tokens must be non-negative")
        for name in ("patches_per_doc", "tokens_per_query"):
            lo, hi = _as_range(getattr(self, name))
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must be a positive int or (lo, hi) range, got {getattr(self, name)}")


def _as_range(value) -> tuple[int, int]:
    if isinstance(value, tuple):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seed=ss))


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _perturb(rng: np.random.Generator, rows: np.ndarray, eps: float) -> np.ndarray:
    if eps == 0.0:
        return rows.copy()
    noisy = rows + eps * rng.standard_normal(rows.shape)
    return noisy / np.linalg.norm(noisy, axis=1, keepdims=True)


def _doc_id(spec: SynthSpec, d: int) -> str:
    return f"{spec.id_prefix}d{d:06d}"


def _query_id(spec: SynthSpec, q: int) -> str:
    return f"{spec.id_prefix}q{q:05d}"


def _query_token_texts(spec: SynthSpec, q: int, count: int) -> list[str]:
    return [f"q{q:03d}t{i:02d}" for i in range(count)]


def _doc_words(spec: SynthSpec, d: int) -> list[str]:
    """Ordered OCR word list for one document.

    Relevant documents lead with their planted query-token strings; all
    documents carry their own distractor vocabulary afterwards.
    """
    words = []
    if d < spec.num_queries:
        t_count = _count_for(spec, _S_QUERY, d, "tokens_per_query")
        planted = _planted_count(spec, t_count)
        words.extend(_query_token_texts(spec, d, t_count)[:planted])
    rng = _stream(spec.seed, _S_WORDS, d)
    n_extra = int(rng.integers(4, 9))
    words.extend(f"w{d:05d}n{j}" for j in range(n_extra))
    return words


def _count_for(spec: SynthSpec, purpose: int, index: int, field: str) -> int:
    lo, hi = _as_range(getattr(spec, field))
    if lo == hi:
        return lo
    rng = _stream(spec.seed, purpose, index, 0)
    return int(rng.integers(lo, hi + 1))


def _planted_count(spec: SynthSpec, token_count: int) -> int:
    return int(round(spec.planted_relevance * token_count))


def _make_query(spec: SynthSpec, q: int, pad_vec: np.ndarray, prompt_vec: np.ndarray) -> MultiVectorEmbedding:
    t_count = _count_for(spec, _S_QUERY, q, "tokens_per_query")
    rng = _stream(spec.seed, _S_QUERY, q, 1)
    text_rows = _unit_rows(rng, t_count, spec.dim)
    rows = []
    tokens = []
    for _ in range(spec.prompt_tokens):
        rows.append(prompt_vec)
        tokens.append(TokenMeta(text=PROMPT_TEXT, kind=TokenKind.PROMPT))
    texts = _query_token_texts(spec, q, t_count)
    for i in range(t_count):
        rows.append(text_rows[i])
        tokens.append(TokenMeta(text=texts[i], kind=TokenKind.QUERY_TEXT))
    for _ in range(spec.pad_tokens):
        rows.append(pad_vec)
        tokens.append(TokenMeta(text=PAD_TEXT, kind=TokenKind.SPECIAL_PAD))
    return MultiVectorEmbedding.from_rows(_query_id(spec, q), np.stack(rows), tokens=tokens)


def _query_text_rows(query: MultiVectorEmbedding) -> np.ndarray:
    idx = [i for i, t in enumerate(query.tokens) if t.kind is TokenKind.QUERY_TEXT]
    return query.vectors[idx]


def _make_doc(spec: SynthSpec, d: int, queries: list[MultiVectorEmbedding]) -> MultiVectorEmbedding:
    n_patches = _count_for(spec, _S_DOC, d, "patches_per_doc")
    rng = _stream(spec.seed, _S_DOC, d, 1)
    planted_rows = np.zeros((0, spec.dim))
    if d < spec.num_queries:
        text_rows = _query_text_rows(queries[d])
        planted = _planted_count(spec, text_rows.shape[0])
        planted_rows = _perturb(rng, text_rows[:planted], spec.noise)
        n_patches = max(n_patches, planted_rows.shape[0] + 1)
    n_fill = n_patches - planted_rows.shape[0]
    if spec.antipode_distractors and d < spec.num_queries:
        # opposite of the query's pooled direction, with a little jitter so
        # rows are distinct; drags the document's mean away from the query
        mean = queries[d].vectors.mean(axis=0)
        mean /= np.linalg.norm(mean)
        fill = -mean + 0.05 * rng.standard_normal((n_fill, spec.dim))
        fill /= np.linalg.norm(fill, axis=1, keepdims=True)
    else:
        fill = _unit_rows(rng, n_fill, spec.dim)
    rows = np.concatenate([planted_rows, fill], axis=0)
    rows = rows[rng.permutation(n_patches)]
    return MultiVectorEmbedding.from_rows(
        _doc_id(spec, d), rows, grid=near_square_grid(n_patches)
    )


def generate(spec: SynthSpec) -> tuple[Corpus, list[MultiVectorEmbedding], Qrels, dict[str, frozenset[str]]]:
    """Corpus, queries, qrels, and per-document OCR token sets."""
    spec.validate()
    pad_vec = _unit_rows(_stream(spec.seed, _S_PAD), 1, spec.dim)[0]
    prompt_vec = _unit_rows(_stream(spec.seed, _S_PROMPT), 1, spec.dim)[0]
    queries = [_make_query(spec, q, pad_vec, prompt_vec) for q in range(spec.num_queries)]
    docs = [_make_doc(spec, d, queries) for d in range(spec.num_docs)]
    corpus = build_corpus(docs, dim=spec.dim if not docs else None)
    qrels: Qrels = {
        _query_id(spec, q): {_doc_id(spec, q): 1} for q in range(spec.num_queries)
    }
    ocr_index = {
        _doc_id(spec, d): frozenset(_doc_words(spec, d)) for d in range(spec.num_docs)
    }
    return corpus, queries, qrels, ocr_index


PAGE_WIDTH = 640
PAGE_HEIGHT = 480

_BOX_W = 88
_BOX_H = 20
_MARGIN = 8
_COLS = 6


def generate_pages(spec: SynthSpec) -> list[OcrPage]:
    """OCR page geometry consistent with the generated token sets.

    One box per OCR word on a fixed layout grid, with per-document width
    jitter so coverage fractions vary across the corpus.
    """
    spec.validate()
    pages = []
    for d in range(spec.num_docs):
        words = _doc_words(spec, d)
        rng = _stream(spec.seed, _S_LAYOUT, d)
        boxes = []
        for j, word in enumerate(words):
            row, col = divmod(j, _COLS)
            x = _MARGIN + col * (_BOX_W + 12)
            y = _MARGIN + row * (_BOX_H + 10)
            if y + _BOX_H > PAGE_HEIGHT - 1:
                break
            w = int(rng.integers(_BOX_W // 2, _BOX_W + 1))
            boxes.append(OcrBox(x=float(x), y=float(y), w=float(w), h=float(_BOX_H), text=word))
        pages.append(OcrPage(doc_id=_doc_id(spec, d), width=PAGE_WIDTH, height=PAGE_HEIGHT, boxes=tuple(boxes)))
    return pages


def render_page(spec: SynthSpec, page: OcrPage, ordinal: int) -> np.ndarray:
    """Grayscale bitmap for one page: white background, dark text boxes,
    and a mid-gray content block whose size varies per document."""
    img = np.full((page.height, page.width), 255, dtype=np.uint8)
    rng = _stream(spec.seed, _S_LAYOUT, ordinal, 1)
    # non-text content block in the lower half
    block_w = int(rng.integers(page.width // 8, page.width // 2))
    block_h = int(rng.integers(page.height // 8, page.height // 3))
    bx = int(rng.integers(0, page.width - block_w))
    by = int(rng.integers(page.height // 2, page.height - block_h))
    img[by : by + block_h, bx : bx + block_w] = 128
    for b in page.boxes:
        x0, y0 = int(b.x), int(b.y)
        x1, y1 = int(math.ceil(b.x + b.w)), int(math.ceil(b.y + b.h))
        img[y0:y1, x0:x1] = 30
    return img


def distractor_spec(seed: int, count: int, base: SynthSpec) -> SynthSpec:
    """Spec for a query-free distractor corpus compatible with ``base``."""
    return replace(
        base,
        seed=seed,
        num_docs=count,
        num_queries=0,
        antipode_distractors=False,
        id_prefix="x" + base.id_prefix,
    )
