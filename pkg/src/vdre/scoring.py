"""Relevance scoring: pooled single-vector and token-patch late interaction.

Late interaction assigns each query token the maximum similarity it reaches
over the document's patch rows and sums those maxima. Because the sum runs
over query tokens, it decomposes exactly by token kind, which is what the
matching-attribution masks exploit: activating only pad/prompt tokens,
only user-text tokens, or only the user-text tokens that (do not) occur
verbatim in the document's OCR text.

Also implements the pairwise-contrastive loss over a positive score and
the hardest in-batch negative, with its analytic gradient.
"""

from __future__ import annotations

import logging
import math
import string
from dataclasses import dataclass
from enum import Enum
from typing import Collection

import numpy as np

from . import kernels
from .corpus import MultiVectorEmbedding, TokenKind, cosine, pool
from .errors import DataError, DimensionError

logger = logging.getLogger(__name__)


class ScoreKind(str, Enum):
    POOLED = "pooled"
    MAXSIM = "maxsim"


class ScoreMask(str, Enum):
    ALL = "all"
    STM_ONLY = "stm_only"
    QTM_ONLY = "qtm_only"
    QTM_LEXICAL_ONLY = "qtm_lexical_only"
    QTM_NONLEXICAL_ONLY = "qtm_nonlexical_only"


_LEXICAL_MASKS = (ScoreMask.QTM_LEXICAL_ONLY, ScoreMask.QTM_NONLEXICAL_ONLY)


@dataclass(frozen=True)
class ScoreMode:
    """Scoring configuration: pooled vs late interaction, plus a token mask.

    Masks other than ``all`` require late interaction; pooled scoring has
    no per-token decomposition to mask.
    """

    kind: ScoreKind = ScoreKind.MAXSIM
    mask: ScoreMask = ScoreMask.ALL

    def __post_init__(self):
        object.__setattr__(self, "kind", ScoreKind(self.kind))
        object.__setattr__(self, "mask", ScoreMask(self.mask))
        if self.mask is not ScoreMask.ALL and self.kind is not ScoreKind.MAXSIM:
            raise ValueError(f"mask {self.mask.value!r} requires maxsim scoring, not {self.kind.value!r}")

    @property
    def label(self) -> str:
        return self.kind.value if self.mask is ScoreMask.ALL else f"{self.kind.value}/{self.mask.value}"


@dataclass(frozen=True)
class TokenMask:
    """Per-query-token activation flags, aligned with the query's rows."""

    active: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.active, dtype=bool))
        if arr.ndim != 1:
            raise ValueError("token mask must be one-dimensional")
        arr.flags.writeable = False
        object.__setattr__(self, "active", arr)

    def __len__(self) -> int:
        return int(self.active.shape[0])

    @property
    def count(self) -> int:
        return int(self.active.sum())


_STRIP_CHARS = string.punctuation + string.whitespace + "“”‘’«»…–—"
_SUBWORD_MARKERS = ("##", "▁", "Ġ")  # wordpiece, sentencepiece, byte-BPE markers


def normalize_token(text: str) -> str:
    """Canonical surface form used for lexical matching.

    Lowercases, strips subword-continuation markers, and trims leading and
    trailing punctuation. Kept deliberately simple so results are
    deterministic and reproducible across runs.
    """
    t = text.strip()
    changed = True
    while changed:
        changed = False
        for marker in _SUBWORD_MARKERS:
            if t.startswith(marker):
                t = t[len(marker):]
                changed = True
    return t.strip(_STRIP_CHARS).lower()


def _within_edit_distance_one(a: str, b: str) -> bool:
    if a == b:
        return True
    la, lb = len(a), len(b)
    if abs(la - lb) > 1:
        return False
    if la > lb:
        a, b, la, lb = b, a, lb, la
    # a is the shorter (or equal) string; allow one substitution/insertion
    i = j = 0
    used = False
    while i < la and j < lb:
        if a[i] == b[j]:
            i += 1
            j += 1
            continue
        if used:
            return False
        used = True
        if la == lb:
            i += 1
        j += 1
    return True


def _lexical_member(token: str, vocab: Collection[str], near_match: bool) -> bool:
    if token in vocab:
        return True
    if not near_match:
        return False
    return any(_within_edit_distance_one(token, v) for v in vocab)


def masks_for(
    query: MultiVectorEmbedding,
    mode: ScoreMode | ScoreMask,
    doc_ocr_tokens: Collection[str] | None = None,
    *,
    stm_includes_prompt: bool = True,
    near_match: bool = False,
) -> TokenMask:
    """Token activation mask for a scoring mode.

    Lexical modes test each user-text token's normalized surface form for
    membership in the document's normalized OCR token set, so they need
    ``doc_ocr_tokens``. ``stm_includes_prompt`` controls whether prompt
    tokens count as special-token matching (the default) or are dropped
    from both categories, in which case the stm/qtm partition of the full
    score no longer holds.
    """
    mask = mode.mask if isinstance(mode, ScoreMode) else ScoreMask(mode)
    n = query.n
    if mask is ScoreMask.ALL:
        return TokenMask(np.ones(n, dtype=bool))
    if query.tokens is None:
        raise DataError(f"query {query.id!r} has no token metadata; cannot build a {mask.value} mask")
    kinds = [t.kind for t in query.tokens]
    is_text = np.array([k is TokenKind.QUERY_TEXT for k in kinds], dtype=bool)
    if mask is ScoreMask.STM_ONLY:
        stm_kinds = {TokenKind.SPECIAL_PAD, TokenKind.PROMPT} if stm_includes_prompt else {TokenKind.SPECIAL_PAD}
        return TokenMask(np.array([k in stm_kinds for k in kinds], dtype=bool))
    if mask is ScoreMask.QTM_ONLY:
        return TokenMask(is_text)
    if doc_ocr_tokens is None:
        raise ValueError(f"mask {mask.value!r} needs the document's OCR token set")
    matches = np.array(
        [
            bool(is_text[i]) and _lexical_member(normalize_token(query.tokens[i].text), doc_ocr_tokens, near_match)
            for i in range(n)
        ],
        dtype=bool,
    )
    if mask is ScoreMask.QTM_LEXICAL_ONLY:
        return TokenMask(matches)
    return TokenMask(is_text & ~matches)


def score_pooled(query: MultiVectorEmbedding, doc: MultiVectorEmbedding, pooling: str = "mean") -> float:
    """Cosine similarity of the two pooled representations, in [-1, 1]."""
    _check_dims(query, doc)
    return cosine(pool(query, pooling), pool(doc, pooling))


def score_maxsim(
    query: MultiVectorEmbedding,
    doc: MultiVectorEmbedding,
    mask: TokenMask | None = None,
) -> float:
    """Sum over active query tokens of the max similarity over doc rows.

    An empty active mask scores 0 (with a logged warning) so that masked
    rankings stay total even when a query lacks tokens of some kind.
    """
    _check_dims(query, doc)
    rows = query.vectors
    if mask is not None:
        if len(mask) != query.n:
            raise ValueError(f"mask length {len(mask)} != query row count {query.n}")
        if mask.count == 0:
            logger.warning("query %r: no active tokens under mask; score defined as 0", query.id)
            return 0.0
        rows = rows[mask.active]
    offsets = np.array([0, doc.n], dtype=np.int64)
    return float(kernels.maxsim_scores(rows, doc.vectors, offsets)[0])


def _check_dims(query: MultiVectorEmbedding, doc: MultiVectorEmbedding) -> None:
    if query.dim != doc.dim:
        raise DimensionError(
            f"query {query.id!r} has dim {query.dim}, document {doc.id!r} has dim {doc.dim}"
        )


def contrastive_loss(s_pos: float, s_negs, tau: float = 1.0) -> float:
    """Pairwise contrastive loss against the hardest negative.

    Softmax over the positive score and the maximum negative score at
    temperature ``tau``, evaluated in log-sum-exp form so extreme score
    gaps neither overflow nor lose the tail.
    """
    tau = float(tau)
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    negs = [float(s) for s in s_negs]
    if not negs:
        raise ValueError("need at least one negative score")
    gap = (max(negs) - float(s_pos)) / tau
    return float(np.logaddexp(0.0, gap))


def contrastive_loss_grad(s_pos: float, s_negs, tau: float = 1.0) -> tuple[float, float]:
    """Analytic gradient of :func:`contrastive_loss`.

    Returns (d/ds_pos, d/ds_neg*) where s_neg* is the hardest negative;
    the gradient w.r.t. every non-maximal negative is zero.
    """
    tau = float(tau)
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    negs = [float(s) for s in s_negs]
    if not negs:
        raise ValueError("need at least one negative score")
    margin = (float(s_pos) - max(negs)) / tau
    # 1 - p = sigmoid(-margin), computed via tanh for stability at large margins
    one_minus_p = 0.5 * (1.0 + math.tanh(-margin / 2.0))
    return (-one_minus_p / tau, one_minus_p / tau)
