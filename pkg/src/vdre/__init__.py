"""Late-interaction visual document retrieval over precomputed embeddings.

Queries are token-embedding matrices, documents are patch-embedding
matrices. The engine ranks documents either by cosine of pooled vectors or
by late interaction (per-token maximum similarity, summed), evaluates runs
against qrels, and provides the matching-attribution and visual-coverage
analyses plus a deterministic synthetic data generator.
"""

from .corpus import (
    Corpus,
    MultiVectorEmbedding,
    TokenKind,
    TokenMeta,
    build_corpus,
    load_corpus,
    pool,
    write_corpus,
)
from .errors import (
    BatchSearchError,
    DataError,
    DimensionError,
    EvaluationError,
    FormatError,
    VdreError,
)
from .scoring import (
    ScoreKind,
    ScoreMask,
    ScoreMode,
    TokenMask,
    contrastive_loss,
    contrastive_loss_grad,
    masks_for,
    normalize_token,
    score_maxsim,
    score_pooled,
)
from .search import Hit, Ranking, batch_search, read_run, search, write_run
from .evaluation import (
    LatencyReport,
    Qrels,
    bench_scaling,
    evaluate_rankings,
    load_qrels,
    ndcg_at_k,
    recall_at_k,
    write_qrels,
)
from .mannwhitney import mann_whitney
from .coverage import (
    FEATURE_NAMES,
    OcrBox,
    OcrPage,
    VisualFeatures,
    background_mask,
    coverage,
    load_ocr_pages,
    ocr_token_sets,
    write_ocr_pages,
)
from .analysis import (
    GroupSplit,
    SignificanceGrid,
    export_simmap,
    feature_significance,
    matching_ablation,
    split_by_first_rank,
)
from .synth import SynthSpec, generate, generate_pages

__version__ = "0.1.0"
