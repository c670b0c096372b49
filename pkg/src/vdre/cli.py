"""Command-line entry point.

Subcommands: index, search, evaluate, bench, analyze features,
analyze matching, simmap, synth. All reports are machine-readable
(line-delimited JSON or TSV) with a short human summary on stdout.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .analysis import (
    export_simmap,
    feature_significance,
    matching_ablation,
    split_by_first_rank,
    write_tsv,
)
from .corpus import build_corpus, load_corpus, write_corpus
from .errors import DataError, VdreError
from .coverage import background_mask, coverage, load_grayscale, load_ocr_pages, ocr_token_sets, write_ocr_pages, write_pgm
from .evaluation import (
    bench_scaling,
    evaluate_rankings,
    load_qrels,
    write_jsonl,
    write_qrels,
)
from .scoring import ScoreKind, ScoreMask, ScoreMode
from .search import batch_search, read_run, write_run
from .synth import SynthSpec, generate, generate_pages, render_page

_MASK_FLAG = {
    "all": ScoreMask.ALL,
    "stm": ScoreMask.STM_ONLY,
    "qtm": ScoreMask.QTM_ONLY,
    "qtm-lex": ScoreMask.QTM_LEXICAL_ONLY,
    "qtm-nonlex": ScoreMask.QTM_NONLEXICAL_ONLY,
}

_LEXICAL = (ScoreMask.QTM_LEXICAL_ONLY, ScoreMask.QTM_NONLEXICAL_ONLY)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; this engine reserves 2
    for data errors, so usage failures are remapped to exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class Config:
    """Validated run configuration shared by the subcommands."""

    command: str
    mode: ScoreMode | None = None
    k: int = 10
    tau: float = 1.0
    bg_threshold: int = 250
    workers: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError(f"--k must be at least 1, got {self.k}")
        if self.tau <= 0:
            raise ValueError(f"--tau must be positive, got {self.tau}")
        if not 0 <= self.bg_threshold <= 255:
            raise ValueError(f"--bg-threshold must lie in [0, 255], got {self.bg_threshold}")
        if self.workers < 1:
            raise ValueError(f"--workers must be at least 1, got {self.workers}")


def _mode_from(args) -> ScoreMode:
    kind = ScoreKind(args.mode)
    mask = _MASK_FLAG[args.mask]
    return ScoreMode(kind, mask)


def _config_from(args, command: str) -> Config:
    cfg = Config(
        command=command,
        mode=_mode_from(args) if hasattr(args, "mode") else None,
        k=getattr(args, "k", 10),
        tau=getattr(args, "tau", 1.0),
        bg_threshold=getattr(args, "bg_threshold", 250),
        workers=getattr(args, "workers", 1),
        seed=getattr(args, "seed", 0),
    )
    cfg.validate()
    return cfg


def _add_mode_flags(p: argparse.ArgumentParser, default_k: int = 10) -> None:
    p.add_argument("--mode", choices=["pooled", "maxsim"], default="maxsim")
    p.add_argument("--mask", choices=sorted(_MASK_FLAG), default="all")
    p.add_argument("--k", type=int, default=default_k)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vdre", description=__doc__)
    parser.add_argument("--tau", type=float, default=1.0,
                        help="temperature for contrastive-loss computations (library API)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index", help="validate a corpus file and build its pooled sidecar")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--tokens", type=Path, default=None)
    p.add_argument("--pooling", choices=["mean", "first"], default="mean")
    p.add_argument("--out", type=Path, default=None, help="rewrite the validated corpus here")

    p = sub.add_parser("search", help="rank the corpus for every query and emit a run file")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--queries", required=True, type=Path)
    p.add_argument("--ocr", type=Path, default=None, help="OCR pages JSONL, needed by lexical masks")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--tag", default="vdre")
    p.add_argument("--pooling", choices=["mean", "first"], default="mean")
    p.add_argument("--stm-pad-only", action="store_true",
                   help="count only pad tokens (not prompt tokens) as special-token matching")
    p.add_argument("--near-match", action="store_true",
                   help="lexical matching also accepts tokens within edit distance 1")
    _add_mode_flags(p)

    p = sub.add_parser("evaluate", help="score a run file against qrels")
    p.add_argument("--run", required=True, type=Path)
    p.add_argument("--qrels", required=True, type=Path)
    p.add_argument("--k", type=int, default=5, help="cutoff for nDCG")
    p.add_argument("--recall-k", type=int, default=1)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("bench", help="latency/effectiveness as the index grows")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--distractors", required=True, type=Path)
    p.add_argument("--queries", required=True, type=Path)
    p.add_argument("--qrels", required=True, type=Path)
    p.add_argument("--sizes", required=True, help="comma-separated corpus sizes, ascending")
    p.add_argument("--out", required=True, type=Path)
    _add_mode_flags(p, default_k=5)

    analyze = sub.add_parser("analyze", help="matching attribution and visual-feature analysis")
    asub = analyze.add_subparsers(dest="analysis", required=True, parser_class=_Parser)

    p = asub.add_parser("features", help="coverage metrics and per-feature significance")
    p.add_argument("--run", required=True, type=Path)
    p.add_argument("--qrels", required=True, type=Path)
    p.add_argument("--ocr", required=True, type=Path)
    p.add_argument("--images", required=True, type=Path, help="directory of page images (<doc_id>.pgm/.png)")
    p.add_argument("--bg-threshold", type=int, default=250)
    p.add_argument("--alternative", choices=["a_greater", "two_sided"], default="a_greater")
    p.add_argument("--dataset", default="default", help="dataset label for the output grid")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--summary", type=Path, default=None, help="optional TSV summary path")

    p = asub.add_parser("matching", help="nDCG@5 per token-mask mode (ablation table)")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--queries", required=True, type=Path)
    p.add_argument("--qrels", required=True, type=Path)
    p.add_argument("--ocr", type=Path, default=None)
    p.add_argument("--modes", default="all,stm,qtm", help="comma-separated mask list")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--stm-pad-only", action="store_true")
    p.add_argument("--near-match", action="store_true")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--summary", type=Path, default=None)

    p = sub.add_parser("simmap", help="export one query/document similarity map")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--queries", required=True, type=Path)
    p.add_argument("--query-id", required=True)
    p.add_argument("--doc-id", required=True)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("synth", help="generate a synthetic corpus with sidecars")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--docs", type=int, default=200)
    p.add_argument("--queries", type=int, default=20)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--patches", type=int, default=30)
    p.add_argument("--tokens", type=int, default=8)
    p.add_argument("--pad-tokens", type=int, default=4)
    p.add_argument("--prompt-tokens", type=int, default=1)
    p.add_argument("--planted", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--adversarial", action="store_true")
    p.add_argument("--id-prefix", default="")
    p.add_argument("--images", action="store_true", help="also render page bitmaps (PGM)")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from(args, args.command)
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        print(f"vdre: error: {exc}", file=sys.stderr)
        return 1
    try:
        return _dispatch(args, cfg)
    except VdreError as exc:
        print(f"vdre: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"vdre: i/o error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args, cfg: Config) -> int:
    if args.command == "index":
        return _cmd_index(args)
    if args.command == "search":
        return _cmd_search(args, cfg)
    if args.command == "evaluate":
        return _cmd_evaluate(args)
    if args.command == "bench":
        return _cmd_bench(args, cfg)
    if args.command == "analyze" and args.analysis == "features":
        return _cmd_features(args)
    if args.command == "analyze" and args.analysis == "matching":
        return _cmd_matching(args)
    if args.command == "simmap":
        return _cmd_simmap(args)
    if args.command == "synth":
        return _cmd_synth(args)
    raise AssertionError(f"unhandled command {args.command!r}")


def _cmd_index(args) -> int:
    corpus = load_corpus(args.corpus, tokens_path=args.tokens, pooling=args.pooling)
    if args.out is not None:
        write_corpus(corpus, args.out)
    total_rows = int(corpus.offsets[-1])
    with_tokens = sum(1 for e in corpus.entries if e.tokens is not None)
    with_grid = sum(1 for e in corpus.entries if e.grid is not None)
    print(
        f"ok: {len(corpus)} records, dim {corpus.dim}, {total_rows} rows, "
        f"{with_grid} with grids, {with_tokens} with token metadata, pooling={corpus.pooling}"
    )
    return 0


def _cmd_search(args, cfg: Config) -> int:
    mode = cfg.mode
    if mode.mask in _LEXICAL and args.ocr is None:
        print("vdre search: error: lexical masks require --ocr", file=sys.stderr)
        return 1
    corpus = load_corpus(args.corpus, pooling=args.pooling)
    queries = load_corpus(args.queries, pooling=args.pooling)
    ocr_index = None
    if args.ocr is not None:
        ocr_index = ocr_token_sets(load_ocr_pages(args.ocr))
    rankings = batch_search(
        corpus,
        list(queries.entries),
        mode,
        cfg.k,
        ocr_index,
        workers=cfg.workers,
        stm_includes_prompt=not args.stm_pad_only,
        near_match=args.near_match,
    )
    write_run(rankings, args.out, tag=args.tag)
    print(f"wrote {sum(len(r.hits) for r in rankings)} hits for {len(rankings)} queries to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    rankings = read_run(args.run)
    qrels = load_qrels(args.qrels)
    records = evaluate_rankings(rankings, qrels, ndcg_k=args.k, recall_k=args.recall_k)
    write_jsonl(records, args.out)
    summary = records[-1]
    print(
        f"{summary['queries']} queries: mean nDCG@{args.k} = {summary[f'mean_ndcg@{args.k}']:.4f}, "
        f"mean recall@{args.recall_k} = {summary[f'mean_recall@{args.recall_k}']:.4f}"
    )
    return 0


def _cmd_bench(args, cfg: Config) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    base = load_corpus(args.corpus)
    distractors = load_corpus(args.distractors)
    queries = load_corpus(args.queries)
    qrels = load_qrels(args.qrels)
    reports = bench_scaling(
        sizes, base, distractors, list(queries.entries), qrels, cfg.mode, k=cfg.k, workers=cfg.workers
    )
    write_jsonl([r.to_record() for r in reports], args.out)
    print(f"kernel backend: {kernels.backend()}")
    for r in reports:
        print(
            f"size {r.corpus_size}: mean {r.mean * 1e3:.2f} ms, p50 {r.p50 * 1e3:.2f} ms, "
            f"p95 {r.p95 * 1e3:.2f} ms, nDCG@5 {r.ndcg5:.4f}"
        )
    return 0


def _cmd_features(args) -> int:
    if not 0 <= args.bg_threshold <= 255:
        print("vdre analyze features: error: --bg-threshold must lie in [0, 255]", file=sys.stderr)
        return 1
    rankings = read_run(args.run)
    qrels = load_qrels(args.qrels)
    pages = load_ocr_pages(args.ocr)
    split = split_by_first_rank(rankings, qrels)
    needed = sorted({doc for _, doc in split.ranked_first + split.not_ranked_first})
    feats = {}
    for doc_id in needed:
        if doc_id not in pages:
            raise DataError(f"no OCR page for document {doc_id!r}")
        img = _find_image(args.images, doc_id)
        mask = background_mask(img, args.bg_threshold)
        feats[doc_id] = coverage(pages[doc_id], mask)
    grid = feature_significance(
        {args.dataset: split}, {args.dataset: feats}, alternative=args.alternative
    )
    write_jsonl(grid.to_records(), args.out)
    summary = args.summary if args.summary is not None else Path(str(args.out) + ".tsv")
    write_tsv(grid.to_records(), summary, ["feature", "dataset", "n_a", "n_b", "u", "p"])
    for cell in grid.cells:
        p = "not computable" if cell.p is None else f"p = {cell.p:.4g}"
        print(f"{cell.feature} ({cell.dataset}): n_a={cell.n_a} n_b={cell.n_b} {p}")
    return 0


def _find_image(images_dir: Path, doc_id: str) -> np.ndarray:
    for ext in (".pgm", ".png", ".ppm", ".jpg", ".jpeg"):
        candidate = images_dir / f"{doc_id}{ext}"
        if candidate.exists():
            return load_grayscale(candidate)
    raise DataError(f"no page image for document {doc_id!r} under {images_dir}")


def _cmd_matching(args) -> int:
    try:
        masks = [_MASK_FLAG[m.strip()] for m in args.modes.split(",") if m.strip()]
    except KeyError as exc:
        print(f"vdre analyze matching: error: unknown mask {exc.args[0]!r}", file=sys.stderr)
        return 1
    if any(m in _LEXICAL for m in masks) and args.ocr is None:
        print("vdre analyze matching: error: lexical masks require --ocr", file=sys.stderr)
        return 1
    corpus = load_corpus(args.corpus)
    queries = load_corpus(args.queries)
    qrels = load_qrels(args.qrels)
    ocr_index = ocr_token_sets(load_ocr_pages(args.ocr)) if args.ocr is not None else None
    rows = matching_ablation(
        corpus,
        list(queries.entries),
        qrels,
        masks,
        ocr_index,
        k=args.k,
        workers=args.workers,
        stm_includes_prompt=not args.stm_pad_only,
        near_match=args.near_match,
    )
    write_jsonl(rows, args.out)
    summary = args.summary if args.summary is not None else Path(str(args.out) + ".tsv")
    write_tsv(rows, summary, ["mask", "ndcg@5", "delta_pct"])
    for row in rows:
        print(f"{row['mask']}: nDCG@5 = {row['ndcg@5']:.4f} ({row['delta_pct']:+.1f}%)")
    return 0


def _cmd_simmap(args) -> int:
    corpus = load_corpus(args.corpus)
    queries = load_corpus(args.queries)
    query = queries.get(args.query_id)
    doc = corpus.get(args.doc_id)
    export_simmap(query, doc, args.out)
    print(f"wrote similarity map for {args.query_id} x {args.doc_id} to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        seed=args.seed,
        num_docs=args.docs,
        num_queries=args.queries,
        patches_per_doc=args.patches,
        tokens_per_query=args.tokens,
        dim=args.dim,
        planted_relevance=args.planted,
        noise=args.epsilon,
        pad_tokens=args.pad_tokens,
        prompt_tokens=args.prompt_tokens,
        antipode_distractors=args.adversarial,
        id_prefix=args.id_prefix,
    )
    try:
        spec.validate()
    except ValueError as exc:
        print(f"vdre synth: error: {exc}", file=sys.stderr)
        return 1
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    corpus, queries, qrels, _ = generate(spec)
    write_corpus(corpus, out / "corpus.vdre")
    write_corpus(build_corpus(queries, dim=spec.dim), out / "queries.vdre")
    write_qrels(qrels, out / "qrels.tsv")
    pages = generate_pages(spec)
    write_ocr_pages(pages, out / "ocr.jsonl")
    if args.images:
        img_dir = out / "images"
        img_dir.mkdir(exist_ok=True)
        for i, page in enumerate(pages):
            write_pgm(render_page(spec, page, i), img_dir / f"{page.doc_id}.pgm")
    print(
        f"wrote {len(corpus)} documents, {len(queries)} queries, "
        f"{len(pages)} OCR pages to {out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
