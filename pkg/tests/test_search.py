"""Exhaustive retrieval: correctness vs brute force, determinism, run files."""

import numpy as np
import pytest

from conftest import make_embedding, make_query_with_kinds, oracle_maxsim, random_unit_rows
from vdre.corpus import MultiVectorEmbedding, TokenKind, TokenMeta, build_corpus, cosine, pool
from vdre.errors import BatchSearchError, DataError, DimensionError
from vdre.scoring import ScoreKind, ScoreMask, ScoreMode
from vdre.search import batch_search, read_run, search, write_run

MAXSIM = ScoreMode(ScoreKind.MAXSIM)
POOLED = ScoreMode(ScoreKind.POOLED)


def _corpus(rng, n_docs, dim, max_patches=20):
    return build_corpus(
        [make_embedding(rng, f"d{i:03d}", int(rng.integers(1, max_patches)), dim) for i in range(n_docs)]
    )


class TestSearch:
    def test_singleton_corpus_any_mode(self, rng):
        corpus = _corpus(rng, 1, 8)
        q = make_embedding(rng, "q", 3, 8)
        for mode in (MAXSIM, POOLED):
            r = search(corpus, q, mode, k=5)
            assert [h.doc_id for h in r.hits] == ["d000"]
            assert r.hits[0].rank == 1

    def test_doc_containing_query_rows_wins_with_score_q(self, rng):
        dim = 12
        q = make_embedding(rng, "q", 4, dim)
        winner = MultiVectorEmbedding.from_rows(
            "dwin", np.vstack([q.vectors, random_unit_rows(rng, 3, dim)])
        )
        others = [make_embedding(rng, f"d{i}", 6, dim) for i in range(2)]
        corpus = build_corpus([others[0], winner, others[1]])
        r = search(corpus, q, MAXSIM, k=3)
        assert r.hits[0].doc_id == "dwin"
        assert r.hits[0].score == pytest.approx(4.0, abs=1e-5)

    def test_matches_brute_force_oracle(self, rng):
        corpus = _corpus(rng, 50, 10)
        q = make_embedding(rng, "q", 5, 10)
        r = search(corpus, q, MAXSIM, k=10)
        scored = [
            (oracle_maxsim(q.vectors, e.vectors), e.id) for e in corpus.entries
        ]
        expected = sorted(scored, key=lambda t: (-t[0], t[1]))[:10]
        assert [h.doc_id for h in r.hits] == [doc_id for _, doc_id in expected]
        for hit, (score, _) in zip(r.hits, expected):
            assert hit.score == pytest.approx(score, abs=1e-5)

    def test_pooled_matches_cosine_of_pools(self, rng):
        corpus = _corpus(rng, 20, 8)
        q = make_embedding(rng, "q", 4, 8)
        r = search(corpus, q, POOLED, k=20)
        by_id = {h.doc_id: h.score for h in r.hits}
        for e in corpus.entries:
            assert by_id[e.id] == pytest.approx(cosine(pool(q), pool(e)), abs=1e-6)

    def test_ties_broken_by_ascending_doc_id(self):
        # one-hot rows keep the similarity arithmetic exact on any backend,
        # so the tie is a computed tie, not just a mathematical one
        row = np.eye(1, 8, dtype=np.float32)
        docs = [MultiVectorEmbedding.from_rows(name, row) for name in ("zz", "aa", "mm")]
        corpus = build_corpus(docs)
        q = MultiVectorEmbedding.from_rows("q", row)
        r = search(corpus, q, MAXSIM, k=3)
        assert [h.doc_id for h in r.hits] == ["aa", "mm", "zz"]
        assert [h.rank for h in r.hits] == [1, 2, 3]

    def test_ties_at_the_k_boundary(self):
        row = np.eye(1, 8, dtype=np.float32)
        docs = [MultiVectorEmbedding.from_rows(f"t{i}", row) for i in range(6)]
        corpus = build_corpus(docs)
        q = MultiVectorEmbedding.from_rows("q", row)
        r = search(corpus, q, MAXSIM, k=3)
        assert [h.doc_id for h in r.hits] == ["t0", "t1", "t2"]

    def test_subset_consistency(self, rng):
        corpus = _corpus(rng, 40, 8)
        q = make_embedding(rng, "q", 4, 8)
        top5 = search(corpus, q, MAXSIM, k=5).hits
        top12 = search(corpus, q, MAXSIM, k=12).hits
        assert top12[:5] == top5

    def test_k_larger_than_corpus(self, rng):
        corpus = _corpus(rng, 3, 8)
        r = search(corpus, make_embedding(rng, "q", 2, 8), MAXSIM, k=100)
        assert len(r.hits) == 3

    def test_k_must_be_positive(self, rng):
        corpus = _corpus(rng, 3, 8)
        with pytest.raises(ValueError):
            search(corpus, make_embedding(rng, "q", 2, 8), MAXSIM, k=0)

    def test_dim_mismatch(self, rng):
        corpus = _corpus(rng, 3, 8)
        with pytest.raises(DimensionError):
            search(corpus, make_embedding(rng, "q", 2, 6), MAXSIM, k=1)

    def test_determinism_across_repeats(self, rng):
        corpus = _corpus(rng, 30, 8)
        q = make_embedding(rng, "q", 4, 8)
        first = search(corpus, q, MAXSIM, k=10)
        for _ in range(3):
            assert search(corpus, q, MAXSIM, k=10) == first


class TestMaskedSearch:
    def test_lexical_mask_requires_full_ocr_coverage(self, rng):
        corpus = _corpus(rng, 3, 8)
        q = make_query_with_kinds(rng, "q", 8, n_text=2, n_pad=1, n_prompt=0)
        mode = ScoreMode(ScoreKind.MAXSIM, ScoreMask.QTM_LEXICAL_ONLY)
        ocr = {"d000": frozenset({"word0"}), "d001": frozenset()}
        with pytest.raises(DataError, match="d002"):
            search(corpus, q, mode, k=2, ocr_index=ocr)

    def test_lexical_scores_match_per_doc_masking(self, rng):
        from vdre.scoring import masks_for, score_maxsim

        corpus = _corpus(rng, 12, 8)
        q = make_query_with_kinds(rng, "q", 8, n_text=3, n_pad=2, n_prompt=1)
        ocr = {}
        for i, e in enumerate(corpus.entries):
            vocab = set()
            if i % 3 == 0:
                vocab.add("word0")
            if i % 4 == 0:
                vocab.update({"word1", "word2"})
            ocr[e.id] = frozenset(vocab)
        mode = ScoreMode(ScoreKind.MAXSIM, ScoreMask.QTM_LEXICAL_ONLY)
        r = search(corpus, q, mode, k=len(corpus), ocr_index=ocr)
        by_id = {h.doc_id: h.score for h in r.hits}
        for e in corpus.entries:
            mask = masks_for(q, ScoreMask.QTM_LEXICAL_ONLY, ocr[e.id])
            assert by_id[e.id] == pytest.approx(score_maxsim(q, e, mask), abs=1e-6)

    def test_all_inactive_lexical_mask_is_total_zero_ranking(self, rng):
        corpus = _corpus(rng, 4, 8)
        q = make_query_with_kinds(rng, "q", 8, n_text=2, n_pad=1, n_prompt=0)
        ocr = {e.id: frozenset() for e in corpus.entries}
        mode = ScoreMode(ScoreKind.MAXSIM, ScoreMask.QTM_LEXICAL_ONLY)
        r = search(corpus, q, mode, k=4, ocr_index=ocr)
        assert len(r.hits) == 4
        assert all(h.score == 0.0 for h in r.hits)
        assert [h.doc_id for h in r.hits] == sorted(e.id for e in corpus.entries)


class TestBatchSearch:
    def test_empty_query_list(self, rng):
        corpus = _corpus(rng, 3, 8)
        assert batch_search(corpus, [], MAXSIM, k=2) == []

    def test_matches_sequential_bit_for_bit(self, rng):
        corpus = _corpus(rng, 2000, 16, max_patches=8)
        queries = [make_embedding(rng, f"q{i:03d}", int(rng.integers(1, 6)), 16) for i in range(100)]
        sequential = [search(corpus, q, MAXSIM, k=7) for q in queries]
        parallel = batch_search(corpus, queries, MAXSIM, k=7, workers=4)
        assert parallel == sequential

    def test_error_aggregation_names_queries(self, rng):
        corpus = _corpus(rng, 3, 8)
        good = make_embedding(rng, "good", 2, 8)
        bad1 = make_embedding(rng, "bad1", 2, 6)
        bad2 = make_embedding(rng, "bad2", 2, 4)
        with pytest.raises(BatchSearchError) as err:
            batch_search(corpus, [good, bad1, bad2], MAXSIM, k=2, workers=2)
        ids = [qid for qid, _ in err.value.failures]
        assert ids == ["bad1", "bad2"]

    def test_workers_validated(self, rng):
        corpus = _corpus(rng, 3, 8)
        with pytest.raises(ValueError):
            batch_search(corpus, [make_embedding(rng, "q", 2, 8)], MAXSIM, k=1, workers=0)


class TestRunFile:
    def test_format_and_roundtrip(self, rng, tmp_path):
        corpus = _corpus(rng, 10, 8)
        queries = [make_embedding(rng, f"q{i}", 3, 8) for i in range(3)]
        rankings = batch_search(corpus, queries, MAXSIM, k=4)
        path = tmp_path / "run.tsv"
        write_run(rankings, path, tag="trial")
        lines = path.read_text().splitlines()
        assert len(lines) == 12
        first = lines[0].split("\t")
        assert len(first) == 6
        assert first[0] == "q0" and first[1] == "Q0" and first[3] == "1" and first[5] == "trial"
        float(first[4])  # parses as a score

        reloaded = read_run(path)
        assert [r.query_id for r in reloaded] == [r.query_id for r in rankings]
        for a, b in zip(reloaded, rankings):
            assert [h.doc_id for h in a.hits] == [h.doc_id for h in b.hits]
            for ha, hb in zip(a.hits, b.hits):
                assert ha.score == pytest.approx(hb.score, rel=1e-8)

    def test_nine_significant_digits(self, tmp_path):
        from vdre.search import Hit, Ranking

        r = Ranking("q", (Hit("d", 0.123456789123, 1),))
        path = tmp_path / "run.tsv"
        write_run([r], path)
        assert path.read_text().split("\t")[4] == "0.123456789"

    def test_malformed_run_rejected(self, tmp_path):
        path = tmp_path / "run.tsv"
        path.write_text("q0\tQ0\td0\n")
        with pytest.raises(DataError, match="6"):
            read_run(path)

    def test_non_contiguous_ranks_rejected(self, tmp_path):
        path = tmp_path / "run.tsv"
        path.write_text("q0\tQ0\td0\t1\t1.0\tt\nq0\tQ0\td1\t3\t0.5\tt\n")
        with pytest.raises(DataError, match="ranks"):
            read_run(path)
