"""Deterministic generator: reproducibility and planted structure."""

import io

import numpy as np
import pytest

from vdre.corpus import TokenKind, write_corpus
from vdre.evaluation import recall_at_k
from vdre.scoring import ScoreKind, ScoreMode
from vdre.search import batch_search
from vdre.synth import (
    PAD_TEXT,
    SynthSpec,
    distractor_spec,
    generate,
    generate_pages,
    render_page,
)

MAXSIM = ScoreMode(ScoreKind.MAXSIM)
POOLED = ScoreMode(ScoreKind.POOLED)


def _corpus_bytes(corpus, tmp_path, name):
    path = tmp_path / name
    write_corpus(corpus, path)
    return path.read_bytes()


class TestDeterminism:
    def test_identical_seed_identical_bytes(self, tmp_path):
        spec = SynthSpec(seed=7, num_docs=25, num_queries=5, dim=16)
        c1, q1, r1, o1 = generate(spec)
        c2, q2, r2, o2 = generate(spec)
        assert _corpus_bytes(c1, tmp_path, "a.vdre") == _corpus_bytes(c2, tmp_path, "b.vdre")
        assert r1 == r2 and o1 == o2
        for a, b in zip(q1, q2):
            assert a.vectors.tobytes() == b.vectors.tobytes()
            assert a.tokens == b.tokens

    def test_different_seed_differs(self):
        a, _, _, _ = generate(SynthSpec(seed=1, num_docs=5, num_queries=1, dim=16))
        b, _, _, _ = generate(SynthSpec(seed=2, num_docs=5, num_queries=1, dim=16))
        assert a.flat.tobytes() != b.flat.tobytes()

    def test_pages_deterministic(self):
        spec = SynthSpec(seed=7, num_docs=8, num_queries=2, dim=16)
        p1 = generate_pages(spec)
        p2 = generate_pages(spec)
        assert p1 == p2
        img1 = render_page(spec, p1[0], 0)
        img2 = render_page(spec, p2[0], 0)
        assert np.array_equal(img1, img2)


class TestStructure:
    def test_query_layout_right_padded(self):
        spec = SynthSpec(seed=7, num_docs=5, num_queries=2, dim=16, tokens_per_query=3)
        _, queries, _, _ = generate(spec)
        q = queries[0]
        kinds = [t.kind for t in q.tokens]
        assert kinds[0] is TokenKind.PROMPT
        assert kinds[1:4] == [TokenKind.QUERY_TEXT] * 3
        assert kinds[4:] == [TokenKind.SPECIAL_PAD] * spec.pad_tokens
        assert all(t.text == PAD_TEXT for t in q.tokens[4:])

    def test_rows_unit_norm_and_docs_have_grids(self):
        spec = SynthSpec(seed=9, num_docs=10, num_queries=3, dim=16)
        corpus, queries, _, _ = generate(spec)
        for e in list(corpus.entries) + queries:
            norms = np.linalg.norm(e.vectors.astype(np.float64), axis=1)
            assert np.allclose(norms, 1.0, atol=1e-5)
        for e in corpus.entries:
            assert e.grid is not None
            assert e.grid[0] * e.grid[1] == e.n

    def test_one_relevant_doc_per_query(self):
        spec = SynthSpec(seed=5, num_docs=12, num_queries=4, dim=16)
        corpus, queries, qrels, _ = generate(spec)
        assert len(qrels) == 4
        for q in queries:
            rel = qrels[q.id]
            assert len(rel) == 1
            assert next(iter(rel)) in corpus.id_index

    def test_planted_tokens_are_lexical_matches(self):
        spec = SynthSpec(seed=5, num_docs=12, num_queries=4, dim=16)
        _, queries, qrels, ocr = generate(spec)
        for q in queries:
            rel_doc = next(iter(qrels[q.id]))
            text_tokens = {t.text for t in q.tokens if t.kind is TokenKind.QUERY_TEXT}
            assert text_tokens <= ocr[rel_doc]

    def test_pages_agree_with_token_sets(self):
        spec = SynthSpec(seed=5, num_docs=12, num_queries=4, dim=16)
        _, _, _, ocr = generate(spec)
        pages = generate_pages(spec)
        for page in pages:
            words = {b.text for b in page.boxes}
            assert words == set(ocr[page.doc_id])

    def test_noise_perturbs_planted_rows(self):
        clean, q_clean, _, _ = generate(SynthSpec(seed=4, num_docs=4, num_queries=2, dim=16))
        noisy, q_noisy, _, _ = generate(
            SynthSpec(seed=4, num_docs=4, num_queries=2, dim=16, noise=0.5)
        )
        assert clean.flat.tobytes() != noisy.flat.tobytes()
        # queries themselves are unaffected by the document noise
        assert q_clean[0].vectors.tobytes() == q_noisy[0].vectors.tobytes()


class TestPlantedRetrieval:
    def test_full_plant_no_noise_gives_perfect_maxsim_recall(self):
        spec = SynthSpec(seed=11, num_docs=50, num_queries=10, dim=16)
        corpus, queries, qrels, _ = generate(spec)
        rankings = batch_search(corpus, queries, MAXSIM, 1)
        assert all(recall_at_k(r, qrels, 1) == 1.0 for r in rankings)

    def test_adversarial_fixture_separates_modes(self):
        spec = SynthSpec(seed=13, num_docs=60, num_queries=10, dim=16, antipode_distractors=True)
        corpus, queries, qrels, _ = generate(spec)
        maxsim = batch_search(corpus, queries, MAXSIM, 1)
        pooled = batch_search(corpus, queries, POOLED, 1)
        recall_maxsim = sum(recall_at_k(r, qrels, 1) for r in maxsim) / len(maxsim)
        recall_pooled = sum(recall_at_k(r, qrels, 1) for r in pooled) / len(pooled)
        assert recall_maxsim == 1.0
        assert recall_pooled <= 0.8


class TestValidation:
    def test_dim_too_small(self):
        with pytest.raises(ValueError, match="dim"):
            SynthSpec(seed=1, num_docs=2, num_queries=1, dim=4).validate()

    def test_more_queries_than_docs(self):
        with pytest.raises(ValueError, match="relevant"):
            SynthSpec(seed=1, num_docs=2, num_queries=3, dim=16).validate()

    def test_bad_planted_fraction(self):
        with pytest.raises(ValueError, match="planted"):
            SynthSpec(seed=1, num_docs=2, num_queries=1, dim=16, planted_relevance=1.5).validate()

    def test_range_fields(self):
        spec = SynthSpec(
            seed=1, num_docs=6, num_queries=2, dim=16,
            patches_per_doc=(5, 12), tokens_per_query=(2, 4),
        )
        corpus, queries, _, _ = generate(spec)
        patch_counts = {e.n for e in corpus.entries}
        assert patch_counts <= set(range(5, 13))
        assert len(patch_counts) > 1

    def test_distractor_spec_has_no_queries_and_prefixed_ids(self):
        base = SynthSpec(seed=1, num_docs=4, num_queries=2, dim=16)
        d_spec = distractor_spec(77, 10, base)
        corpus, queries, qrels, _ = generate(d_spec)
        assert len(corpus) == 10 and not queries and not qrels
        assert all(e.id.startswith("x") for e in corpus.entries)
        assert not set(corpus.id_index) & {"d000000", "d000001"}
