"""Group split, significance grid, matching ablation, similarity maps."""

import json

import numpy as np
import pytest

from conftest import make_embedding, make_query_with_kinds, random_unit_rows
from vdre.analysis import (
    export_simmap,
    feature_significance,
    matching_ablation,
    split_by_first_rank,
    write_tsv,
)
from vdre.corpus import MultiVectorEmbedding, TokenKind, TokenMeta, build_corpus
from vdre.coverage import VisualFeatures
from vdre.errors import DataError, EvaluationError
from vdre.scoring import ScoreKind, ScoreMask, ScoreMode, score_maxsim
from vdre.search import Hit, Ranking, batch_search
from vdre.synth import SynthSpec, generate


def _ranking(qid, doc_ids):
    return Ranking(qid, tuple(Hit(d, 1.0 / (i + 1), i + 1) for i, d in enumerate(doc_ids)))


def _feats(c_text=0.2, token_count=10):
    c_nontext = 0.3
    return VisualFeatures(c_text, c_nontext, 1.0 - c_text - c_nontext, token_count)


class TestGroupSplit:
    def test_split_covers_all_relevant_docs(self):
        qrels = {"q1": {"a": 1, "b": 1}, "q2": {"c": 1}}
        rankings = [_ranking("q1", ["a", "x"]), _ranking("q2", ["x", "c"])]
        split = split_by_first_rank(rankings, qrels)
        assert set(split.ranked_first) == {("q1", "a")}
        assert set(split.not_ranked_first) == {("q1", "b"), ("q2", "c")}
        assert not set(split.ranked_first) & set(split.not_ranked_first)

    def test_missing_qrels_entry(self):
        with pytest.raises(EvaluationError):
            split_by_first_rank([_ranking("ghost", ["a"])], {"q": {"a": 1}})


class TestFeatureSignificance:
    def test_single_cell_grid(self):
        split = split_by_first_rank(
            [_ranking("q1", ["a"]), _ranking("q2", ["x", "b"])],
            {"q1": {"a": 1}, "q2": {"b": 1}},
        )
        feats = {"a": _feats(0.5), "b": _feats(0.1)}
        grid = feature_significance({"ds": split}, {"ds": feats}, feature_names=("c_text",))
        assert grid.feature_names == ("c_text",)
        assert grid.dataset_names == ("ds",)
        assert len(grid.cells) == 1
        cell = grid.cell("c_text", "ds")
        assert cell.n_a == 1 and cell.n_b == 1
        assert cell.p is not None

    def test_complete_separation_is_significant(self, rng):
        a_pairs = tuple((f"q{i}", f"a{i}") for i in range(20))
        b_pairs = tuple((f"r{i}", f"b{i}") for i in range(20))
        from vdre.analysis import GroupSplit

        split = GroupSplit(ranked_first=a_pairs, not_ranked_first=b_pairs)
        feats = {}
        for i in range(20):
            feats[f"a{i}"] = _feats(c_text=0.5 + 0.01 * i)
            feats[f"b{i}"] = _feats(c_text=0.1 + 0.01 * i)
        grid = feature_significance({"ds": split}, {"ds": feats}, feature_names=("c_text",))
        assert grid.cell("c_text", "ds").p < 1e-6

    def test_identical_groups_large_p(self):
        from vdre.analysis import GroupSplit

        pairs_a = tuple((f"q{i}", f"a{i}") for i in range(15))
        pairs_b = tuple((f"r{i}", f"b{i}") for i in range(15))
        split = GroupSplit(ranked_first=pairs_a, not_ranked_first=pairs_b)
        feats = {}
        for i in range(15):
            feats[f"a{i}"] = _feats(c_text=0.3)
            feats[f"b{i}"] = _feats(c_text=0.3)
        grid = feature_significance({"ds": split}, {"ds": feats}, feature_names=("c_text",))
        assert grid.cell("c_text", "ds").p > 0.5

    def test_empty_group_not_computable(self):
        from vdre.analysis import GroupSplit

        split = GroupSplit(ranked_first=(("q", "a"),), not_ranked_first=())
        grid = feature_significance({"ds": split}, {"ds": {"a": _feats()}})
        for cell in grid.cells:
            assert cell.p is None and cell.u is None
            assert not cell.computable

    def test_missing_feature_record(self):
        from vdre.analysis import GroupSplit

        split = GroupSplit(ranked_first=(("q", "a"),), not_ranked_first=(("r", "b"),))
        with pytest.raises(DataError, match="'b'"):
            feature_significance({"ds": split}, {"ds": {"a": _feats()}})


class TestMatchingAblation:
    @pytest.fixture()
    def fixture(self):
        spec = SynthSpec(seed=21, num_docs=40, num_queries=8, dim=16)
        corpus, queries, qrels, ocr = generate(spec)
        return corpus, queries, qrels, ocr

    def test_all_mode_has_zero_delta(self, fixture):
        corpus, queries, qrels, ocr = fixture
        rows = matching_ablation(corpus, queries, qrels, [ScoreMask.ALL], ocr)
        assert rows[0]["mask"] == "all"
        assert rows[0]["delta_pct"] == 0.0

    def test_baseline_prepended_when_missing(self, fixture):
        corpus, queries, qrels, ocr = fixture
        rows = matching_ablation(corpus, queries, qrels, [ScoreMask.QTM_ONLY], ocr)
        assert [r["mask"] for r in rows] == ["all", "qtm"]

    def test_planted_relevance_lives_in_query_text(self, fixture):
        # pad/prompt vectors are shared across queries, so special-token
        # matching alone cannot single out the planted document
        corpus, queries, qrels, ocr = fixture
        rows = matching_ablation(
            corpus, queries, qrels, [ScoreMask.ALL, ScoreMask.STM_ONLY, ScoreMask.QTM_ONLY], ocr
        )
        by_mask = {r["mask"]: r["ndcg@5"] for r in rows}
        assert by_mask["stm"] < by_mask["qtm"]
        assert by_mask["qtm"] == pytest.approx(1.0, abs=1e-9)

    def test_lexical_partition_of_scores(self, fixture):
        corpus, queries, qrels, ocr = fixture
        q = queries[0]
        qtm = ScoreMode(ScoreKind.MAXSIM, ScoreMask.QTM_ONLY)
        lex = ScoreMode(ScoreKind.MAXSIM, ScoreMask.QTM_LEXICAL_ONLY)
        nonlex = ScoreMode(ScoreKind.MAXSIM, ScoreMask.QTM_NONLEXICAL_ONLY)
        from vdre.search import score_all

        s_qtm = score_all(corpus, q, qtm, ocr)
        s_lex = score_all(corpus, q, lex, ocr)
        s_non = score_all(corpus, q, nonlex, ocr)
        assert np.allclose(s_qtm, s_lex + s_non, atol=1e-5)


class TestSimmap:
    def test_header_grid_and_argmax_position(self, rng, tmp_path):
        doc = make_embedding(rng, "doc", 6, 8, grid=(2, 3))
        query = make_query_with_kinds(rng, "q", 8, n_text=2, n_pad=1, n_prompt=0)
        path = tmp_path / "sim.jsonl"
        export_simmap(query, doc, path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        header, rows = lines[0], lines[1:]
        assert header["grid_rows"] == 2 and header["grid_cols"] == 3
        assert header["query_id"] == "q" and header["doc_id"] == "doc"
        assert len(rows) == query.n
        for row in rows:
            assert len(row["similarities"]) == 6
            arg = row["argmax"]
            assert row["argmax_row"] == arg // 3
            assert row["argmax_col"] == arg % 3
            assert row["kind"] in ("query_text", "special_pad")

    def test_identical_vector_is_argmax_with_similarity_one(self, rng, tmp_path):
        doc_rows = random_unit_rows(rng, 4, 8)
        doc = MultiVectorEmbedding.from_rows("d", doc_rows, grid=(2, 2))
        query = MultiVectorEmbedding.from_rows("q", doc_rows[2:3])
        path = tmp_path / "sim.jsonl"
        export_simmap(query, doc, path)
        row = json.loads(path.read_text().splitlines()[1])
        assert row["argmax"] == 2
        assert row["max"] == pytest.approx(1.0, abs=1e-6)

    def test_exported_maxima_sum_to_full_score(self, rng, tmp_path):
        doc = make_embedding(rng, "d", 12, 16, grid=(3, 4))
        query = make_embedding(rng, "q", 5, 16)
        path = tmp_path / "sim.jsonl"
        export_simmap(query, doc, path)
        rows = [json.loads(l) for l in path.read_text().splitlines()[1:]]
        total = sum(max(r["similarities"]) for r in rows)
        assert total == pytest.approx(score_maxsim(query, doc), abs=1e-5)

    def test_missing_grid_rejected(self, rng, tmp_path):
        doc = make_embedding(rng, "d", 6, 8)
        query = make_embedding(rng, "q", 2, 8)
        with pytest.raises(DataError, match="grid"):
            export_simmap(query, doc, tmp_path / "sim.jsonl")


class TestTsv:
    def test_writes_header_and_na(self, tmp_path):
        path = tmp_path / "t.tsv"
        write_tsv([{"a": 1.5, "b": None}], path, ["a", "b"])
        lines = path.read_text().splitlines()
        assert lines[0] == "a\tb"
        assert lines[1] == "1.5\tNA"
