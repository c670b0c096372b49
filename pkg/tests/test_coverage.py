"""Pixel-coverage metrics, background masks, and OCR page IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vdre.coverage import (
    OcrBox,
    OcrPage,
    background_mask,
    coverage,
    load_ocr_pages,
    ocr_token_sets,
    rasterize_boxes,
    write_ocr_pages,
    write_pgm,
)
from vdre.errors import DataError, DimensionError


def _page(doc_id="p", width=100, height=100, boxes=()):
    return OcrPage(doc_id=doc_id, width=width, height=height, boxes=tuple(boxes))


class TestBackgroundMask:
    def test_all_white_is_all_background(self):
        img = np.full((10, 10), 255, dtype=np.uint8)
        assert background_mask(img, 250).all()

    def test_all_black_is_no_background(self):
        img = np.zeros((10, 10), dtype=np.uint8)
        assert not background_mask(img, 250).any()

    def test_checkerboard_half(self):
        img = np.indices((10, 10)).sum(axis=0) % 2 * 255
        mask = background_mask(img.astype(np.uint8), 250)
        assert int(mask.sum()) == 50

    def test_threshold_boundary_inclusive(self):
        img = np.full((2, 2), 250, dtype=np.uint8)
        assert background_mask(img, 250).all()

    def test_requires_2d(self):
        with pytest.raises(DataError):
            background_mask(np.zeros((2, 2, 3), dtype=np.uint8))


class TestCoverage:
    def test_blank_page(self):
        page = _page()
        mask = np.ones((100, 100), dtype=bool)
        feats = coverage(page, mask)
        assert (feats.c_text, feats.c_nontext, feats.c_background) == (0.0, 0.0, 1.0)
        assert feats.token_count == 0

    def test_full_page_text(self):
        page = _page(boxes=[OcrBox(0, 0, 100, 100, "all text here")])
        mask = np.zeros((100, 100), dtype=bool)
        feats = coverage(page, mask)
        assert (feats.c_text, feats.c_nontext, feats.c_background) == (1.0, 0.0, 0.0)
        assert feats.token_count == 3

    def test_worked_example(self):
        # 100x100 page, one 20x50 box, 200 background px inside it, 5000 total
        page = _page(boxes=[OcrBox(10, 10, 20, 50, "two tokens")])
        mask = np.zeros((100, 100), dtype=bool)
        mask[10:30, 10:20] = True  # 200 px inside the box
        mask[60:100, :] = True  # 4000 px
        mask[0:8, :] = True  # 800 px -> 5000 total
        feats = coverage(page, mask)
        assert feats.c_text == pytest.approx(0.08, abs=1e-15)
        assert feats.c_nontext == pytest.approx(0.40, abs=1e-15)
        assert feats.c_background == pytest.approx(0.52, abs=1e-15)

    def test_overlapping_boxes_counted_once(self):
        page = _page(boxes=[OcrBox(0, 0, 60, 100, "a"), OcrBox(40, 0, 60, 100, "b")])
        union = rasterize_boxes(page)
        assert int(union.sum()) == 100 * 100
        feats = coverage(page, np.zeros((100, 100), dtype=bool))
        assert feats.c_text == 1.0

    def test_inconsistent_mask_is_error_with_areas(self):
        # full-page box with background everywhere: non-text share goes negative
        page = _page(boxes=[OcrBox(0, 0, 100, 100, "x")])
        mask = np.ones((100, 100), dtype=bool)
        with pytest.raises(DataError, match="total=10000"):
            coverage(page, mask)

    def test_mask_shape_checked(self):
        with pytest.raises(DimensionError):
            coverage(_page(), np.ones((5, 5), dtype=bool))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n_boxes=st.integers(0, 6))
    def test_closure_is_exact(self, seed, n_boxes):
        rng = np.random.default_rng(seed)
        w, h = int(rng.integers(8, 60)), int(rng.integers(8, 60))
        boxes = []
        for _ in range(n_boxes):
            bw = int(rng.integers(1, w))
            bh = int(rng.integers(1, h))
            x = int(rng.integers(0, w - bw + 1))
            y = int(rng.integers(0, h - bh + 1))
            boxes.append(OcrBox(x, y, bw, bh, "tok"))
        page = _page(width=w, height=h, boxes=boxes)
        # background only outside boxes keeps the page self-consistent
        outside = ~rasterize_boxes(page)
        noise = rng.random((h, w)) < 0.4
        mask = outside & noise
        feats = coverage(page, mask)
        assert feats.c_text + feats.c_nontext + feats.c_background == 1.0
        assert feats.c_text >= 0 and feats.c_nontext >= 0 and feats.c_background >= 0


class TestOcrPages:
    def test_box_validation(self):
        with pytest.raises(DataError, match="outside"):
            _page(boxes=[OcrBox(95, 0, 10, 10, "x")])
        with pytest.raises(DataError, match="non-positive"):
            _page(boxes=[OcrBox(0, 0, 0, 10, "x")])

    def test_jsonl_roundtrip(self, tmp_path):
        pages = [
            _page("a", boxes=[OcrBox(1, 2, 3, 4, "hello world")]),
            _page("b", width=50, height=40),
        ]
        path = tmp_path / "ocr.jsonl"
        write_ocr_pages(pages, path)
        loaded = load_ocr_pages(path)
        assert set(loaded) == {"a", "b"}
        assert loaded["a"].boxes == pages[0].boxes
        assert loaded["b"].width == 50

    def test_duplicate_doc_rejected(self, tmp_path):
        path = tmp_path / "ocr.jsonl"
        write_ocr_pages([_page("a")], path)
        path.write_text(path.read_text() * 2)
        with pytest.raises(DataError, match="duplicate"):
            load_ocr_pages(path)

    def test_token_sets_are_normalized(self):
        pages = {"a": _page("a", boxes=[OcrBox(0, 0, 10, 10, 'Health "Team"'), OcrBox(0, 20, 10, 10, "works!")])}
        sets = ocr_token_sets(pages)
        assert sets["a"] == frozenset({"health", "team", "works"})


class TestPgm:
    def test_roundtrip_via_pillow(self, tmp_path):
        from vdre.coverage import load_grayscale

        img = (np.arange(48).reshape(6, 8) * 5).astype(np.uint8)
        path = tmp_path / "x.pgm"
        write_pgm(img, path)
        assert np.array_equal(load_grayscale(path), img)

    def test_byte_determinism(self, tmp_path):
        img = np.full((4, 4), 99, dtype=np.uint8)
        p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
        write_pgm(img, p1)
        write_pgm(img, p2)
        assert p1.read_bytes() == p2.read_bytes()
