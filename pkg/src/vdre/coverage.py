"""Visual coverage statistics of document pages.

A page decomposes into three pixel-area fractions: text coverage (area
inside OCR text boxes minus the background pixels within them), non-text
coverage (everything outside text boxes that is not background), and
background coverage (the residual, so the three always sum to exactly 1).

OCR pages arrive as line-delimited JSON:
``{"doc_id", "width", "height", "boxes": [{"x","y","w","h","text"}]}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, DimensionError
from .scoring import normalize_token


@dataclass(frozen=True)
class OcrBox:
    x: float
    y: float
    w: float
    h: float
    text: str


@dataclass(frozen=True)
class OcrPage:
    doc_id: str
    width: int
    height: int
    boxes: tuple[OcrBox, ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DataError(f"page {self.doc_id!r}: non-positive dimensions {self.width}x{self.height}")
        for i, b in enumerate(self.boxes):
            if b.w <= 0 or b.h <= 0:
                raise DataError(f"page {self.doc_id!r}: box {i} has non-positive size {b.w}x{b.h}")
            if b.x < 0 or b.y < 0 or b.x + b.w > self.width + 1e-9 or b.y + b.h > self.height + 1e-9:
                raise DataError(f"page {self.doc_id!r}: box {i} lies outside the page")


@dataclass(frozen=True)
class VisualFeatures:
    """Coverage fractions plus the page's OCR token count."""

    c_text: float
    c_nontext: float
    c_background: float
    token_count: int

    def as_dict(self) -> dict:
        return {
            "c_text": self.c_text,
            "c_nontext": self.c_nontext,
            "c_background": self.c_background,
            "token_count": self.token_count,
        }


FEATURE_NAMES = ("c_text", "c_nontext", "c_background", "token_count")


def background_mask(image: np.ndarray, threshold: int = 250) -> np.ndarray:
    """Boolean background map: a pixel is background iff luminance >= threshold."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-d grayscale bitmap, got shape {arr.shape}")
    return arr >= threshold


def rasterize_boxes(page: OcrPage) -> np.ndarray:
    """Union of the page's text boxes on the integer pixel grid.

    Boxes are rounded outward, so overlapping OCR output is counted once.
    """
    union = np.zeros((page.height, page.width), dtype=bool)
    for b in page.boxes:
        x0 = max(0, int(math.floor(b.x)))
        y0 = max(0, int(math.floor(b.y)))
        x1 = min(page.width, int(math.ceil(b.x + b.w)))
        y1 = min(page.height, int(math.ceil(b.y + b.h)))
        union[y0:y1, x0:x1] = True
    return union


def coverage(page: OcrPage, mask: np.ndarray) -> VisualFeatures:
    """Coverage fractions of one page given its background map.

    The background fraction is computed as the residual of the other two,
    so the three fractions sum to exactly 1. A background map that marks
    more non-box area as content than exists is rejected.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (page.height, page.width):
        raise DimensionError(
            f"page {page.doc_id!r}: mask shape {mask.shape} != page shape {(page.height, page.width)}"
        )
    a_total = page.width * page.height
    box_union = rasterize_boxes(page)
    a_t = int(box_union.sum())
    a_tbg = int((mask & box_union).sum())
    a_bg = int(mask.sum())
    c_text = (a_t - a_tbg) / a_total
    c_nontext = (a_total - a_t - a_bg) / a_total
    if c_nontext < -1e-9:
        raise DataError(
            f"page {page.doc_id!r}: background map inconsistent with text boxes "
            f"(total={a_total}, text={a_t}, text_bg={a_tbg}, bg={a_bg})"
        )
    c_nontext = max(c_nontext, 0.0)
    # residual of the rounded sum, so the three fractions add to exactly 1.0
    c_background = 1.0 - (c_text + c_nontext)
    token_count = sum(len(b.text.split()) for b in page.boxes)
    return VisualFeatures(
        c_text=c_text, c_nontext=c_nontext, c_background=c_background, token_count=token_count
    )


def load_ocr_pages(path) -> dict[str, OcrPage]:
    path = Path(path)
    pages: dict[str, OcrPage] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({exc})") from None
            try:
                page = OcrPage(
                    doc_id=str(rec["doc_id"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    boxes=tuple(
                        OcrBox(
                            x=float(b["x"]), y=float(b["y"]), w=float(b["w"]), h=float(b["h"]),
                            text=str(b["text"]),
                        )
                        for b in rec.get("boxes", [])
                    ),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: malformed page record ({exc})") from None
            if page.doc_id in pages:
                raise DataError(f"{path}: line {lineno}: duplicate page for doc {page.doc_id!r}")
            pages[page.doc_id] = page
    return pages


def write_ocr_pages(pages: Iterable[OcrPage], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for page in pages:
            rec = {
                "doc_id": page.doc_id,
                "width": page.width,
                "height": page.height,
                "boxes": [
                    {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "text": b.text} for b in page.boxes
                ],
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def ocr_token_sets(pages: Mapping[str, OcrPage]) -> dict[str, frozenset[str]]:
    """Normalized token vocabulary per document, for lexical matching."""
    out = {}
    for doc_id, page in pages.items():
        tokens = set()
        for b in page.boxes:
            for raw in b.text.split():
                norm = normalize_token(raw)
                if norm:
                    tokens.add(norm)
        out[doc_id] = frozenset(tokens)
    return out


def load_grayscale(path) -> np.ndarray:
    """Load an image file as a uint8 grayscale bitmap."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def write_pgm(image: np.ndarray, path) -> None:
    """Write a binary PGM file; byte-stable across library versions."""
    arr = np.ascontiguousarray(np.asarray(image, dtype=np.uint8))
    if arr.ndim != 2:
        raise DataError(f"expected a 2-d grayscale bitmap, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())
