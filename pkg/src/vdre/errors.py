"""Exception hierarchy shared across the package."""

from __future__ import annotations


class VdreError(Exception):
    """Base class for all engine errors."""


class FormatError(VdreError):
    """A corpus file violates the on-disk format; messages name the byte offset."""


class DimensionError(VdreError):
    """Embedding dimensionality disagrees between records or operands."""


class DataError(VdreError):
    """Input data violates an invariant (zero-norm rows, bad metadata, ...)."""


class EvaluationError(VdreError):
    """A metric is undefined for the given run/qrels combination."""


class BatchSearchError(VdreError):
    """One or more queries of a batch failed; carries per-query attribution."""

    def __init__(self, failures: list[tuple[str, Exception]]):
        self.failures = failures
        detail = "; ".join(f"{qid}: {exc}" for qid, exc in failures)
        noun = "query" if len(failures) == 1 else "queries"
        super().__init__(f"{len(failures)} {noun} failed: {detail}")
