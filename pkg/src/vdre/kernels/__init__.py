"""MaxSim scoring kernels: compiled core with a numpy fallback.

The compiled extension is preferred when it imported cleanly; set
``VDRE_KERNEL=numpy`` or ``VDRE_KERNEL=cython`` to force a backend.
Both backends implement the same contract as
:func:`vdre.kernels.numpy_backend.maxsim_scores`.
"""

from __future__ import annotations

import os

import numpy as np

from . import numpy_backend

try:
    from . import _maxsim as _compiled
except ImportError:
    _compiled = None

_FORCED = os.environ.get("VDRE_KERNEL", "").strip().lower()
if _FORCED == "cython" and _compiled is None:
    raise ImportError(
        "VDRE_KERNEL=cython requested but the compiled kernel is not available; "
        "reinstall with a C compiler or unset VDRE_KERNEL"
    )
if _FORCED not in ("", "cython", "numpy"):
    raise ValueError(f"VDRE_KERNEL must be 'cython' or 'numpy', not {_FORCED!r}")

_USE_COMPILED = _compiled is not None and _FORCED != "numpy"


def backend() -> str:
    """Name of the active backend: 'cython' or 'numpy'."""
    return "cython" if _USE_COMPILED else "numpy"


def available_backends() -> list[str]:
    return ["cython", "numpy"] if _compiled is not None else ["numpy"]


def maxsim_scores(
    query: np.ndarray,
    flat: np.ndarray,
    offsets: np.ndarray,
    force: str | None = None,
) -> np.ndarray:
    """Late-interaction score of one query against every document.

    ``query``: (q, h) float32 active token rows. ``flat``: (N, h) float32
    stacked document rows. ``offsets``: (m+1,) row boundaries per document.
    Returns (m,) float64 scores. ``force`` overrides the backend per call.
    """
    query = np.ascontiguousarray(query, dtype=np.float32)
    flat = np.ascontiguousarray(flat, dtype=np.float32)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if query.ndim != 2 or flat.ndim != 2:
        raise ValueError("query and flat must be 2-d matrices")
    if flat.shape[0] and query.shape[1] != flat.shape[1]:
        raise ValueError(f"query dim {query.shape[1]} != document dim {flat.shape[1]}")
    use_compiled = _USE_COMPILED
    if force is not None:
        if force not in ("cython", "numpy"):
            raise ValueError(f"unknown backend {force!r}")
        if force == "cython" and _compiled is None:
            raise ValueError("compiled kernel is not available")
        use_compiled = force == "cython"
    if use_compiled:
        out = np.zeros(offsets.shape[0] - 1, dtype=np.float64)
        _compiled.maxsim_scores_into(query, flat, offsets, out)
        return out
    return numpy_backend.maxsim_scores(query, flat, offsets)
