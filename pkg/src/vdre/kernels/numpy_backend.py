"""Vectorized MaxSim scoring over contiguous corpus storage.

Work is sliced into document-aligned slabs so the intermediate similarity
block stays bounded regardless of corpus size.
"""

from __future__ import annotations

import numpy as np

# target cell count of one similarity slab (query tokens x patch rows)
_SLAB_CELLS = 1 << 23


def maxsim_scores(query: np.ndarray, flat: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-document late-interaction scores for one query.

    ``query`` is (q, h); ``flat`` stacks all document rows, with document d
    owning rows offsets[d]:offsets[d+1]. Per-token maxima are computed in
    float32, the sum over tokens in float64.
    """
    q = query.shape[0]
    m = offsets.shape[0] - 1
    out = np.zeros(m, dtype=np.float64)
    if q == 0 or m == 0:
        return out
    rows_per_slab = max(1, _SLAB_CELLS // q)
    d0 = 0
    while d0 < m:
        d1 = d0 + 1
        while d1 < m and offsets[d1 + 1] - offsets[d0] <= rows_per_slab:
            d1 += 1
        r0 = int(offsets[d0])
        r1 = int(offsets[d1])
        sim = query @ flat[r0:r1].T
        starts = (offsets[d0:d1] - r0).astype(np.intp)
        per_token = np.maximum.reduceat(sim, starts, axis=1)
        out[d0:d1] = per_token.sum(axis=0, dtype=np.float64)
        d0 = d1
    return out
