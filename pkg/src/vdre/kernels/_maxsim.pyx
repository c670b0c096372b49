# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MaxSim kernel: fused dot/max/sum with no large intermediates.

Document rows are streamed exactly once per query (rows outer, tokens
inner) with a per-token running maximum. Dot products accumulate in
float32 over four independent chains so the loop pipelines; the final
sum over query tokens is reduced in float64, matching the numpy
backend's precision contract.

The extension is compiled with -ffast-math, so the per-token maximum is
seeded from the document's first row instead of an infinity sentinel.
"""

from libc.stdlib cimport free, malloc


cdef inline float _dot(const float* a, const float* b, Py_ssize_t h, Py_ssize_t tail) nogil:
    cdef float a0 = 0.0
    cdef float a1 = 0.0
    cdef float a2 = 0.0
    cdef float a3 = 0.0
    cdef Py_ssize_t c
    for c in range(0, tail, 4):
        a0 = a0 + a[c] * b[c]
        a1 = a1 + a[c + 1] * b[c + 1]
        a2 = a2 + a[c + 2] * b[c + 2]
        a3 = a3 + a[c + 3] * b[c + 3]
    a0 = (a0 + a1) + (a2 + a3)
    for c in range(tail, h):
        a0 = a0 + a[c] * b[c]
    return a0


def maxsim_scores_into(const float[:, ::1] query,
                       const float[:, ::1] flat,
                       const long long[::1] offsets,
                       double[::1] out):
    cdef Py_ssize_t m = offsets.shape[0] - 1
    cdef Py_ssize_t q = query.shape[0]
    cdef Py_ssize_t h = query.shape[1]
    cdef Py_ssize_t d, i, j, tail
    cdef long long r0, r1
    cdef float s
    cdef double total
    cdef const float* frow
    cdef float* best
    if q == 0:
        for d in range(m):
            out[d] = 0.0
        return
    best = <float*> malloc(q * sizeof(float))
    if best == NULL:
        raise MemoryError("maxsim scratch allocation failed")
    tail = h - (h % 4)
    try:
        with nogil:
            for d in range(m):
                r0 = offsets[d]
                r1 = offsets[d + 1]
                frow = &flat[r0, 0]
                for i in range(q):
                    best[i] = _dot(&query[i, 0], frow, h, tail)
                for j in range(r0 + 1, r1):
                    frow = &flat[j, 0]
                    for i in range(q):
                        s = _dot(&query[i, 0], frow, h, tail)
                        if s > best[i]:
                            best[i] = s
                total = 0.0
                for i in range(q):
                    total += best[i]
                out[d] = total
    finally:
        free(best)
