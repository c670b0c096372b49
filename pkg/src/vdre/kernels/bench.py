"""Benchmark the compiled MaxSim kernel against the numpy backend.

Run as ``python -m vdre.kernels.bench``. Generates a synthetic corpus,
checks that both backends agree, and reports per-query scoring latency
for each available backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from .. import kernels
from ..synth import SynthSpec, generate


def _time_backend(name: str, query_rows, flat, offsets, repeats: int) -> tuple[float, np.ndarray]:
    kernels.maxsim_scores(query_rows[0], flat, offsets, force=name)  # warm-up
    t0 = time.perf_counter()
    last = None
    for rows in query_rows * repeats:
        last = kernels.maxsim_scores(rows, flat, offsets, force=name)
    elapsed = (time.perf_counter() - t0) / (len(query_rows) * repeats)
    return elapsed, last


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=5000)
    parser.add_argument("--queries", type=int, default=16)
    parser.add_argument("--patches", type=int, default=30)
    parser.add_argument("--tokens", type=int, default=12)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args(argv)

    spec = SynthSpec(
        seed=args.seed,
        num_docs=args.docs,
        num_queries=args.queries,
        patches_per_doc=args.patches,
        tokens_per_query=args.tokens,
        dim=args.dim,
    )
    corpus, queries, _, _ = generate(spec)
    query_rows = [q.vectors for q in queries]
    print(
        f"corpus: {len(corpus)} docs x {args.patches} patches, dim {args.dim}; "
        f"{len(queries)} queries x {queries[0].n} tokens; default backend: {kernels.backend()}"
    )

    results = {}
    for name in kernels.available_backends():
        elapsed, scores = _time_backend(name, query_rows, corpus.flat, corpus.offsets, args.repeats)
        results[name] = (elapsed, scores)
        print(f"{name:>7}: {elapsed * 1e3:8.3f} ms/query")

    if len(results) == 2:
        diff = float(np.max(np.abs(results["cython"][1] - results["numpy"][1])))
        print(f"max |score difference| on the last query: {diff:.2e}")
        if diff > 1e-4:
            print("BACKEND MISMATCH: difference exceeds 1e-4")
            return 1
        fast, slow = sorted(results.items(), key=lambda kv: kv[1][0])
        ratio = slow[1][0] / fast[1][0] if fast[1][0] > 0 else float("inf")
        print(f"{fast[0]} is {ratio:.2f}x faster than {slow[0]}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
