#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallbacks.

Times the CSR*dense product and the Jacobi eigensolver on growing sizes
and prints a speedup table. Run from the repo root:

    python3 benchmarks/backend_bench.py [--csv out.csv]
"""

import argparse
import time

import numpy as np

from armagraph import _kernels_py
from armagraph.rng import make_rng
from armagraph.sparse import build_csr

try:
    from armagraph import _kernels as compiled
except ImportError:
    compiled = None


def random_adjacency(rng, n, avg_degree):
    m = int(n * avg_degree / 2)
    src = rng.integers(0, n, size=m)
    dst = rng.integers(0, n, size=m)
    edges = [(int(s), int(d), 1.0) for s, d in zip(src, dst) if s != d]
    return build_csr(n, edges)


def best_of(fn, repeats=7):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_spmm(rng, rows):
    for n, deg, cols in ((500, 8, 16), (2000, 16, 16), (8000, 16, 32), (20000, 24, 32)):
        s = random_adjacency(rng, n, deg)
        x = np.ascontiguousarray(rng.standard_normal((n, cols)))

        def run(impl):
            out = np.zeros((n, cols))
            impl.csr_dense_matmul(s.indptr, s.indices, s.data, x, out)

        t_py = best_of(lambda: run(_kernels_py))
        t_c = best_of(lambda: run(compiled)) if compiled else float("nan")
        rows.append(("spmm", f"n={n} nnz={s.nnz} cols={cols}", t_py, t_c))


def bench_jacobi(rng, rows):
    for n in (60, 150, 300):
        m = rng.standard_normal((n, n))
        m = 0.5 * (m + m.T)
        tol = 1e-12 * np.linalg.norm(m)

        def run(impl):
            a = m.copy()
            v = np.empty_like(a)
            impl.jacobi_sweeps(a, v, tol, 50)

        t_py = best_of(lambda: run(_kernels_py), repeats=3)
        t_c = best_of(lambda: run(compiled), repeats=3) if compiled else float("nan")
        rows.append(("jacobi", f"n={n}", t_py, t_c))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", default=None, help="also write results as CSV")
    args = parser.parse_args()
    if compiled is None:
        print("compiled extension not available; timing the fallback only")
    rng = make_rng(0)
    rows = []
    bench_spmm(rng, rows)
    bench_jacobi(rng, rows)
    print(f"{'kernel':8} {'case':28} {'python':>12} {'compiled':>12} {'speedup':>8}")
    for kernel, case, t_py, t_c in rows:
        speedup = t_py / t_c if t_c == t_c else float("nan")
        print(f"{kernel:8} {case:28} {t_py * 1e3:10.3f}ms {t_c * 1e3:10.3f}ms {speedup:7.1f}x")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("kernel,case,python_s,compiled_s\n")
            for kernel, case, t_py, t_c in rows:
                fh.write(f"{kernel},{case},{t_py!r},{t_c!r}\n")


if __name__ == "__main__":
    main()
