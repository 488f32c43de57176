"""Benchmark: compiled SGD kernel vs the pure-python fallback.

Runs the same training epochs through both backends, asserts the resulting
parameters are bit-identical, and reports throughput.

Usage: python benchmarks/bench_kernels.py [--ratings N] [--dim D] [--epochs E]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from recdyn.kernels import _mf_sgd_py

try:
    from recdyn.kernels import _mf_sgd_c
except ImportError:
    _mf_sgd_c = None


def make_problem(n_ratings: int, n_users: int, n_items: int, dim: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    users = rng.integers(0, n_users, n_ratings).astype(np.int64)
    items = rng.integers(0, n_items, n_ratings).astype(np.int64)
    ratings = rng.uniform(1, 5, n_ratings)
    order = rng.permutation(n_ratings).astype(np.int64)
    p = rng.normal(0, 0.1, (n_users, dim))
    q = rng.normal(0, 0.1, (n_items, dim))
    return users, items, ratings, order, p, q


def bench(kernel, problem, epochs: int):
    users, items, ratings, order, p0, q0 = problem
    p, q = p0.copy(), q0.copy()
    bu, bi = np.zeros(p.shape[0]), np.zeros(q.shape[0])
    t0 = time.perf_counter()
    for _ in range(epochs):
        kernel(users, items, ratings, order, 3.0, p, q, bu, bi, 0.01, 0.02)
    elapsed = time.perf_counter() - t0
    return elapsed, (p, q, bu, bi)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ratings", type=int, default=200_000)
    ap.add_argument("--users", type=int, default=2_000)
    ap.add_argument("--items", type=int, default=3_000)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--epochs", type=int, default=5)
    args = ap.parse_args()

    problem = make_problem(args.ratings, args.users, args.items, args.dim)
    total = args.ratings * args.epochs

    t_py, params_py = bench(_mf_sgd_py.sgd_epoch, problem, args.epochs)
    print(f"python : {t_py:8.3f} s  ({total / t_py / 1e6:7.2f} M updates/s)")

    if _mf_sgd_c is None:
        print("cython : extension not built (pip install -e . --no-build-isolation)")
        return

    t_c, params_c = bench(_mf_sgd_c.sgd_epoch, problem, args.epochs)
    print(f"cython : {t_c:8.3f} s  ({total / t_c / 1e6:7.2f} M updates/s)")
    print(f"speedup: {t_py / t_c:7.1f}x")

    for name, a, b in zip(("p", "q", "bu", "bi"), params_py, params_c):
        assert np.array_equal(a, b), f"backend mismatch in {name}"
    print("backends bit-identical: OK")


if __name__ == "__main__":
    main()
