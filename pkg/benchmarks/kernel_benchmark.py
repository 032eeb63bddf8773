"""Benchmark the compiled kernels against the pure NumPy fallback.

Runs the three hot kernels (group tree growth, tree prediction, K pair
sums) on stage sizes matching the simulation study and prints a timing
table.  Usage:

    python benchmarks/kernel_benchmark.py [--repeats N]
"""

import argparse
import time

import numpy as np

from ppboost import _kernels_py as py_kernels

try:
    from ppboost import _speedups as cy_kernels
except ImportError:
    cy_kernels = None


def make_stage(n, p, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, p))
    feat = np.ascontiguousarray(feats.T)
    order = np.ascontiguousarray(
        np.argsort(feat, axis=1, kind="stable").astype(np.int32)
    )
    vsorted = np.ascontiguousarray(
        np.take_along_axis(feat, order.astype(np.int64), axis=1)
    )
    counts = (rng.random(n) < 400 / n) * rng.poisson(1.0, n)
    cell_r = counts.astype(float)
    cell_r *= 400.0 / max(cell_r.sum(), 1.0)
    cell_t = np.full(n, 400.0 / n)
    max_nodes = 2 ** 7 - 1
    n_sub = max(1, int(np.ceil(p / 3)))
    base = np.tile(np.arange(p), (10 * max_nodes, 1))
    subsets = np.ascontiguousarray(
        np.sort(rng.permuted(base, axis=1)[:, :n_sub], axis=1).astype(np.int32)
    ).reshape(10, max_nodes, n_sub)
    return feat, vsorted, order, cell_r, cell_t, subsets


def time_call(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    backends = [("python", py_kernels)]
    if cy_kernels is not None:
        backends.insert(0, ("compiled", cy_kernels))

    print(f"{'kernel':<34}" + "".join(f"{name:>12}" for name, _ in backends)
          + f"{'speedup':>10}")
    rows = []
    for n, p in ((4096, 2), (4096, 10)):
        feat, vsorted, order, cell_r, cell_t, subsets = make_stage(n, p)
        rows.append((
            f"grow_group 10 trees n={n} p={p}",
            lambda mod, a=(feat, vsorted, order, cell_r, cell_t, subsets):
                mod.grow_group(*a, 10.0, 6, 0.0, np.inf),
        ))
    feat, vsorted, order, cell_r, cell_t, subsets = make_stage(4096, 10, 1)
    trees, _ = (cy_kernels or py_kernels).grow_group(
        feat, vsorted, order, cell_r, cell_t, subsets, 10.0, 6, 0.0, np.inf
    )
    feature, threshold, left, right, value, _gain = trees[0]
    X = np.ascontiguousarray(np.random.default_rng(2).normal(size=(4096, 10)))
    rows.append((
        "predict_many n=4096",
        lambda mod: mod.predict_many(feature, threshold, left, right, value, X),
    ))
    rng = np.random.default_rng(3)
    x, y = rng.random(800), rng.random(800)
    lam = rng.uniform(100, 700, 800)
    rows.append((
        "k_pair_sum n=800",
        lambda mod: mod.k_pair_sum(x, y, lam, 0.1, 1.0, 1.0),
    ))

    for label, call in rows:
        times = [time_call(lambda m=mod: call(m), args.repeats)
                 for _, mod in backends]
        speed = times[-1] / times[0] if len(times) == 2 else float("nan")
        cells = "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        print(f"{label:<34}{cells}{speed:>9.1f}x")


if __name__ == "__main__":
    main()
