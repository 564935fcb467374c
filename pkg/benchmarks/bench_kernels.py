#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Synthetic workload sized like a real analysis: a panel of piecewise-constant
indicator trajectories rasterized onto a fine grid, then the cross-moment
matrix behind the covariance kernel.

Usage: python benchmarks/bench_kernels.py [--n 1000] [--q 8] [--cells 512]
"""
import argparse
import time

import numpy as np

from catfpca import _kernels


def synth_panel(rng, n, q, max_segments=14):
    breaks, vals = [], []
    for _ in range(n):
        k = int(rng.integers(3, max_segments))
        interior = np.sort(rng.random(k))
        b = np.concatenate([[0.0], interior, [1.0]])
        v = (rng.random((b.size - 1, q)) < 0.3).astype(np.float64)
        breaks.append(b)
        vals.append(v)
    return breaks, vals


def timeit(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=600)
    ap.add_argument("--q", type=int, default=8)
    ap.add_argument("--cells", type=int, default=256,
                    help="256 keeps the naive jitted cross moment affordable; "
                         "--cells 512 matches the pipeline's default cap")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    breaks, vals = synth_panel(rng, args.n, args.q)
    nodes = np.linspace(0.0, 1.0, args.cells + 1)
    boffs = np.cumsum([0] + [len(b) for b in breaks]).astype(np.int64)
    voffs = np.cumsum([0] + [v.shape[0] for v in vals]).astype(np.int64)
    bflat = np.concatenate(breaks)
    vflat = np.concatenate(vals)

    print(f"panel: n={args.n} q={args.q} cells={args.cells} "
          f"(numba available: {_kernels.NUMBA_ENABLED})")
    print(f"{'kernel':<22}{'numpy':>12}{'numba':>12}{'speedup':>10}")

    t_np, Z = timeit(lambda: _kernels._batch_cell_averages_numpy(
        bflat, boffs, vflat, voffs, nodes), args.repeats)
    if _kernels.NUMBA_ENABLED:
        _kernels._batch_cell_averages_numba(bflat, boffs, vflat, voffs, nodes)  # JIT warmup
        t_nb, Z_nb = timeit(lambda: _kernels._batch_cell_averages_numba(
            bflat, boffs, vflat, voffs, nodes), args.repeats)
        assert np.abs(Z - Z_nb).max() < 1e-12
        print(f"{'cell averages':<22}{t_np * 1e3:>10.1f}ms{t_nb * 1e3:>10.1f}ms{t_np / t_nb:>9.1f}x")
    else:
        print(f"{'cell averages':<22}{t_np * 1e3:>10.1f}ms{'-':>12}{'-':>10}")

    flat = np.ascontiguousarray(Z.reshape(args.n, args.q * args.cells))
    t_np, C = timeit(lambda: _kernels._cross_moment_numpy(flat), args.repeats)
    if _kernels.NUMBA_ENABLED:
        _kernels._cross_moment_numba(flat)  # JIT warmup
        t_nb, C_nb = timeit(lambda: _kernels._cross_moment_numba(flat), args.repeats)
        assert np.abs(C - C_nb).max() < 1e-9 * max(1.0, np.abs(C).max())
        print(f"{'cross moment':<22}{t_np * 1e3:>10.1f}ms{t_nb * 1e3:>10.1f}ms{t_np / t_nb:>9.1f}x")
    else:
        print(f"{'cross moment':<22}{t_np * 1e3:>10.1f}ms{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
