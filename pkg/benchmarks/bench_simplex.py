"""Benchmark the compiled simplex kernel against the pure-python fallback.

Times the same randomly generated bounded-variable LPs through both
backends (identical pivot rules, so identical answers) and reports
per-solve medians plus the batched many-right-hand-side sweep used by the
grid oracles.

Usage: python3 benchmarks/bench_simplex.py [--repeats N] [--batch B]
"""

import argparse
import time

import numpy as np

from isddp.simplex import OPTIMAL, _fallback

try:
    from isddp.simplex import _speedups
except ImportError:
    _speedups = None

SIZES = ((6, 3), (12, 6), (24, 12), (48, 24))  # (columns, equality rows)
SEED = 20240823


def random_lp(rng, n_cols, n_rows):
    """Feasible bounded LP: the right-hand side is built from an interior
    point, so phase 1 always succeeds and the optimum is finite."""
    lb = rng.uniform(-2.0, 0.0, size=n_cols)
    ub = lb + rng.uniform(1.0, 3.0, size=n_cols)
    x0 = lb + rng.uniform(0.2, 0.8, size=n_cols) * (ub - lb)
    G = rng.normal(size=(n_rows, n_cols))
    h = G @ x0
    c = rng.normal(size=n_cols)
    return c, G, h, lb, ub


def time_backend(backend, lps, repeats):
    """Median wall time per solve (seconds) and the objective checksum used
    to confirm both backends walked to the same optima."""
    checksum = 0.0
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for c, G, h, lb, ub in lps:
            out = backend.lp_solve(c, G, h, lb, ub, 0, 0, None, None,
                                   1e-9, 1e-9)
            assert out[0] == OPTIMAL
            checksum += out[3]
        times.append((time.perf_counter() - t0) / len(lps))
    return float(np.median(times)), checksum / repeats


def time_many_rhs(backend, size, batch, rng):
    c, G, h, lb, ub = random_lp(rng, *size)
    x0s = lb + rng.uniform(0.2, 0.8, size=(batch, len(lb))) * (ub - lb)
    H = x0s @ G.T
    t0 = time.perf_counter()
    statuses, objs = backend.lp_solve_many(c, G, H, lb, ub, 0, 1e-9, 1e-9)
    elapsed = time.perf_counter() - t0
    assert int(np.sum(statuses == OPTIMAL)) == batch
    return elapsed / batch, float(np.sum(objs))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repetitions per size (median reported)")
    ap.add_argument("--instances", type=int, default=40,
                    help="LPs per size")
    ap.add_argument("--batch", type=int, default=2000,
                    help="right-hand sides for the sweep benchmark")
    args = ap.parse_args()

    if _speedups is None:
        print("compiled backend not built; run pip install -e . first")
        return 1

    print(f"{'size':>10} {'pure ms':>9} {'compiled ms':>12} {'speedup':>8}")
    rng = np.random.default_rng(SEED)
    for size in SIZES:
        lps = [random_lp(rng, *size) for _ in range(args.instances)]
        t_pure, sum_pure = time_backend(_fallback, lps, args.repeats)
        t_fast, sum_fast = time_backend(_speedups, lps, args.repeats)
        assert abs(sum_pure - sum_fast) <= 1e-6 * (1.0 + abs(sum_pure))
        print(f"{size[0]:>4}x{size[1]:<5} {1e3 * t_pure:>9.3f} "
              f"{1e3 * t_fast:>12.3f} {t_pure / t_fast:>8.1f}x")

    sweep_rng = np.random.default_rng(SEED + 1)
    t_pure, s_pure = time_many_rhs(_fallback, SIZES[1], args.batch, sweep_rng)
    sweep_rng = np.random.default_rng(SEED + 1)
    t_fast, s_fast = time_many_rhs(_speedups, SIZES[1], args.batch, sweep_rng)
    assert abs(s_pure - s_fast) <= 1e-6 * (1.0 + abs(s_pure))
    print(f"{'sweep':>10} {1e3 * t_pure:>9.3f} {1e3 * t_fast:>12.3f} "
          f"{t_pure / t_fast:>8.1f}x   ({args.batch} right-hand sides)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
