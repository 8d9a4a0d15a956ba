"""Wall-clock comparison of the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--n 1024] [--d 64] [--block 64] [--repeat 3]

Prints one TSV row per kernel: best-of-repeat seconds for each backend, the
speedup, and the max absolute difference between the two outputs.
"""

import argparse
import time

import numpy as np

from vsprefill import kernels
from vsprefill.sparsity import BudgetConfig, select_pattern
from vsprefill.vsaggregate import VSScores


def best_time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--block", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if kernels._ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install --no-build-isolation -e .`")
    rng = np.random.default_rng(args.seed)
    n, d, block = args.n, args.d, args.block
    q, k, v = (rng.standard_normal((n, d)) for _ in range(3))
    scale = 1.0 / np.sqrt(d)
    scores = VSScores(rng.dirichlet(np.full(n, 0.2)), rng.dirichlet(np.full(n, 0.2)))
    sel = select_pattern(scores, BudgetConfig(0.5, 0.5))
    row = n - 1
    cases = {
        "flash_forward": lambda m: m.flash_forward(q, k, v, scale, block),
        "vs_aggregate": lambda m: np.concatenate(m.vs_aggregate(q, k, scale, block)),
        "sparse_forward": lambda m: m.sparse_forward(q, k, v, sel.i_v, sel.i_s, scale, block)[0],
        "merge_row": lambda m: m.merge_row(sel.i_v, sel.i_s, row).astype(float),
    }
    c, p = kernels.get_backend("cython"), kernels.get_backend("numpy")
    print(f"# n={n} d={d} block={block} k_v={sel.k_v} k_s={sel.k_s} repeat={args.repeat}")
    print("kernel\tcython_s\tnumpy_s\tspeedup\tmax_abs_diff")
    for name, fn in cases.items():
        tc, oc = best_time(lambda: fn(c), args.repeat)
        tp, op = best_time(lambda: fn(p), args.repeat)
        print(f"{name}\t{tc:.6f}\t{tp:.6f}\t{tp / tc:.2f}\t{np.max(np.abs(oc - op)):.2e}")


if __name__ == "__main__":
    main()
