"""Wall-clock timings of the exact search at the sizes used in the performance checks."""
import argparse
import time

import numpy as np

from policylearn.tree_search import SearchConfig, SearchStats, search_tree

CASES = [
    ("depth 2, n=100000, p=10, continuous", 100_000, 10, 2, False),
    ("depth 3, n=2000, p=10, continuous", 2000, 10, 3, False),
    ("depth 3, n=10000, p=10, continuous", 10_000, 10, 3, False),
    ("depth 3, n=100000, p=10, binary", 100_000, 10, 3, True),
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    search_tree(np.zeros((2, 1)), np.zeros((2, 2)), SearchConfig(depth=3))  # jit warm-up
    rng = np.random.default_rng(args.seed)
    for label, n, p, depth, binary in CASES:
        X = rng.integers(0, 2, size=(n, p)).astype(float) if binary else rng.random((n, p))
        S = rng.normal(size=(n, 3))
        cfg = SearchConfig(depth=depth, threads=args.threads, parallel_root=args.threads > 1)
        stats = SearchStats()
        t0 = time.perf_counter()
        search_tree(X, S, cfg, stats)
        print(f"{label:40s} {time.perf_counter() - t0:8.2f}s  {stats}")


if __name__ == "__main__":
    main()
