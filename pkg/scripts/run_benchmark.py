"""Regret table on the synthetic three-region benchmark.

    python3 scripts/run_benchmark.py --runs 50 --n-list 2000 --out results/bench.csv
"""
import argparse
import sys
import time
from pathlib import Path

from policylearn.simulation import METHODS, BenchmarkConfig, run_benchmark


def parse_args() -> argparse.Namespace:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-list", default="1000,1500,2000,2500")
    ap.add_argument("--runs", type=int, default=400)
    ap.add_argument("--methods", default=",".join(METHODS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--estimate-propensities", action="store_true")
    ap.add_argument("--out", default=None)
    return ap.parse_args()


def main() -> None:
    args = parse_args()
    cfg = BenchmarkConfig(
        n_values=tuple(int(v) for v in args.n_list.split(",")),
        runs=args.runs,
        methods=tuple(args.methods.split(",")),
        seed=args.seed,
        estimate_propensities=args.estimate_propensities,
        workers=args.workers,
    )
    t0 = time.perf_counter()

    def progress(done, total):
        if done % 10 == 0 or done == total:
            print(f"\r{done}/{total} runs, {time.perf_counter() - t0:.0f}s", end="", file=sys.stderr)

    res = run_benchmark(cfg, progress=progress)
    print(file=sys.stderr)
    text = res.to_csv()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text, end="")


if __name__ == "__main__":
    main()
