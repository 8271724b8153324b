"""Command-line entry point: ``policylearn {simulate,fit,evaluate,export-mip,bench}``.

Exit codes: 0 ok, 2 usage, 3 file I/O, 4 dataset validation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import tree_from_json, tree_to_json
from .csvio import read_dataset_csv, write_dataset_csv
from .errors import DatasetError, PolicyLearnError
from .nuisance import NuisanceConfig, fit_cross_fitted_nuisances, read_nuisance_override
from .scoring import aipw_scores, ipw_scores, read_scores_csv

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _int_list(text: str) -> list[int]:
    return [_positive_int(t) for t in text.split(",") if t.strip()]


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _nuisance_config(args) -> NuisanceConfig:
    k = args.k_neighbors if args.k_neighbors == "auto" else int(args.k_neighbors)
    return NuisanceConfig(k_neighbors=k, eta=args.eta)


def _scores_for(ds, args):
    """Cross-fitted AIPW or IPW scores for ``ds`` under the command's flags."""
    if args.nuisance_override:
        nf = read_nuisance_override(args.nuisance_override, ds.d)
    else:
        nf = fit_cross_fitted_nuisances(ds, args.folds, args.seed, _nuisance_config(args))
    if args.method == "caipwl":
        return aipw_scores(ds, nf)
    return ipw_scores(ds, nf.propensity)


# --------------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    from .simulation import generate_synthetic

    ds, truth = generate_synthetic(args.n, args.seed)
    write_dataset_csv(args.out, ds)
    if args.truth_out:
        _write_json(args.truth_out, {**truth.to_dict(), "n": args.n, "seed": args.seed})
    return EXIT_OK


def fit_from_args(args):
    """Library-level fit for a parsed ``fit`` command; returns (result, manifest)."""
    from .tree_search import SearchConfig, fit_policy

    ds = read_dataset_csv(args.data, args.n_actions)
    search = SearchConfig(
        depth=args.depth,
        skip=args.skip,
        parallel_root=args.threads > 1,
        threads=args.threads,
    )
    ncfg = _nuisance_config(args)
    nuis = read_nuisance_override(args.nuisance_override, ds.d) if args.nuisance_override else None
    res = fit_policy(ds, args.method, args.folds, args.seed, ncfg, search, nuisances=nuis, greedy=args.greedy)
    manifest = {
        "version": __version__,
        "data": str(args.data),
        "data_sha256": _sha256(args.data),
        "n": ds.n,
        "p": ds.p,
        "d": ds.d,
        "method": args.method,
        "greedy": args.greedy,
        "folds": args.folds,
        "seed": args.seed,
        "nuisance": ncfg.to_dict(),
        "eta_resolved": ncfg.resolved_eta(ds.known_propensities is not None),
        "known_propensities": ds.known_propensities is not None,
        "nuisance_override": str(args.nuisance_override) if args.nuisance_override else None,
        "search": {k: v for k, v in search.to_dict().items() if k not in ("threads", "parallel_root")},
        "training_value": res.value,
    }
    return res, manifest


def cmd_fit(args) -> int:
    from .scoring import write_scores_csv

    res, manifest = fit_from_args(args)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(tree_to_json(res.tree) + "\n")
    manifest_path = args.manifest or str(Path(args.out).with_suffix(".manifest.json"))
    _write_json(manifest_path, manifest)
    if args.scores_out:
        write_scores_csv(args.scores_out, res.scores)
    return EXIT_OK


def _read_tree(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return tree_from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"{path}: not a tree file ({exc})") from None


def cmd_evaluate(args) -> int:
    from .evaluation import test_value_report, value_difference_ttest

    tree = _read_tree(args.tree)
    tree2 = _read_tree(args.tree2) if args.tree2 else None
    ds = read_dataset_csv(args.data, args.n_actions)
    scores = _scores_for(ds, args)
    report = {"tree": test_value_report(scores, tree, ds.features).to_dict()}
    if tree2 is not None:
        report["tree2"] = test_value_report(scores, tree2, ds.features).to_dict()
        tt = value_difference_ttest(scores, tree, tree2, ds.features)
        report["ttest"] = {
            "mean_diff": tt.mean_diff,
            "t_stat": tt.t_stat if np.isfinite(tt.t_stat) else str(tt.t_stat),
            "p_value": tt.p_value,
            "degenerate_variance": tt.degenerate,
        }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_export_mip(args) -> int:
    from .mip import build_mip, write_lp

    ds = read_dataset_csv(args.data, args.n_actions)
    if args.scores:
        scores = read_scores_csv(args.scores)
        if scores.n != ds.n:
            raise DatasetError(f"{args.scores}: {scores.n} score rows for {ds.n} observations")
    else:
        scores = _scores_for(ds, args)
    model = build_mip(ds.features, scores, args.depth)
    write_lp(model, args.out)
    print(f"variables: {model.n_variables}")
    print(f"constraints: {len(model.constraints)}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .simulation import METHODS, BenchmarkConfig, run_benchmark

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    cfg = BenchmarkConfig(
        n_values=tuple(args.n_list),
        runs=args.runs,
        methods=tuple(methods),
        seed=args.seed,
        depth=args.depth,
        skip=args.skip,
        n_test=args.n_test,
        folds=args.folds,
        estimate_propensities=args.estimate_propensities,
        workers=args.threads,
    )
    res = run_benchmark(cfg)
    text = res.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _add_nuisance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=("caipwl", "ipwl"), default="caipwl")
    p.add_argument("--folds", type=_positive_int, default=5, help="cross-fitting folds K")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eta", type=float, default=None, help="propensity clip (default 0.1 if estimated, none if known)")
    p.add_argument("--k-neighbors", default="auto", help="k for the outcome k-NN, or 'auto'")
    p.add_argument("--nuisance-override", default=None, help="CSV of mu_a,e_a predictions to use instead of fitting")
    p.add_argument("--n-actions", type=_positive_int, default=None, help="d when the data has no e* columns")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="policylearn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic benchmark dataset")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="learn a tree policy")
    p.add_argument("--data", required=True)
    _add_nuisance_flags(p)
    p.add_argument("--depth", type=_positive_int, default=3)
    p.add_argument("--skip", type=_positive_int, default=1)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None, help="default: <out>.manifest.json")
    p.add_argument("--scores-out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="held-out value of one tree, or a paired test of two")
    p.add_argument("--data", required=True)
    p.add_argument("--tree", required=True)
    p.add_argument("--tree2", default=None)
    _add_nuisance_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-mip", help="write the policy-tree MIP as an LP file")
    p.add_argument("--data", required=True)
    p.add_argument("--scores", default=None, help="score CSV (s0..); otherwise scores are fitted")
    _add_nuisance_flags(p)
    p.add_argument("--depth", type=_positive_int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_mip)

    p = sub.add_parser("bench", help="regret table on the synthetic benchmark")
    p.add_argument("--n-list", type=_int_list, default=[1000, 1500, 2000, 2500])
    p.add_argument("--runs", type=_positive_int, default=400)
    p.add_argument("--methods", default=",".join(
        ("caipwl-opt", "caipwl-skip", "caipwl-greedy", "ipwl-opt", "ipwl-skip", "ipwl-greedy", "random")))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth", type=_positive_int, default=3)
    p.add_argument("--skip", type=_positive_int, default=10)
    p.add_argument("--n-test", type=_positive_int, default=15000)
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--estimate-propensities", action="store_true")
    p.add_argument("--threads", type=_positive_int, default=1, help="worker processes")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"policylearn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"policylearn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DatasetError, PolicyLearnError, ValueError) as exc:
        print(f"policylearn: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
