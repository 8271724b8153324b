"""Reference and greedy depth-3 trees learned from noise-free rewards, with their regrets."""
import argparse

import numpy as np

from policylearn.core import render_tree
from policylearn.evaluation import random_policy_regret, regret_against
from policylearn.simulation import SyntheticTruth, X5, X7, policy_regions_agree, reference_tree, sample_features
from policylearn.tree_search import greedy_tree


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-clean", type=int, default=10000)
    ap.add_argument("--n-eval", type=int, default=200000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    truth = SyntheticTruth()
    names = [f"x{j + 1}" for j in range(truth.p)]
    ref = reference_tree(3, args.n_clean)
    rng = np.random.default_rng(args.seed)
    X = sample_features(args.n_clean, rng)
    _, greedy = greedy_tree(X, truth.mean_rewards(X), 3)
    X_eval = sample_features(args.n_eval, rng)

    print(f"reference tree (exact search on x{X5 + 1}, x{X7 + 1}):")
    print(render_tree(ref, names))
    print(f"greedy tree (all {truth.p} features):")
    print(render_tree(greedy, names))
    print(f"greedy regret vs reference   {regret_against(truth, greedy, X_eval, reference=ref):.4f}")
    print(f"reference regret vs pointwise optimum {regret_against(truth, ref, X_eval):.4f}")
    print(f"random regret vs reference   {random_policy_regret(truth, X_eval, reference=ref):.4f}")
    print(f"random regret vs pointwise optimum {random_policy_regret(truth, X_eval):.4f}")
    print(f"reference agrees with optimal action on {policy_regions_agree(ref, X_eval):.3f} of points")


if __name__ == "__main__":
    main()
