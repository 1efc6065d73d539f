#!/usr/bin/env python3
"""Compare GTG against exact Shapley across seeds.

For each seed, trains a 4-client federation, scores every round with both
schemes on the accuracy metric, and reports the rank correlation of the
accumulated scores together with how many coalition-utility evaluations
each scheme spent. Shows the cost/fidelity trade-off of the truncation
thresholds on a desk-scale problem.

Usage: python scripts/scheme_agreement.py [n_seeds] [eps2]
"""

import sys

import numpy as np

from fedtrust.analysis import spearman_flagged
from fedtrust.attacks import AttackSpec
from fedtrust.data import PartitionMode, PartitionSpec, generate_synthetic, partition, train_test_split
from fedtrust.federation import TrainingConfig, run_training
from fedtrust.metrics import EvalContext, FairnessSpec, Metric, NoiseSpec
from fedtrust.nn import Architecture, OutputActivation, init_params
from fedtrust.valuation import CoalitionCache, Scheme, ValuationConfig, score_rounds


def one_seed(seed: int, eps2: float):
    data = generate_synthetic(1200, 8, 0.3, seed=seed)
    train, test = train_test_split(data, 0.2, seed=seed)
    parts = partition(train, PartitionSpec(PartitionMode.DIRICHLET, 4, 0.5, seed=seed))
    init = init_params(Architecture((8, 16, 1), OutputActivation.SIGMOID), seed)
    records = run_training(init, parts, TrainingConfig(rounds=10, seed=seed))
    ctx = EvalContext(test, FairnessSpec(1), NoiseSpec(0.1, seed), AttackSpec())

    cache_exact, cache_gtg = CoalitionCache(), CoalitionCache()
    exact = score_rounds(records, [Scheme.EXACT], [Metric.PERF], ctx, ValuationConfig(), cache_exact)
    gtg = score_rounds(
        records,
        [Scheme.GTG],
        [Metric.PERF],
        ctx,
        ValuationConfig(eps2=eps2, perm_seed=seed),
        cache_gtg,
    )
    result = spearman_flagged(
        gtg.score_vector("gtg", "perf", 10), exact.score_vector("exact_shapley", "perf", 10)
    )
    return result, cache_gtg.evaluations, cache_exact.evaluations


def main():
    n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 5
    eps2 = float(sys.argv[2]) if len(sys.argv) > 2 else 0.05
    print(f"seed  phi(gtg, exact)  evals gtg/exact   (eps2={eps2})")
    phis = []
    for seed in range(n_seeds):
        result, gtg_evals, exact_evals = one_seed(seed, eps2)
        phi_text = "--  (degenerate)" if result.degenerate else f"{result.phi:+.3f}"
        print(f"{seed:4d}  {phi_text:16s} {gtg_evals:5d} / {exact_evals}")
        phis.append(result.phi)
    print(f"median phi = {np.median(phis):+.3f}")


if __name__ == "__main__":
    main()
