"""Rand index of the Bayes classifier that knows the true intensities.

Cells are labelled by argmax_j pi_j Poisson(N_i; lambda_j), with pi_j the true
cluster proportions.  No clustering of counts alone can expect to do much
better, so this is a useful ceiling when judging the Rand index of a fit.

    python scripts/rand_index_reference.py --scenario 1 --grids 2000
"""
import argparse

import numpy as np
from scipy.stats import poisson

from mfm_nhpp.assessment import rand_index
from mfm_nhpp.sim_bench import ScenarioSpec, generate_counts


def oracle_rand_index(spec: ScenarioSpec, grids: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    lam = np.asarray(spec.true_lambdas)
    prior = np.bincount(spec.truth, minlength=spec.K + 1)[1:] / spec.truth.size
    out = np.empty(grids)
    for g in range(grids):
        grid, truth = generate_counts(spec, rng)
        logp = poisson.logpmf(grid.counts[:, None], lam[None, :]) + np.log(prior)[None, :]
        out[g] = rand_index(np.argmax(logp, axis=1), truth)
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", type=int, default=1, choices=[1, 2])
    p.add_argument("--resolution", type=int, default=20)
    p.add_argument("--grids", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    spec = ScenarioSpec.named(args.scenario, args.resolution)
    ri = oracle_rand_index(spec, args.grids, args.seed)
    print(f"scenario {args.scenario}: oracle-classifier Rand index mean {ri.mean():.4f} "
          f"(sd {ri.std(ddof=1):.4f}, min {ri.min():.4f}) over {args.grids} grids")

    # the same ceiling when every cell falls in the two most confusable clusters
    lam = spec.true_lambdas
    pairs = [(lam[i], lam[i + 1]) for i in range(len(lam) - 1)]
    worst = min(pairs, key=lambda ab: abs(np.log(ab[1] / ab[0])))
    r = args.resolution
    half = ScenarioSpec(r, worst, np.where(np.arange(r * r) % r < r // 2, 1, 2).reshape(r, r))
    ri2 = oracle_rand_index(half, max(200, args.grids // 4), args.seed)
    print(f"two-cluster grid with intensities {worst}: oracle Rand index {ri2.mean():.4f}")


if __name__ == "__main__":
    main()
