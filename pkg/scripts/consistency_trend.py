"""Posterior probability of the true model under the g-prior (g = n) as n grows."""
import argparse

import numpy as np

from irga.algorithm import NuisanceEstimator
from irga.diagnostics import ConsistencyConfig, consistency_trend
from irga.priors import SpikeSlabPrior


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-values", type=int, nargs="+", default=[100, 200, 400, 800, 1600])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--estimator", choices=("vamp", "zero"), default="vamp")
    args = ap.parse_args()
    cfg = ConsistencyConfig(n_values=tuple(args.n_values), n_seeds=args.seeds)
    est = (NuisanceEstimator.vamp(alpha_prior=SpikeSlabPrior(cfg.lam, cfg.psi)) if args.estimator == "vamp"
           else NuisanceEstimator.zero())
    out = consistency_trend(cfg, est)
    q25, med, q75 = np.quantile(out, [0.25, 0.5, 0.75], axis=0)
    print(f"{'n':>6}{'q25':>8}{'median':>8}{'q75':>8}")
    for n, a, b, c in zip(cfg.n_values, q25, med, q75):
        print(f"{n:6d}{a:8.3f}{b:8.3f}{c:8.3f}")


if __name__ == "__main__":
    main()
