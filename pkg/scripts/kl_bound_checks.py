"""Empirical KL-bound checks.

``posterior`` compares the expected KL between exact and approximate beta
posteriors with the KL of the projected nuisance laws; ``scalar`` compares the
KL of the scalar-covariance approximation with its explicit bound.
"""
import argparse
import time

from irga.diagnostics import PosteriorKLConfig, ScalarCovarianceConfig, posterior_kl_check, scalar_covariance_check

SCALAR_CONFIGS = [
    dict(p=1, seed=0),
    dict(p=2, seed=1),
    dict(p=3, seed=2),
    dict(p=2, xi_shift=0.5, seed=3),
    dict(p=3, psi_scale=1.5, seed=4),
]


def posterior(args):
    t0 = time.perf_counter()
    reps = posterior_kl_check(PosteriorKLConfig(q=args.q, lam=args.lam, seed=args.seed), n_replicates=args.replicates)
    print(f"{'rep':>3} {'lhs':>10} {'lhs_se':>9} {'rhs':>10} {'rhs_se':>9} holds")
    for i, r in enumerate(reps):
        print(f"{i:3d} {r.lhs:10.5f} {r.lhs_se:9.5f} {r.rhs:10.5f} {r.rhs_se:9.5f} {r.holds}")
    print(f"holds in {sum(r.holds for r in reps)}/{len(reps)}; {time.perf_counter() - t0:.0f} s")


def scalar(args):
    print(f"{'config':<28}{'KL':>8}{'SE':>8}{'delta1':>9}{'delta2':>9}{'m1':>7}{'m2':>7} holds")
    for kw in SCALAR_CONFIGS:
        r = scalar_covariance_check(ScalarCovarianceConfig(n_draws=args.draws, **kw))
        label = ",".join(f"{k}={v}" for k, v in kw.items())
        print(f"{label:<28}{r.kl_mean:8.4f}{r.kl_se:8.4f}{r.delta1:9.3f}{r.delta2:9.3f}{r.m1:7.3f}{r.m2:7.3f} {r.holds}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    sub = ap.add_subparsers(dest="which", required=True)
    a = sub.add_parser("posterior")
    a.add_argument("--q", type=int, default=8)
    a.add_argument("--lam", type=float, default=0.25)
    a.add_argument("--replicates", type=int, default=20)
    a.add_argument("--seed", type=int, default=0)
    b = sub.add_parser("scalar")
    b.add_argument("--draws", type=int, default=50)
    args = ap.parse_args()
    posterior(args) if args.which == "posterior" else scalar(args)


if __name__ == "__main__":
    main()
