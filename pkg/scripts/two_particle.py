"""Gap law of the one-particle-per-type chain against its exponential limit.

    python scripts/two_particle.py --v1 0 --v2 1 --a12 1 --a21 1
"""

import argparse

import numpy as np

from timesync.estimators import ks_statistic
from timesync.model import ModelParams, gap_rate, limiting_velocity
from timesync.sim import gap_samples


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--v1", type=float, default=0.0)
    ap.add_argument("--v2", type=float, default=1.0)
    ap.add_argument("--a12", type=float, default=1.0)
    ap.add_argument("--a21", type=float, default=1.0)
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--burnin", type=float, default=100.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    p = ModelParams(args.v1, args.v2, args.a12, args.a21)
    lam = gap_rate(p)
    g = gap_samples(p, args.seed, args.burnin, args.samples)
    ks = ks_statistic(g, lambda x: -np.expm1(-lam * x))
    print(f"lambda = {lam:.6g}; mean gap {g.mean():.5f} +- {g.std(ddof=1) / np.sqrt(g.size):.5f} "
          f"(theory {1 / lam:.5f}); KS = {ks:.4f}")
    print(f"limiting velocity {limiting_velocity(p):.6g}")
    edges = np.quantile(g, np.linspace(0, 1, 11))
    for lo, hi in zip(edges[:-1], edges[1:]):
        emp = np.mean((g >= lo) & (g < hi))
        th = np.exp(-lam * lo) - np.exp(-lam * hi)
        print(f"  [{lo:7.4f}, {hi:7.4f})  empirical {emp:.4f}  exponential {th:.4f}")


if __name__ == "__main__":
    main()
