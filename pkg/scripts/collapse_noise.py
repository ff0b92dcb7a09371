"""How the pointwise collapse metric of the regime scan depends on the replica count.

For each replica count the scan is repeated under several seeds; the
spread shows how much of the measured deviation across N is Monte Carlo
noise rather than finite-N bias.

    python scripts/collapse_noise.py --replicas 64 256 1024 --seeds 5
"""

import argparse

import numpy as np

from timesync import verify
from timesync.estimators import regime_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    for r in args.replicas:
        collapse = []
        for k in range(args.seeds):
            scan = regime_scan(verify.SYMMETRIC, (50, 100, 200), (0.1, 0.25, 0.5, 1.0, 2.0, 3.0), r,
                               seed=1000 + k, threads=args.threads)
            collapse.append(verify.regime_checks(scan, verify.SYMMETRIC)[0].measured)
        c = np.array(collapse)
        print(f"replicas={r:>5}: collapse deviation mean {c.mean():.3f}, min {c.min():.3f}, max {c.max():.3f}, "
              f"passing {np.sum(c <= 0.10)}/{c.size}")


if __name__ == "__main__":
    main()
