"""Scaled-time scan of the empirical variance and the regime checks.

    python scripts/regime_scan.py --replicas 64 --out runs/scan
"""

import argparse
from pathlib import Path

from timesync import io, verify
from timesync.estimators import region_of, regime_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--s", type=float, nargs="+", default=[0.1, 0.25, 0.5, 1.0, 2.0, 3.0])
    ap.add_argument("--replicas", type=int, default=64)
    ap.add_argument("--seed", type=int, default=verify.subseed(verify.DEFAULT_SEED, 7))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    scan = regime_scan(verify.SYMMETRIC, args.n, args.s, args.replicas, args.seed, threads=args.threads)
    print(f"{'N':>5} {'s':>6} {'R/N':>10} {'se':>9} region")
    for n, s, y, se in scan.entries:
        print(f"{n:>5} {s:>6.3g} {y:>10.5f} {se:>9.5f} {region_of(scan.kappa2_fit, s)}")
    print(f"kappa2 = {scan.kappa2_fit:.4f}, h = {scan.h_fit:.4f}, h*kappa2 = {scan.h_kappa2:.4f}")
    for c in verify.regime_checks(scan, verify.SYMMETRIC):
        print(f"  {'ok ' if c.passed else 'BAD'} {c.name}: {c.measured:.4g} (tolerance {c.tolerance:g})")
    if args.out:
        io.write_csv(args.out / "scan.csv", ["N", "s", "R_over_N", "std_error"], scan.entries, "script")


if __name__ == "__main__":
    main()
