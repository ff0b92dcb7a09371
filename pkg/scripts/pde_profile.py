"""Approach of the rescaled mean-field densities to the standard normal profile.

    python scripts/pde_profile.py --times 5 10 20 50 100
"""

import argparse
import math

from timesync import hydro
from timesync.model import InitialMoments, ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--times", type=float, nargs="+", default=[5.0, 10.0, 20.0, 50.0, 100.0])
    ap.add_argument("--std", type=float, default=1.0, help="initial width of both species")
    ap.add_argument("--a12", type=float, default=1.0)
    ap.add_argument("--a21", type=float, default=1.0)
    args = ap.parse_args()

    p = ModelParams(0.0, 1.0, args.a12, args.a21)
    init = InitialMoments(0.0, 0.0, args.std**2, args.std**2)
    grid = hydro.default_grid(p, init, max(args.times), min_cells=4096)
    f0 = hydro.init_field(hydro.gaussian_density(0.0, args.std), hydro.gaussian_density(0.0, args.std), grid)
    print(f"grid: {grid.cells} cells, dx = {grid.dx:.4g}")
    for t in args.times:
        f = hydro.spectral_solve(f0, p, t)
        d1, d2 = hydro.profile_distance(f, 1), hydro.profile_distance(f, 2)
        print(f"t = {t:6g}: sup distance {d1:.5f} / {d2:.5f}; sqrt(t) * distance {math.sqrt(t) * max(d1, d2):.4f}")


if __name__ == "__main__":
    main()
