"""Command-line entry point: ``timesync <simulate|two-particle|pde|scan|verify>``.

Exit codes: 0 success, 1 criterion failure (or failed fit), 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from . import hydro, io, verify
from .config import ConfigError, ScenarioConfig, config_from_dict, load_config
from .estimators import (
    FitError,
    drift_cross_check,
    ks_statistic,
    moment_estimates_from_observables,
    region_of,
    regime_scan,
)
from .model import (
    DegenerateVelocitiesError,
    InitialMoments,
    asymptotic_constants,
    gap_rate,
    limiting_velocity,
    mean_trajectories,
    variance_trajectories,
)
from .sim import default_spacing, gap_samples, replica_state, run_until, simulate_observables

EXIT_OK, EXIT_CRITERION, EXIT_CONFIG = 0, 1, 2


def default_config() -> ScenarioConfig:
    return config_from_dict({"params": {"v1": 0.0, "v2": 1.0, "alpha12": 1.0, "alpha21": 1.0}})


def resolve_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "seed")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=str(args.out))
    return cfg


def _summary(cfg: ScenarioConfig, command: str, body: dict) -> dict:
    return {"command": command, "config_hash": cfg.digest(), "config": cfg.provenance(), **body}


# -- simulate -------------------------------------------------------------------------------------


def cmd_simulate(cfg: ScenarioConfig, threads: int = 1) -> int:
    out = Path(cfg.output_dir)
    p = cfg.params
    n1, n2 = cfg.populations()
    times = cfg.sample_times()
    inits = cfg.initial.sampler(n1, n2)
    obs = simulate_observables(p, n1, n2, inits, times, cfg.seed, range(cfg.replicas), threads=threads)
    h = cfg.digest()
    io.write_csv(
        out / "observables.csv",
        ["replica", "t", "mean1", "mean2", "var1", "var2", "min"],
        ([r, t, *obs[r, k]] for r in range(obs.shape[0]) for k, t in enumerate(times)),
        h,
    )
    rows = []
    for k, t in enumerate(times):
        for name, est in moment_estimates_from_observables(obs[:, k, :]).items():
            rows.append([name, t, n1, n2, est.value, est.std_error, est.replicas])
    io.write_csv(out / "estimates.csv", ["quantity", "t", "N1", "N2", "value", "std_error", "replicas"], rows, h)

    state = replica_state(p, n1, n2, inits, cfg.seed, 0)
    traj = []
    for t in times:
        run_until(state, t)
        traj.extend([t, 1, i, x] for i, x in enumerate(state.positions1))
        traj.extend([t, 2, i, x] for i, x in enumerate(state.positions2))
    io.write_csv(out / "trajectory.csv", ["t", "type", "index", "position"], traj, h, replica=0)

    final = moment_estimates_from_observables(obs[:, -1, :])
    body = {
        "N1": n1,
        "N2": n2,
        "replicas": cfg.replicas,
        "horizon": cfg.horizon,
        "final": {name: dataclasses.asdict(est) for name, est in final.items()},
        "limiting_velocity": limiting_velocity(p),
    }
    io.write_json(out / "summary.json", _summary(cfg, "simulate", body))
    print(f"simulate: {cfg.replicas} replicas of N1={n1}, N2={n2} to t={cfg.horizon}; wrote {out}")
    return EXIT_OK


# -- two-particle ---------------------------------------------------------------------------------


def cmd_two_particle(cfg: ScenarioConfig, threads: int = 1) -> int:
    out = Path(cfg.output_dir)
    p = cfg.params
    p.require_distinct_speeds()
    spec = cfg.two_particle
    spacing = spec.spacing if spec.spacing is not None else default_spacing(p)
    lam = gap_rate(p)
    gaps = gap_samples(p, cfg.seed, spec.burnin, spec.n_samples, spacing)
    h = cfg.digest()
    io.write_csv(out / "gaps.csv", ["sample", "t", "gap"],
                 ([k, spec.burnin + (k + 1) * spacing, g] for k, g in enumerate(gaps)), h)
    ks = ks_statistic(gaps, lambda x: -np.expm1(-lam * x))
    se = float(gaps.std(ddof=1) / math.sqrt(gaps.size))
    horizon = spec.burnin + spec.n_samples * spacing
    cc = drift_cross_check(p, horizon, cfg.replicas, cfg.seed, t_burnin=spec.burnin, spacing=spacing,
                           threads=threads)
    v = limiting_velocity(p)
    body = {
        "populations_used": [1, 1],
        "lambda": lam,
        "ks_statistic": ks,
        "mean_gap": {"empirical": float(gaps.mean()), "std_error": se, "theory": 1.0 / lam},
        "velocity": {
            "theory": v,
            "horizon": horizon,
            "empirical": cc.velocity.value,
            "std_error": cc.velocity.std_error,
            "within_3_std_errors": cc.velocity.within(v),
        },
        "gap_drift_cross_check": {
            "type1_residual": dataclasses.asdict(cc.residual1),
            "type2_residual": dataclasses.asdict(cc.residual2),
        },
    }
    io.write_json(out / "summary.json", _summary(cfg, "two-particle", body))
    print(f"two-particle: lambda={lam:.6g} KS={ks:.4f} mean gap={gaps.mean():.5f} (theory {1 / lam:.5f}) "
          f"speed={cc.velocity.value:.5f} (theory {v:.5f})")
    return EXIT_OK


# -- pde ------------------------------------------------------------------------------------------


def _pde_initial(cfg: ScenarioConfig):
    spec = cfg.pde
    p = cfg.params
    horizon = max(spec.times)
    if spec.initial == "gaussian":
        init = InitialMoments(spec.mean1, spec.mean2, spec.std1**2, spec.std2**2)
        grid = hydro.default_grid(p, init, horizon, min_cells=spec.min_cells)
        f0 = hydro.init_field(hydro.gaussian_density(spec.mean1, spec.std1),
                              hydro.gaussian_density(spec.mean2, spec.std2), grid)
        return f0, init
    # Point masses, resolved as Gaussians three cells wide.
    grid = hydro.default_grid(p, InitialMoments(spec.mean1, spec.mean2, 0.0, 0.0), horizon,
                              min_cells=spec.min_cells, min_width=10.0)
    width = 3.0 * grid.dx
    f0 = hydro.init_field(hydro.gaussian_density(spec.mean1, width), hydro.gaussian_density(spec.mean2, width), grid)
    return f0, hydro.initial_moments(f0)


def cmd_pde(cfg: ScenarioConfig, threads: int = 1) -> int:
    out = Path(cfg.output_dir)
    p = cfg.params
    spec = cfg.pde
    h = cfg.digest()
    f0, init = _pde_initial(cfg)
    moment_rows, profile_rows, compare_rows = [], [], []
    fv = f0
    flagged = 0
    u = np.linspace(-4.0, 4.0, 801)
    for t in spec.times:
        sp = hydro.spectral_solve(f0, p, t)
        fv = hydro.fv_solve(fv, p, t - fv.t, cfl=spec.cfl)
        closed = [float(x) for x in (*mean_trajectories(p, init, t), *variance_trajectories(p, init, t))]
        for name, f in (("spectral", sp), ("upwind", fv)):
            num = hydro.moments(f)
            err = max(abs(a - b) / max(abs(b), 1e-300) for a, b in zip(num, closed))
            moment_rows.append([name, t, *num, *closed, err])
        io.write_csv(out / f"field_t{t:g}.csv", ["x", "m1", "m2", "m1_upwind", "m2_upwind"],
                     zip(sp.x, sp.m1, sp.m2, fv.m1, fv.m2), h, t=t)
        for species in (1, 2):
            prof = hydro.rescaled_profile(sp, species, u)
            dist = float(np.max(np.abs(prof - hydro.standard_normal(u))))
            profile_rows.append([t, species, dist])
            if t == spec.times[-1]:
                io.write_csv(out / f"profile{species}.csv", ["u", "profile", "normal_density"],
                             zip(u, prof, hydro.standard_normal(u)), h, t=t, species=species)
        l1 = hydro.l1_distance(sp, fv)
        flag = l1 > spec.disagreement_tol
        flagged += int(flag)
        compare_rows.append([t, l1, spec.disagreement_tol, flag])
    io.write_csv(out / "moments.csv",
                 ["solver", "t", "a1", "a2", "d1", "d2", "a1_closed", "a2_closed", "d1_closed", "d2_closed",
                  "max_relative_error"], moment_rows, h)
    io.write_csv(out / "profile_distance.csv", ["t", "species", "sup_distance"], profile_rows, h)
    io.write_csv(out / "solver_comparison.csv", ["t", "l1_distance", "tolerance", "flagged"], compare_rows, h)
    body = {
        "initial": spec.initial,
        "cells": f0.cells,
        "dx": f0.dx,
        "max_spectral_moment_error": max(r[-1] for r in moment_rows if r[0] == "spectral"),
        "max_upwind_moment_error": max(r[-1] for r in moment_rows if r[0] == "upwind"),
        "final_profile_distance": max(r[2] for r in profile_rows if r[0] == spec.times[-1]),
        "flagged_comparisons": flagged,
        "asymptotics": dataclasses.asdict(asymptotic_constants(p)) if p.dv > 0 else None,
    }
    io.write_json(out / "summary.json", _summary(cfg, "pde", body))
    print(f"pde: {len(spec.times)} snapshots, spectral moment error {body['max_spectral_moment_error']:.3g}, "
          f"profile distance {body['final_profile_distance']:.4f}, {flagged} flagged comparison(s)")
    return EXIT_OK


# -- scan -----------------------------------------------------------------------------------------


def cmd_scan(cfg: ScenarioConfig, threads: int = 1) -> int:
    out = Path(cfg.output_dir)
    spec = cfg.scan
    h = cfg.digest()
    try:
        scan = regime_scan(cfg.params, spec.n_values, spec.s_values, cfg.replicas, cfg.seed, c1=spec.c1,
                           threads=threads)
    except FitError as exc:
        print(f"scan: fit failed: {exc}", file=sys.stderr)
        return EXIT_CRITERION
    io.write_csv(out / "scan.csv", ["N", "s", "R_over_N", "std_error"], scan.entries, h)
    io.write_csv(out / "regions.csv", ["N", "s", "kappa2_s", "region"],
                 ([n, s, scan.kappa2_fit * s, region_of(scan.kappa2_fit, s)] for n, s, _, _ in scan.entries), h)
    fit = {"kappa2": scan.kappa2_fit, "h": scan.h_fit, "h_kappa2": scan.h_kappa2, "residual": scan.fit_residual}
    io.write_json(out / "scan_fit.json", fit)
    checks = verify.regime_checks(scan, cfg.params)
    body = {"fit": fit, "replicas": cfg.replicas, "checks": [c.to_dict() for c in checks]}
    io.write_json(out / "summary.json", _summary(cfg, "scan", body))
    print(f"scan: kappa2={scan.kappa2_fit:.5g} h={scan.h_fit:.5g} (h*kappa2={scan.h_kappa2:.5g})")
    for c in checks:
        print(f"  {'ok ' if c.passed else 'BAD'} {c.name}: {c.measured:.4g} (tol {c.tolerance:g})")
    return EXIT_OK


# -- verify ---------------------------------------------------------------------------------------


def _criteria_list(text: str | None):
    if not text:
        return verify.ALL_CRITERIA
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}", "--criteria") from None


def cmd_verify(seed: int, out: Path, *, threads: int = 1, criteria=verify.ALL_CRITERIA,
               mutate: str | None = None) -> int:
    results = verify.run_suite(criteria, seed=seed, threads=threads, mutate=mutate)
    report = verify.report_dict(results, seed, mutate)
    timings = verify.timing_dict(results)
    io.write_json(out / "summary.json", report)
    io.write_json(out / "timings.json", timings)
    print(verify.format_report(results))
    over = [k for k, v in timings.items() if not v["within_budget"]]
    if over:
        print(f"runtime budget exceeded for criteria {', '.join(over)}")
    ok = report["passed"] and not over
    print("verify: all criteria passed" if ok else "verify: FAILED")
    return EXIT_OK if ok else EXIT_CRITERION


# -- entry ----------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timesync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "run replicas and write observables and estimates"),
        ("two-particle", "gap law and drift of the one-particle-per-type chain"),
        ("pde", "mean-field transport solvers, moments and profiles"),
        ("scan", "scaled-time scan of the empirical variance"),
        ("verify", "run the acceptance criteria"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, help="scenario JSON file")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for replicas")
        p.add_argument("--out", type=Path, help="output directory")
        if name == "verify":
            p.add_argument("--criteria", help="comma-separated criterion numbers (default: all)")
            p.add_argument("--mutate", choices=["exchange-sign"], help="inject a known bug (mutation test)")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "two-particle": cmd_two_particle,
    "pde": cmd_pde,
    "scan": cmd_scan,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "verify":
            seed = verify.DEFAULT_SEED
            if args.config:
                seed = load_config(args.config).seed
            if args.seed is not None:
                seed = args.seed
            if not 0 <= seed < 2**64:
                raise ConfigError("must be an unsigned 64-bit integer", "seed")
            out = args.out if args.out is not None else Path("verify_out")
            return cmd_verify(seed, out, threads=args.threads, criteria=_criteria_list(args.criteria),
                              mutate=args.mutate)
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateVelocitiesError, hydro.CFLError, hydro.TailError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except hydro.AliasingError as exc:
        print(f"config error: {exc} (increase pde.min_cells)", file=sys.stderr)
        return EXIT_CONFIG
    except hydro.OutflowError as exc:
        print(f"config error: {exc} (widen the grid or shorten pde.times)", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if args.command == "verify":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
