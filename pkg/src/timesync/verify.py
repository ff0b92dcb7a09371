"""Acceptance suite: ten numbered criteria, each a list of pinned-tolerance checks.

Every criterion draws its randomness from a sub-seed derived from the master
seed, so criteria can run alone or together with identical results.  The
report (:func:`report_dict`) holds only deterministic quantities; wall-clock
times go into a separate timing record.
"""

from __future__ import annotations

import contextlib
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import hydro, io
from .estimators import (
    drift_cross_check,
    fit_kappa2,
    fit_regime_free,
    ks_statistic,
    populations,
    region_of,
    regime_scan,
    velocity_identity_check,
)
from .model import (
    InitialMoments,
    ModelParams,
    asymptotic_constants,
    gap_rate,
    lambda_plus_expansion,
    limiting_velocity,
    mean_ode_rhs,
    mean_trajectories,
    variance_trajectories,
)
from .sim import gap_samples, map_replicas, replica_state, run_until

DEFAULT_SEED = 20260118
SYMMETRIC = ModelParams(v1=0.0, v2=1.0, alpha12=1.0, alpha21=1.0)


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    target: float
    tolerance: float
    rule: str
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "target": self.target,
            "tolerance": self.tolerance,
            "rule": self.rule,
            "passed": bool(self.passed),
        }


def check_abs(name, measured, target, tol) -> Check:
    return Check(name, float(measured), float(target), float(tol), "|measured - target| <= tolerance",
                 bool(abs(measured - target) <= tol))


def check_rel(name, measured, target, tol) -> Check:
    return Check(name, float(measured), float(target), float(tol), "|measured - target| <= tolerance * |target|",
                 bool(abs(measured - target) <= tol * abs(target)))


def check_below(name, measured, tol) -> Check:
    return Check(name, float(measured), 0.0, float(tol), "measured <= tolerance", bool(measured <= tol))


def check_sigmas(name, value, std_error, target, sigmas=3.0) -> Check:
    """``measured`` is the deviation in standard errors."""
    z = abs(value - target) / std_error if std_error > 0 else math.inf
    return Check(name, float(z), 0.0, float(sigmas), "|estimate - target| / std_error <= tolerance",
                 bool(z <= sigmas))


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list
    seconds: float = 0.0
    budget: float = math.inf
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.checks) and all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "criterion": self.number,
            "title": self.title,
            "passed": self.passed,
            "error": self.error,
            "checks": [c.to_dict() for c in self.checks],
        }


def subseed(seed: int, criterion: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(1000 + criterion,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# -- criteria -------------------------------------------------------------------------------------


def criterion_gap_law(seed: int, threads: int) -> list:
    p = SYMMETRIC
    lam = gap_rate(p)
    gaps = gap_samples(p, seed, 100.0, 10_000)
    ks = ks_statistic(gaps, lambda x: -np.expm1(-lam * x))
    se = gaps.std(ddof=1) / math.sqrt(gaps.size)
    return [
        check_below("ks_distance_to_exponential", ks, 0.02),
        check_sigmas("mean_gap_vs_inverse_rate", gaps.mean(), se, 1.0 / lam),
    ]


def criterion_velocity(seed: int, threads: int) -> list:
    p = SYMMETRIC
    v = limiting_velocity(p)
    cc = drift_cross_check(p, 1000.0, 32, seed, threads=threads)
    return [
        check_rel("mean_position_over_time_at_1000", cc.velocity.value, v, 0.01),
        check_sigmas("drift_from_gap_type1_residual", cc.residual1.value, cc.residual1.std_error, 0.0),
        check_sigmas("drift_from_gap_type2_residual", cc.residual2.value, cc.residual2.std_error, 0.0),
    ]


def criterion_velocity_identity(seed: int, threads: int) -> list:
    c = velocity_identity_check(SYMMETRIC, 5, 5, 16, seed, t_burnin=100.0, n_samples=2000, threads=threads)
    return [check_sigmas("minimum_particle_identity_minus_speed", c.difference.value, c.difference.std_error, 0.0)]


def _gaussian_field(params, init: InitialMoments, horizon, *, masses=(1.0, 1.0), min_cells=2048):
    grid = hydro.default_grid(params, init, horizon, min_cells=min_cells)
    return hydro.init_field(
        hydro.gaussian_density(init.a1_0, math.sqrt(init.d1_0)),
        hydro.gaussian_density(init.a2_0, math.sqrt(init.d2_0)),
        grid,
        masses=masses,
    )


def criterion_moments(seed: int, threads: int) -> list:
    p = SYMMETRIC
    init = InitialMoments(a1_0=1.0, a2_0=2.0, d1_0=1.0, d2_0=0.5)
    f0 = _gaussian_field(p, init, 20.0)
    worst = 0.0
    for t in (1.0, 5.0, 20.0):
        num = hydro.moments(hydro.spectral_solve(f0, p, t))
        a1, a2 = mean_trajectories(p, init, t)
        d1, d2 = variance_trajectories(p, init, t)
        for x, y in zip(num, (a1, a2, d1, d2)):
            worst = max(worst, abs(x - float(y)) / abs(float(y)))
    a1, a2 = mean_trajectories(p, init, 50.0)
    r1, r2 = mean_ode_rhs(p, a1, a2)
    consts = asymptotic_constants(p)
    return [
        check_below("spectral_vs_closed_form_max_relative_error", worst, 1e-4),
        check_abs("mean_difference_limit_at_50", float(a1 - a2), -consts.gap_inf, 1e-6),
        check_abs("type1_drift_at_50", float(r1), consts.v, 1e-6),
        check_abs("type2_drift_at_50", float(r2), consts.v, 1e-6),
    ]


def criterion_conservation(seed: int, threads: int) -> list:
    p = SYMMETRIC
    grid = hydro.GridSpec(-10.0, 14.0, 2048)
    f0 = hydro.init_field(hydro.gaussian_density(0.0, 1.0), hydro.gaussian_density(0.0, 1.0), grid,
                          masses=(1.0, 0.5))
    c0 = f0.conserved(p)
    diff0 = f0.mass2 - f0.mass1
    checks = []
    solvers = {
        "upwind": lambda t: hydro.fv_solve(f0, p, t, dt=1e-3),
        "spectral": lambda t: hydro.spectral_solve(f0, p, t),
    }
    for name, solve in solvers.items():
        drift = 0.0
        decay = 0.0
        for t in (1.0, 2.0):
            f = solve(t)
            drift = max(drift, abs(f.conserved(p) - c0) / abs(c0))
            ratio = (f.mass2 - f.mass1) / diff0
            decay = max(decay, abs(ratio / math.exp(-p.total_rate * t) - 1.0))
        checks.append(check_below(f"{name}_conserved_relative_drift", drift, 1e-8))
        checks.append(check_below(f"{name}_mass_difference_decay_relative_error", decay, 0.01))
    return checks


def criterion_profile(seed: int, threads: int) -> list:
    p = SYMMETRIC
    init = InitialMoments(0.0, 0.0, 1.0, 1.0)
    f0 = _gaussian_field(p, init, 50.0)
    times = (10.0, 20.0, 50.0)
    dist = []
    for t in times:
        f = hydro.spectral_solve(f0, p, t)
        dist.append(max(hydro.profile_distance(f, 1), hydro.profile_distance(f, 2)))
    growth = max(dist[k + 1] / dist[k] for k in range(len(dist) - 1))
    return [
        check_below("profile_sup_distance_at_50", dist[-1], 0.02),
        Check("profile_distance_step_ratio_max", float(growth), 1.0, 0.1, "measured <= target + tolerance",
              bool(growth <= 1.1)),
    ]


def regime_checks(scan, params: ModelParams) -> list:
    """Collapse, small-s slope, kappa2 stability and plateau checks on a finished scan."""
    n_values = sorted({e[0] for e in scan.entries})
    s_values = sorted({e[1] for e in scan.entries})
    table = {(e[0], e[1]): (e[2], e[3]) for e in scan.entries}
    collapse = 0.0
    for s in s_values:
        vals = np.array([table[(n, s)][0] for n in n_values])
        centre = vals.mean()
        collapse = max(collapse, float(np.max(np.abs(vals - centre)) / abs(centre)))

    largest = scan.for_n(n_values[-1])
    h_free, k_free = fit_regime_free([e[1] for e in largest], [e[2] for e in largest], [e[3] for e in largest])
    h_kappa2 = asymptotic_constants(params).h_kappa2

    kappas = np.array([fit_kappa2(scan.for_n(n), h_kappa2).kappa2 for n in n_values])
    spread = float(np.max(np.abs(kappas - kappas.mean())) / kappas.mean())

    plateau = [e for e in scan.entries if region_of(scan.kappa2_fit, e[1]) == 3]
    if plateau:
        z = max(abs(e[2] - scan.h_fit) / e[3] for e in plateau)
        plateau_check = Check("region3_max_deviation_from_fitted_h", float(z), 0.0, 3.0,
                              "|R/N - h| / std_error <= tolerance", bool(z <= 3.0))
    else:
        plateau_check = Check("region3_max_deviation_from_fitted_h", math.nan, 0.0, 3.0,
                              "no region-3 points on the grid", False)
    return [
        check_below("collapse_max_relative_deviation_across_N", collapse, 0.10),
        check_rel("small_s_slope_h_times_kappa2", h_free * k_free, h_kappa2, 0.10),
        check_below("kappa2_max_relative_spread_across_N", spread, 0.15),
        plateau_check,
    ]


def criterion_regimes(seed: int, threads: int) -> list:
    scan = regime_scan(SYMMETRIC, (50, 100, 200), (0.1, 0.25, 0.5, 1.0, 2.0, 3.0), 64, seed, threads=threads)
    return regime_checks(scan, SYMMETRIC)


def _test_functions():
    return {
        "bump": lambda x: np.exp(-0.5 * (x - 2.5) ** 2),
        "sine": lambda x: np.sin(x),
    }


def criterion_hydrodynamic(seed: int, threads: int) -> list:
    p = SYMMETRIC
    c1 = 0.5
    m1, s1, m2, s2 = 0.0, 1.0, 1.0, 0.5
    t = 5.0
    init = InitialMoments(m1, m2, s1**2, s2**2)
    grid = hydro.default_grid(p, init, t, min_cells=4096)
    f0 = hydro.init_field(hydro.gaussian_density(m1, s1), hydro.gaussian_density(m2, s2), grid,
                          masses=(c1, 1.0 - c1))
    ft = hydro.spectral_solve(f0, p, t)
    phis = _test_functions()
    exact = {k: float(((ft.m1 + ft.m2) * phi(ft.x)).sum() * ft.dx) for k, phi in phis.items()}

    def draw(rng, n1, n2):
        return rng.normal(m1, s1, n1), rng.normal(m2, s2, n2)

    replicas = 40
    n_values = (100, 1000, 10_000)
    errors = {k: [] for k in phis}

    for n in n_values:
        n1, n2 = populations(n, c1)

        def one(r, n1=n1, n2=n2, n=n):
            state = replica_state(p, n1, n2, draw, seed, r, stream=n)
            run_until(state, t)
            x = np.concatenate([state.positions1, state.positions2])
            return [phi(x).sum() / n - exact[k] for k, phi in phis.items()]

        rows = np.array(map_replicas(one, range(replicas), threads))
        for j, k in enumerate(phis):
            errors[k].append(float(np.sqrt(np.mean(rows[:, j] ** 2))))

    checks = []
    for k in phis:
        err = np.array(errors[k])
        worst_step = float(np.max(err[1:] / err[:-1]))
        checks.append(Check(f"{k}_error_ratio_between_successive_N", worst_step, 1.0, 0.0,
                            "measured < target", bool(worst_step < 1.0)))
        scaled = err * np.sqrt(n_values)
        ratio = float(scaled.max() / scaled.min())
        checks.append(Check(f"{k}_sqrtN_scaled_error_max_over_min", ratio, 1.0, 2.0,
                            "measured <= tolerance", bool(ratio <= 2.0)))
    return checks


def criterion_spectral(seed: int, threads: int) -> list:
    rng = np.random.default_rng(seed)
    worst_c2 = 0.0
    worst_c1 = 0.0
    for _ in range(100):
        v1 = rng.uniform(0.0, 2.0)
        p = ModelParams(v1, v1 + rng.uniform(0.05, 3.0), rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0))
        c1, c2, _ = lambda_plus_expansion(p)
        hk = asymptotic_constants(p).h_kappa2
        worst_c2 = max(worst_c2, abs(-2.0 * c2.real - hk) / hk)
        worst_c1 = max(worst_c1, abs(abs(c1.imag) - limiting_velocity(p)))
    return [
        check_below("max_relative_error_minus_2_re_c2_vs_h_kappa2", worst_c2, 1e-5),
        check_below("max_abs_error_abs_im_c1_vs_velocity", worst_c1, 1e-6),
    ]


CRITERIA: dict[int, tuple[str, float, Callable]] = {
    1: ("exponential gap law", 10.0, criterion_gap_law),
    2: ("limiting velocity", 30.0, criterion_velocity),
    3: ("velocity identity with stationary marginals", 60.0, criterion_velocity_identity),
    4: ("mean-field moments", 20.0, criterion_moments),
    5: ("conservation and decay", 20.0, criterion_conservation),
    6: ("gaussian profile", 30.0, criterion_profile),
    7: ("three regimes", 600.0, criterion_regimes),
    8: ("finite-N vs mean-field convergence", 300.0, criterion_hydrodynamic),
    9: ("spectral consistency", 5.0, criterion_spectral),
}
DETERMINISM = 10
ALL_CRITERIA = tuple(sorted(CRITERIA)) + (DETERMINISM,)


def run_criterion(number: int, seed: int, threads: int = 1) -> CriterionResult:
    title, budget, fn = CRITERIA[number]
    start = time.perf_counter()
    try:
        checks = fn(subseed(seed, number), threads)
        error = None
    except Exception as exc:  # reported, and the run continues
        checks, error = [], f"{type(exc).__name__}: {exc}"
    return CriterionResult(number, title, checks, time.perf_counter() - start, budget, error)


def _mutation(mutate: str | None):
    if mutate is None:
        return contextlib.nullcontext()
    if mutate == "exchange-sign":
        return hydro.mutated_exchange_sign()
    raise ValueError(f"unknown mutation {mutate!r}")


def run_suite(numbers=ALL_CRITERIA, seed: int = DEFAULT_SEED, threads: int = 1,
              mutate: str | None = None) -> list:
    """Run the selected criteria in order; the determinism criterion reruns the others."""
    numbers = sorted(set(numbers))
    unknown = [n for n in numbers if n not in ALL_CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}; valid: {list(ALL_CRITERIA)}")
    results = []
    with _mutation(mutate):
        for n in numbers:
            if n != DETERMINISM:
                results.append(run_criterion(n, seed, threads))
        if DETERMINISM in numbers:
            start = time.perf_counter()
            others = [n for n in numbers if n != DETERMINISM] or sorted(CRITERIA)
            first = [r for r in results if r.number in others]
            if not first:
                first = [run_criterion(n, seed, threads) for n in others]
            second = [run_criterion(n, seed, threads) for n in others]
            a = io.dumps([r.to_dict() for r in first]).encode()
            b = io.dumps([r.to_dict() for r in second]).encode()
            same = a == b
            results.append(CriterionResult(
                DETERMINISM, "determinism",
                [Check("rerun_report_bytes_identical", float(same), 1.0, 0.0, "measured == target", same)],
                time.perf_counter() - start, math.inf,
            ))
    return results


def report_dict(results, seed: int, mutate: str | None = None) -> dict:
    return {
        "seed": int(seed),
        "mutation": mutate,
        "passed": all(r.passed for r in results),
        "criteria": [r.to_dict() for r in results],
    }


def timing_dict(results) -> dict:
    return {
        str(r.number): {
            "seconds": round(r.seconds, 3),
            "budget_seconds": r.budget,
            "within_budget": r.seconds <= r.budget,
        }
        for r in results
    }


def format_report(results) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"[{status}] criterion {r.number}: {r.title} ({r.seconds:.1f} s)")
        if r.error:
            lines.append(f"    error: {r.error}")
        for c in r.checks:
            mark = "ok " if c.passed else "BAD"
            lines.append(f"    {mark} {c.name}: measured={c.measured:.6g} target={c.target:.6g} "
                         f"tol={c.tolerance:.3g} ({c.rule})")
    return "\n".join(lines)
