"""Monte Carlo estimators for finite-N observables and the scaled-time fit.

Standard errors are replica-level: every replica is an independent run
keyed by ``(seed, replica id)``, and every estimate is a fold over replicas
in id order, so results do not depend on how replicas were scheduled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import ModelParams, asymptotic_constants
from .sim import default_spacing, map_replicas, replica_state, run_until, simulate_observables


class ConditioningError(RuntimeError):
    """Too few samples in a conditioning class for a reliable conditional mean."""


class FitError(RuntimeError):
    pass


class FlatLikelihoodWarning(UserWarning):
    """The data do not constrain kappa2 (all points in the linear-growth region)."""


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    replicas: int

    @classmethod
    def from_samples(cls, samples) -> "McEstimate":
        x = np.asarray(samples, dtype=float)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        se = float(x.std(ddof=1) / math.sqrt(n)) if n >= 2 else math.nan
        return cls(float(x.mean()), se, n)

    def merge(self, other: "McEstimate") -> "McEstimate":
        """Pool two independent batches as if their replicas had been run together."""
        n1, n2 = self.replicas, other.replicas
        n = n1 + n2
        mean = (n1 * self.value + n2 * other.value) / n
        ss1 = self.std_error**2 * n1 * (n1 - 1) if n1 >= 2 else 0.0
        ss2 = other.std_error**2 * n2 * (n2 - 1) if n2 >= 2 else 0.0
        ss = ss1 + ss2 + (self.value - other.value) ** 2 * n1 * n2 / n
        se = math.sqrt(ss / (n - 1) / n) if n >= 2 else math.nan
        return McEstimate(mean, se, n)

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - target) <= sigmas * self.std_error


@dataclass(frozen=True)
class MomentEstimates:
    mu1: McEstimate
    mu2: McEstimate
    l12: McEstimate
    R1: McEstimate
    R2: McEstimate

    def items(self):
        return [("mu1", self.mu1), ("mu2", self.mu2), ("l12", self.l12), ("R1", self.R1), ("R2", self.R2)]


def moment_estimates_from_observables(obs: np.ndarray) -> MomentEstimates:
    """Fold an ``(replicas, 5)`` observables block into estimates."""
    return MomentEstimates(
        mu1=McEstimate.from_samples(obs[:, 0]),
        mu2=McEstimate.from_samples(obs[:, 1]),
        l12=McEstimate.from_samples(obs[:, 0] - obs[:, 1]),
        R1=McEstimate.from_samples(obs[:, 2]),
        R2=McEstimate.from_samples(obs[:, 3]),
    )


def mc_moments(params: ModelParams, n1: int, n2: int, inits, t: float, replicas: int, seed: int,
               *, replica_ids: Sequence[int] | None = None, threads: int = 1) -> MomentEstimates:
    """Replica averages of the empirical means, their difference and the empirical variances at ``t``.

    ``replica_ids`` overrides ``range(replicas)``; batches over disjoint id
    ranges merge into the full-batch estimate.
    """
    if replica_ids is None:
        if replicas < 2:
            raise ValueError("need at least 2 replicas for a standard error")
        replica_ids = range(replicas)
    obs = simulate_observables(params, n1, n2, inits, [t], seed, replica_ids, threads=threads)
    return moment_estimates_from_observables(obs[:, 0, :])


@dataclass(frozen=True)
class StationaryMarginals:
    """Stationary law of the particle sitting at the global minimum.

    ``q_i`` is the fraction of snapshots whose minimum is a type-``i``
    particle; ``mean_nearest_i`` is the mean distance from the minimum to the
    next particle up, conditioned on that event.  A class with no samples has
    ``q_i = 0`` and ``mean_nearest_i = nan``.
    """

    q1: float
    q2: float
    mean_nearest_1: float
    mean_nearest_2: float
    counts: tuple[int, int] = (0, 0)

    def velocity(self, params: ModelParams) -> float:
        total = 0.0
        if self.q1 > 0:
            total += self.q1 * (params.v1 + params.alpha12 * self.mean_nearest_1)
        if self.q2 > 0:
            total += self.q2 * (params.v2 + params.alpha21 * self.mean_nearest_2)
        return total


_MIN_CLASS = 10


def _min_snapshot(x1: np.ndarray, x2: np.ndarray):
    allx = np.concatenate([x1, x2])
    k = int(np.argmin(allx))  # first occurrence: type 1 before type 2, then lowest index
    kind = 1 if k < x1.size else 2
    lowest = allx[k]
    allx[k] = np.inf
    return kind, float(allx.min() - lowest)


def _stationary_run(params, n1, n2, inits, t_burnin, n_samples, spacing, seed, replica):
    state = replica_state(params, n1, n2, inits, seed, replica)
    run_until(state, t_burnin)
    start = np.concatenate([state.positions1, state.positions2]).mean()
    kinds = np.empty(n_samples, dtype=np.int8)
    gaps = np.empty(n_samples)
    for k in range(n_samples):
        run_until(state, t_burnin + (k + 1) * spacing)
        kinds[k], gaps[k] = _min_snapshot(state.positions1, state.positions2)
    end = np.concatenate([state.positions1, state.positions2]).mean()
    speed = (end - start) / (n_samples * spacing)
    return kinds, gaps, speed


def _marginals_from(kinds, gaps) -> StationaryMarginals:
    n = kinds.size
    c1 = int(np.sum(kinds == 1))
    c2 = n - c1
    means = []
    for kind, count in ((1, c1), (2, c2)):
        if count == 0:
            means.append(math.nan)
        elif count < _MIN_CLASS:
            raise ConditioningError(f"only {count} samples with a type-{kind} particle at the minimum")
        else:
            means.append(float(gaps[kinds == kind].mean()))
    return StationaryMarginals(c1 / n, c2 / n, means[0], means[1], (c1, c2))


def stationary_marginals(params: ModelParams, n1: int, n2: int, t_burnin: float, n_samples: int,
                         spacing: float | None, seed: int, *, inits=None, replica: int = 0) -> StationaryMarginals:
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    if spacing is None:
        spacing = default_spacing(params)
    kinds, gaps, _ = _stationary_run(params, n1, n2, inits, t_burnin, n_samples, spacing, seed, replica)
    return _marginals_from(kinds, gaps)


@dataclass(frozen=True)
class VelocityIdentityCheck:
    identity: McEstimate
    speed: McEstimate
    difference: McEstimate
    marginals: list = field(default_factory=list)


def velocity_identity_check(params: ModelParams, n1: int, n2: int, replicas: int, seed: int, *,
                            t_burnin: float = 100.0, n_samples: int = 2000, spacing: float | None = None,
                            inits=None, threads: int = 1) -> VelocityIdentityCheck:
    """Compare the minimum-particle velocity formula with the measured long-run speed.

    Each replica yields one value of the formula (from its own stationary
    marginals) and one speed (mean displacement over the sampling window).
    Both come from the same path, so the difference is estimated from the
    paired per-replica differences.
    """
    if spacing is None:
        spacing = default_spacing(params)

    def one(r):
        kinds, gaps, speed = _stationary_run(params, n1, n2, inits, t_burnin, n_samples, spacing, seed, r)
        marg = _marginals_from(kinds, gaps)
        return marg, marg.velocity(params), speed

    results = map_replicas(one, range(replicas), threads)
    return VelocityIdentityCheck(
        identity=McEstimate.from_samples([r[1] for r in results]),
        speed=McEstimate.from_samples([r[2] for r in results]),
        difference=McEstimate.from_samples([r[1] - r[2] for r in results]),
        marginals=[r[0] for r in results],
    )


@dataclass(frozen=True)
class DriftCrossCheck:
    """Long-run speed of the one-particle-per-type chain and the two gap readings of it."""

    velocity: McEstimate  # x_bar(T) / T from a common start
    residual1: McEstimate  # speed - (v1 + alpha12 * mean gap)
    residual2: McEstimate  # speed - (v2 - alpha21 * mean gap)


def drift_cross_check(params: ModelParams, horizon: float, replicas: int, seed: int, *, t_burnin: float = 100.0,
                      spacing: float | None = None, threads: int = 1) -> DriftCrossCheck:
    """Per replica: ``x_bar(T)/T``, and the speed over ``[t_burnin, T]`` against the sampled mean gap."""
    params.require_distinct_speeds()
    if spacing is None:
        spacing = default_spacing(params)
    if not horizon > t_burnin:
        raise ValueError("horizon must exceed the burn-in")
    n = int((horizon - t_burnin) / spacing)
    if n < 10:
        raise ValueError("window too short for the requested spacing")

    def one(r):
        state = replica_state(params, 1, 1, None, seed, r)
        run_until(state, t_burnin)
        start = 0.5 * (state.positions1[0] + state.positions2[0])
        gaps = np.empty(n)
        for k in range(n):
            run_until(state, t_burnin + (k + 1) * spacing)
            gaps[k] = state.positions2[0] - state.positions1[0]
        t_win = state.clock
        mid = 0.5 * (state.positions1[0] + state.positions2[0])
        speed = (mid - start) / (t_win - t_burnin)
        run_until(state, horizon)
        xbar = 0.5 * (state.positions1[0] + state.positions2[0])
        g = gaps.mean()
        return xbar / horizon, speed - (params.v1 + params.alpha12 * g), speed - (params.v2 - params.alpha21 * g)

    rows = np.array(map_replicas(one, range(replicas), threads))
    return DriftCrossCheck(*(McEstimate.from_samples(rows[:, k]) for k in range(3)))


def ks_statistic(samples, cdf: Callable) -> float:
    """Sup distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("ks_statistic needs at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


@dataclass
class RegimeScanResult:
    entries: list  # (N, s, R_over_N, std_error)
    kappa2_fit: float
    h_fit: float
    fit_residual: float
    h_kappa2: float

    def for_n(self, n: int):
        return [e for e in self.entries if e[0] == n]


@dataclass(frozen=True)
class Kappa2Fit:
    kappa2: float
    h: float
    residual: float
    history: tuple = ()

    def __iter__(self):
        return iter((self.kappa2, self.h, self.residual))


def _regime_model(s, h_kappa2, kappa2):
    return -h_kappa2 / kappa2 * np.expm1(-kappa2 * s)


def fit_kappa2(scan, h_kappa2: float, *, tol: float = 1e-12, max_iter: int = 500) -> Kappa2Fit:
    """Weighted least-squares fit of ``R/N = h (1 - exp(-kappa2 s))`` with ``h*kappa2`` fixed.

    One free parameter, searched in ``log kappa2``: a log-spaced grid
    brackets the minimum, golden-section search refines it.  Weights are
    inverse squared standard errors (uniform if any error is zero).
    """
    rows = np.asarray([(e[1], e[2], e[3]) for e in scan], dtype=float)
    s, y, se = rows.T
    if np.unique(s).size < 4:
        raise ValueError("need at least 4 distinct s values")
    w = np.ones_like(y) if np.any(se <= 0) else 1.0 / se**2

    def objective(logk):
        return float(np.sum(w * (y - _regime_model(s, h_kappa2, math.exp(logk))) ** 2))

    lo, hi = math.log(1e-3 / s.max()), math.log(1e3 / s[s > 0].min())
    grid = np.linspace(lo, hi, 241)
    values = np.array([objective(g) for g in grid])
    k = int(np.argmin(values))
    if k == len(grid) - 1:
        raise FitError("kappa2 fit ran off the upper end of the search range")
    if k == 0:
        a, b = grid[0], grid[1]
    else:
        a, b = grid[k - 1], grid[k + 1]

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = objective(c), objective(d)
    best = min(values[k], fc, fd)
    history = [best]
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = objective(d)
        best = min(best, fc, fd)
        history.append(best)
    else:
        raise FitError(f"golden-section search did not converge in {max_iter} iterations")

    logk = c if fc < fd else d
    if objective(grid[k]) < min(fc, fd):
        logk = grid[k]
    kappa2 = math.exp(logk)
    if kappa2 * s.max() < 0.1:
        warnings.warn(
            f"kappa2 is not identifiable: kappa2*max(s) = {kappa2 * s.max():.3g}, all points in the linear region",
            FlatLikelihoodWarning,
            stacklevel=2,
        )
    residual = math.sqrt(objective(logk) / y.size)
    return Kappa2Fit(kappa2, h_kappa2 / kappa2, residual, tuple(history))


def fit_regime_free(s, y, se=None):
    """Unconstrained two-parameter fit of ``h (1 - exp(-kappa2 s))``; returns ``(h, kappa2)``.

    Used to read off the small-``s`` slope ``h*kappa2`` independently of the
    model constant.
    """
    from scipy.optimize import curve_fit

    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = None if se is None or np.any(np.asarray(se) <= 0) else np.asarray(se, dtype=float)
    p0 = (float(y.max()), 1.0 / float(np.median(s)))
    (h, kappa2), _ = curve_fit(lambda x, h, k: -h * np.expm1(-k * x), s, y, p0=p0, sigma=sigma,
                               absolute_sigma=sigma is not None, maxfev=20000)
    return float(h), float(kappa2)


def populations(n: int, c1: float) -> tuple[int, int]:
    """``(floor(c1 N), floor(c2 N))``, each at least 1."""
    if not 0 < c1 < 1:
        raise ValueError(f"c1 must lie in (0, 1), got {c1}")
    n1 = int(math.floor(c1 * n))
    n2 = int(math.floor((1.0 - c1) * n + 1e-9))
    if n1 < 1 or n2 < 1:
        raise ValueError(f"N={n} too small for c1={c1}")
    return n1, n2


def region_of(kappa2: float, s: float) -> int:
    """Region label by the artifact's convention: 1 if kappa2*s < 0.1, 3 if > 5, else 2."""
    x = kappa2 * s
    if x < 0.1:
        return 1
    if x > 5.0:
        return 3
    return 2


def regime_scan(params: ModelParams, n_values: Sequence[int], s_values: Sequence[float], replicas: int,
                seed: int, *, c1: float = 0.5, inits=None, threads: int = 1) -> RegimeScanResult:
    """Estimate ``R/N`` on the ``(N, s)`` grid at ``t = s N`` and fit ``kappa2``.

    ``R`` pools both types, ``(S1^2 + S2^2)/2`` per replica.  Each ``N`` uses
    its own random stream; within one ``N`` the replicas run once up to the
    largest time and are read at every ``s N``.
    """
    h_kappa2 = asymptotic_constants(params).h_kappa2
    s_sorted = sorted(float(s) for s in s_values)
    entries = []
    for n in n_values:
        if n < 2:
            raise ValueError("N must be at least 2")
        n1, n2 = populations(n, c1)
        obs = simulate_observables(params, n1, n2, inits, [s * n for s in s_sorted], seed, range(replicas),
                                   threads=threads, stream=n)
        pooled = 0.5 * (obs[:, :, 2] + obs[:, :, 3]) / n
        for k, s in enumerate(s_sorted):
            est = McEstimate.from_samples(pooled[:, k])
            entries.append((int(n), s, est.value, est.std_error))
    fit = fit_kappa2(entries, h_kappa2)
    return RegimeScanResult(entries, fit.kappa2, fit.h, fit.residual, h_kappa2)
