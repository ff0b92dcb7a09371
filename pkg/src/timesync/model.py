"""Closed-form quantities of the two-type synchronization model.

Everything here is a pure function of a :class:`ModelParams` value: the
limiting drift, the two-particle exponential gap law, the exact solution of
the mean-field moment ODEs, the variance-growth constants, the scaled-time
regime curve and the eigenvalues of the Fourier-space evolution matrix.

Self-jump rates (type 1 -> type 1, type 2 -> type 2) are fixed at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateVelocitiesError(ValueError):
    """Raised when an operation divides by ``v2 - v1`` and the speeds coincide."""


class NumericalInstabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Speeds and cross-type jump rates.

    Type-1 particles jump onto type-2 particles at total rate ``alpha12`` and
    vice versa.  ``v1 <= v2`` is required; ``v1 == v2`` is accepted here but
    rejected by every operation that needs the speed difference.
    """

    v1: float
    v2: float
    alpha12: float
    alpha21: float

    def __post_init__(self):
        for name in ("v1", "v2", "alpha12", "alpha21"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.alpha12 <= 0 or self.alpha21 <= 0:
            raise ValueError(
                f"jump rates must be positive, got alpha12={self.alpha12}, alpha21={self.alpha21}"
            )
        if self.v1 > self.v2:
            raise ValueError(f"expected v1 <= v2, got v1={self.v1}, v2={self.v2}")

    @property
    def total_rate(self) -> float:
        return self.alpha12 + self.alpha21

    @property
    def dv(self) -> float:
        return self.v2 - self.v1

    def require_distinct_speeds(self):
        if self.v2 == self.v1:
            raise DegenerateVelocitiesError("operation undefined for v1 == v2")

    def to_dict(self) -> dict:
        return {"v1": self.v1, "v2": self.v2, "alpha12": self.alpha12, "alpha21": self.alpha21}


@dataclass(frozen=True)
class InitialMoments:
    a1_0: float = 0.0
    a2_0: float = 0.0
    d1_0: float = 0.0
    d2_0: float = 0.0

    def __post_init__(self):
        if self.d1_0 < 0 or self.d2_0 < 0:
            raise ValueError("initial variances must be nonnegative")


@dataclass(frozen=True)
class AsymptoticConstants:
    v: float
    gap_inf: float
    d_slope: float
    d_diff_inf: float
    h_kappa2: float


@dataclass(frozen=True)
class SpectralEigenpair:
    lambda_plus: complex
    lambda_minus: complex
    a_coef: complex
    b_coef: complex


def limiting_velocity(params: ModelParams) -> float:
    """Common asymptotic speed ``(alpha21*v1 + alpha12*v2) / (alpha12 + alpha21)``."""
    p = params
    return (p.alpha21 * p.v1 + p.alpha12 * p.v2) / p.total_rate


def gap_rate(params: ModelParams) -> float:
    """Rate of the stationary exponential law of ``x2 - x1`` for one particle per type."""
    params.require_distinct_speeds()
    return params.total_rate / params.dv


def velocity_consistency_residuals(params: ModelParams) -> tuple[float, float]:
    """Residuals of the two ways of reading the drift off the gap law.

    Particle 1 gains ``alpha12 * E[gap]`` per unit time on top of ``v1``;
    particle 2 loses ``alpha21 * E[gap]``.  Both must reproduce
    :func:`limiting_velocity`.
    """
    mean_gap = 1.0 / gap_rate(params)
    v = limiting_velocity(params)
    return (
        params.v1 + params.alpha12 * mean_gap - v,
        params.v2 - params.alpha21 * mean_gap - v,
    )


def _gap_terms(params: ModelParams, init: InitialMoments, t):
    alpha = params.total_rate
    gap_inf = params.dv / alpha
    delta = (init.a2_0 - init.a1_0) - gap_inf
    decay = np.exp(-alpha * np.asarray(t, dtype=float))
    return alpha, gap_inf, delta, decay


def mean_gap(params: ModelParams, init: InitialMoments, t):
    """``a2(t) - a1(t)``; relaxes exponentially at rate ``alpha12 + alpha21``."""
    _, gap_inf, delta, decay = _gap_terms(params, init, t)
    return gap_inf + delta * decay


def mean_trajectories(params: ModelParams, init: InitialMoments, t):
    """Exact solution ``(a1(t), a2(t))`` of the mean ODEs.

    The rate-weighted centre ``(alpha21*a1 + alpha12*a2)/alpha`` moves at the
    limiting velocity exactly; the gap relaxes exponentially.  ``t`` may be an
    array.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    alpha = params.total_rate
    centre0 = (params.alpha21 * init.a1_0 + params.alpha12 * init.a2_0) / alpha
    centre = centre0 + limiting_velocity(params) * t
    gap = mean_gap(params, init, t)
    a1 = centre - params.alpha12 * gap / alpha
    a2 = centre + params.alpha21 * gap / alpha
    return a1, a2


def _integrated_gap_squared(alpha, gap_inf, delta, t):
    # int_0^t gap(u)^2 du
    return (
        gap_inf**2 * t
        - 2.0 * gap_inf * delta * np.expm1(-alpha * t) / alpha
        - delta**2 * np.expm1(-2.0 * alpha * t) / (2.0 * alpha)
    )


def _relaxed_gap_squared(alpha, gap_inf, delta, t):
    # int_0^t exp(-alpha (t-u)) gap(u)^2 du
    decay = np.exp(-alpha * t)
    return (
        -gap_inf**2 * np.expm1(-alpha * t) / alpha
        + 2.0 * gap_inf * delta * t * decay
        - delta**2 * decay * np.expm1(-alpha * t) / alpha
    )


def variance_trajectories(params: ModelParams, init: InitialMoments, t):
    """Exact solution ``(d1(t), d2(t))`` of the variance ODEs.

    Integrated in the decoupled basis ``S = alpha21*d1 + alpha12*d2`` (pure
    quadrature of the squared mean gap) and ``D = d2 - d1`` (linear relaxation
    forced by the squared gap).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    a12, a21 = params.alpha12, params.alpha21
    alpha, gap_inf, delta, decay = _gap_terms(params, init, t)
    s = a21 * init.d1_0 + a12 * init.d2_0 + 2.0 * a12 * a21 * _integrated_gap_squared(
        alpha, gap_inf, delta, t
    )
    diff = (init.d2_0 - init.d1_0) * decay + (a21 - a12) * _relaxed_gap_squared(
        alpha, gap_inf, delta, t
    )
    d1 = (s - a12 * diff) / alpha
    return d1, d1 + diff


def mean_ode_rhs(params: ModelParams, a1, a2):
    return params.v1 + params.alpha12 * (a2 - a1), params.v2 + params.alpha21 * (a1 - a2)


def variance_ode_rhs(params: ModelParams, d1, d2, gap):
    return (
        params.alpha12 * (d2 - d1) + params.alpha12 * gap**2,
        params.alpha21 * (d1 - d2) + params.alpha21 * gap**2,
    )


def asymptotic_constants(params: ModelParams) -> AsymptoticConstants:
    params.require_distinct_speeds()
    a12, a21, alpha = params.alpha12, params.alpha21, params.total_rate
    gap_inf = params.dv / alpha
    h_kappa2 = 2.0 * a12 * a21 * params.dv**2 / alpha**3
    # d_slope is read off the S-equation; h_kappa2 off the regime formula.
    d_slope = 2.0 * a12 * a21 * gap_inf**2 / alpha
    return AsymptoticConstants(
        v=limiting_velocity(params),
        gap_inf=gap_inf,
        d_slope=d_slope,
        d_diff_inf=gap_inf**2 * (a21 - a12) / alpha,
        h_kappa2=h_kappa2,
    )


def regime_curve(params: ModelParams, kappa2: float, s):
    """Expected empirical variance per particle, ``R/N``, at scaled time ``s = t/N``.

    ``h*(1 - exp(-kappa2*s))`` with ``h*kappa2`` fixed by the model, so the
    small-``s`` slope does not depend on ``kappa2``.
    """
    if not kappa2 > 0:
        raise ValueError(f"kappa2 must be positive, got {kappa2}")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("s must be nonnegative")
    h_kappa2 = asymptotic_constants(params).h_kappa2
    return -h_kappa2 / kappa2 * np.expm1(-kappa2 * s)


def _spectral_coefficients(params: ModelParams, p):
    a = 1j * (params.v1 + params.v2) * p + params.total_rate
    b = -params.v1 * params.v2 * p**2 + 1j * p * (params.v1 * params.alpha21 + params.v2 * params.alpha12)
    return a, b


def eigen_roots(a, b):
    """Both roots of ``lambda^2 + a lambda + b = 0``, elementwise.

    The larger-magnitude root is formed directly and the other through
    ``lambda_1 lambda_2 = b``, avoiding cancellation near ``p = 0``.
    """
    s = np.sqrt(a * a / 4.0 - b)
    big = -a / 2.0 - s
    flip = np.abs(-a / 2.0 + s) > np.abs(big)
    big = np.where(flip, -a / 2.0 + s, big)
    small = np.where(big == 0, 0.0, b / np.where(big == 0, 1.0, big))
    return big, small


def spectral_eigen(params: ModelParams, p):
    """Eigenvalues of the Fourier-mode matrix ``A(p)``.

    ``lambda_plus`` is the slow branch: ``lambda_plus(0) = 0``.  For scalar
    ``p`` it is the root with the larger real part.  For a 1-D array the
    branch is followed by continuity outward from the wavenumber nearest 0,
    which matters only where the two real parts coincide.
    """
    p_arr = np.asarray(p, dtype=float)
    a, b = _spectral_coefficients(params, p_arr)
    big, small = eigen_roots(a, b)
    # root with the larger real part is the slow branch
    swap = small.real < big.real
    lam_p = np.where(swap, big, small)
    lam_m = np.where(swap, small, big)

    if p_arr.ndim == 1 and p_arr.size > 1:
        lam_p, lam_m = _follow_branch(p_arr, lam_p, lam_m)

    if p_arr.ndim == 0:
        return SpectralEigenpair(complex(lam_p), complex(lam_m), complex(a), complex(b))
    return SpectralEigenpair(lam_p, lam_m, a, b)


def _follow_branch(p, lam_p, lam_m):
    lam_p = lam_p.copy()
    lam_m = lam_m.copy()
    order = np.argsort(p)
    start = int(np.argmin(np.abs(p[order])))
    for direction in (range(start + 1, len(order)), range(start - 1, -1, -1)):
        prev = order[start]
        for k in direction:
            idx = order[k]
            if abs(lam_m[idx] - lam_p[prev]) < abs(lam_p[idx] - lam_p[prev]):
                lam_p[idx], lam_m[idx] = lam_m[idx], lam_p[idx]
            prev = idx
    return lam_p, lam_m


_FIT_WAVENUMBERS = np.array([-4e-3, -2e-3, -1e-3, 1e-3, 2e-3, 4e-3])


def lambda_plus_expansion(params: ModelParams, *, tol: float = 1e-8):
    """Small-wavenumber coefficients ``c1, c2`` of ``lambda_plus = c1 p + c2 p^2 + ...``.

    Least-squares fit of the slow eigenvalue on six points in ``|p| <= 4e-3``
    (in units of ``alpha / max|v_i|``, the radius over which the expansion is
    useful) with cubic and quartic terms absorbing the truncation error.
    Returns ``(c1, c2, residual)``.
    """
    params.require_distinct_speeds()
    p = _FIT_WAVENUMBERS * (params.total_rate / max(abs(params.v1), abs(params.v2)))
    lam = spectral_eigen(params, p).lambda_plus
    basis = np.stack([p, p**2, p**3, p**4], axis=1).astype(complex)
    coef, *_ = np.linalg.lstsq(basis, lam, rcond=None)
    scale = max(np.max(np.abs(lam)), 1e-300)
    residual = float(np.max(np.abs(basis @ coef - lam)) / scale)
    if residual > tol:
        raise NumericalInstabilityError(f"expansion fit residual {residual:.3g} exceeds {tol:g}")
    return complex(coef[0]), complex(coef[1]), residual
