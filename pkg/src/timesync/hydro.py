"""Mean-field transport-exchange system for the two densities.

    dm1/dt + v1 dm1/dx = alpha12 (m2 - m1)
    dm2/dt + v2 dm2/dx = alpha21 (m1 - m2)

Two independent solvers: an exact per-mode matrix exponential on a periodic
Fourier grid, and a first-order upwind finite-volume scheme with an open
outflow boundary.  Fields hold midpoint values of each density on a uniform
grid of cell centres ``x_min + (j + 1/2) dx``.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .model import InitialMoments, ModelParams, eigen_roots, variance_trajectories


class CFLError(ValueError):
    pass


class AliasingError(RuntimeError):
    pass


class OutflowError(RuntimeError):
    pass


class TailError(ValueError):
    pass


_IMAG_DISCARD = 1e-10
_IMAG_FAIL = 1e-8
_OUTFLOW_TOL = 1e-6

# Mutation-testing hook: sign applied to the species-1 exchange term.
_exchange_sign1 = 1.0


@contextlib.contextmanager
def mutated_exchange_sign():
    """Flip the sign of the species-1 exchange term inside the block (for mutation tests)."""
    global _exchange_sign1
    old = _exchange_sign1
    _exchange_sign1 = -1.0
    try:
        yield
    finally:
        _exchange_sign1 = old


@dataclass(frozen=True)
class Field:
    x_min: float
    dx: float
    m1: np.ndarray
    m2: np.ndarray
    t: float = 0.0
    outflow1: float = 0.0
    outflow2: float = 0.0

    def __post_init__(self):
        if self.m1.shape != self.m2.shape or self.m1.ndim != 1:
            raise ValueError("m1 and m2 must be 1-D arrays of equal length")
        if self.m1.size < 8:
            raise ValueError("need at least 8 cells")
        if not self.dx > 0:
            raise ValueError("dx must be positive")

    @property
    def cells(self) -> int:
        return self.m1.size

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.cells) + 0.5) * self.dx

    @property
    def x_max(self) -> float:
        return self.x_min + self.cells * self.dx

    @property
    def mass1(self) -> float:
        return float(self.m1.sum() * self.dx)

    @property
    def mass2(self) -> float:
        return float(self.m2.sum() * self.dx)

    def conserved(self, params: ModelParams) -> float:
        """``alpha21 M1 + alpha12 M2`` including mass that has left the grid."""
        return params.alpha21 * (self.mass1 + self.outflow1) + params.alpha12 * (self.mass2 + self.outflow2)


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    cells: int

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.cells


def gaussian_density(mean: float, std: float) -> Callable:
    def density(x):
        z = (np.asarray(x, dtype=float) - mean) / std
        return np.exp(-0.5 * z * z) / (std * math.sqrt(2.0 * math.pi))

    return density


def init_field(density1: Callable, density2: Callable, grid: GridSpec, *, masses=(1.0, 1.0),
               tail_tol: float = 1e-8) -> Field:
    """Sample both densities at cell centres and rescale each to its target mass."""
    x = grid.x_min + (np.arange(grid.cells) + 0.5) * grid.dx
    out = []
    for k, (density, mass) in enumerate(zip((density1, density2), masses), start=1):
        m = np.asarray(density(x), dtype=float)
        if np.any(m < 0):
            raise ValueError(f"density {k} is negative on the grid")
        total = m.sum() * grid.dx
        if not total > 0:
            raise ValueError(f"density {k} has no mass on the grid")
        tail = integrate.quad(density, -np.inf, grid.x_min)[0] + integrate.quad(density, grid.x_max, np.inf)[0]
        if tail > tail_tol * total:
            raise TailError(f"density {k} puts mass {tail:.3g} outside [{grid.x_min}, {grid.x_max}]")
        out.append(m * (mass / total))
    return Field(grid.x_min, grid.dx, out[0], out[1])


def _check_step(params: ModelParams, dx: float, dt: float):
    vmax = max(abs(params.v1), abs(params.v2))
    if vmax * dt > dx * (1.0 + 1e-12):
        raise CFLError(f"CFL violated: max|v|*dt = {vmax * dt:.3g} > dx = {dx:.3g}; reduce dt or refine less")
    if dt * params.total_rate > 0.5 * (1.0 + 1e-12):
        raise CFLError(f"exchange step too large: dt*(alpha12+alpha21) = {dt * params.total_rate:.3g} > 0.5")


def _upwind(m: np.ndarray, v: float, courant: float):
    """Advected values and the mass fraction leaving through the downstream edge."""
    if v >= 0:
        new = m * (1.0 - courant)
        new[1:] += courant * m[:-1]
        return new, courant * m[-1]
    new = m * (1.0 - courant)
    new[:-1] += courant * m[1:]
    return new, courant * m[0]


def fv_step(field: Field, params: ModelParams, dt: float) -> Field:
    """One explicit upwind step with the exchange term from the old state."""
    _check_step(params, field.dx, dt)
    m1, m2 = field.m1, field.m2
    a1, out1 = _upwind(m1, params.v1, abs(params.v1) * dt / field.dx)
    a2, out2 = _upwind(m2, params.v2, abs(params.v2) * dt / field.dx)
    exch = m2 - m1
    new1 = a1 + _exchange_sign1 * dt * params.alpha12 * exch
    new2 = a2 - dt * params.alpha21 * exch
    return Field(
        field.x_min, field.dx, new1, new2, field.t + dt,
        field.outflow1 + out1 * field.dx, field.outflow2 + out2 * field.dx,
    )


def fv_solve(field0: Field, params: ModelParams, t: float, *, cfl: float = 0.5, dt: float | None = None) -> Field:
    """Advance by ``t`` with equal steps no larger than the CFL-limited one."""
    vmax = max(abs(params.v1), abs(params.v2))
    limit = min(cfl * field0.dx / vmax if vmax > 0 else math.inf, 0.5 / params.total_rate)
    if dt is None:
        dt = limit
    steps = max(1, math.ceil(t / dt - 1e-12))
    dt = t / steps
    field = field0
    for _ in range(steps):
        field = fv_step(field, params, dt)
    return replace(field, t=field0.t + t)


def _wavenumbers(field: Field) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(field.cells, d=field.dx)


def mode_propagator(params: ModelParams, p: np.ndarray, t: float, *, exchange: bool = True):
    """Entries ``(e11, e12, e21, e22)`` of ``exp(t A(p))`` for each wavenumber.

    Built from the two eigenvalues and the spectral projectors; where the
    eigenvalues nearly coincide a series form of the same exponential is
    used instead.
    """
    p = np.asarray(p, dtype=float)
    a12 = params.alpha12 if exchange else 0.0
    a21 = params.alpha21 if exchange else 0.0
    s1 = _exchange_sign1
    A11 = -1j * params.v1 * p - s1 * a12
    A12 = s1 * a12 + 0j * p
    A21 = a21 + 0j * p
    A22 = -1j * params.v2 * p - a21
    a = -(A11 + A22)
    b = A11 * A22 - A12 * A21
    lam1, lam2 = eigen_roots(a, b)
    gap = lam1 - lam2
    scale = np.maximum(np.abs(lam1), np.abs(lam2))
    degenerate = np.abs(gap) <= 1e-8 * np.where(scale > 0, scale, 1.0)

    safe_gap = np.where(degenerate, 1.0, gap)
    e1 = np.exp(t * lam1)
    e2 = np.exp(t * lam2)
    # exp(tA) = e1 (A - lam2)/(lam1 - lam2) + e2 (A - lam1)/(lam2 - lam1)
    c0 = (e1 * (-lam2) - e2 * (-lam1)) / safe_gap
    c1 = (e1 - e2) / safe_gap

    if np.any(degenerate):
        # exp(tA) = exp(t mu) [cosh(t delta) I + t sinhc(t delta) (A - mu I)]
        mu = -a / 2.0
        z2 = t * t * (a * a / 4.0 - b)
        cosh_ = 1.0 + z2 / 2.0 + z2 * z2 / 24.0 + z2**3 / 720.0
        sinhc = 1.0 + z2 / 6.0 + z2 * z2 / 120.0 + z2**3 / 5040.0
        em = np.exp(t * mu)
        c1_deg = em * t * sinhc
        c0_deg = em * cosh_ - c1_deg * mu
        c0 = np.where(degenerate, c0_deg, c0)
        c1 = np.where(degenerate, c1_deg, c1)

    return c0 + c1 * A11, c1 * A12, c1 * A21, c0 + c1 * A22


def spectral_solve(field0: Field, params: ModelParams, t: float, *, exchange: bool = True) -> Field:
    """Exact evolution of every discrete Fourier mode of ``field0`` over time ``t``.

    The grid is treated as periodic; keep the support well inside it.
    ``exchange=False`` zeroes both jump rates (pure transport, test hook).
    """
    n = field0.cells
    if n & (n - 1):
        raise ValueError(f"spectral solver needs a power-of-two grid, got {n} cells")
    g1 = np.fft.fft(field0.m1)
    g2 = np.fft.fft(field0.m2)
    p = _wavenumbers(field0)
    e11, e12, e21, e22 = mode_propagator(params, p, t, exchange=exchange)
    h1 = np.fft.ifft(e11 * g1 + e12 * g2)
    h2 = np.fft.ifft(e21 * g1 + e22 * g2)
    scale = max(np.max(np.abs(h1.real)), np.max(np.abs(h2.real)), 1e-300)
    residue = max(np.max(np.abs(h1.imag)), np.max(np.abs(h2.imag))) / scale
    if residue > _IMAG_FAIL:
        raise AliasingError(
            f"imaginary residue {residue:.3g} after inverse transform: grid too coarse, refine dx"
        )
    return Field(field0.x_min, field0.dx, h1.real.copy(), h2.real.copy(), field0.t + t,
                 field0.outflow1, field0.outflow2)


def moments(field: Field):
    """Per-species mean and centred second moment, each normalised by the species mass."""
    if field.outflow1 > _OUTFLOW_TOL or field.outflow2 > _OUTFLOW_TOL:
        raise OutflowError(
            f"mass left the grid (outflow {field.outflow1:.3g}, {field.outflow2:.3g}); moments unreliable"
        )
    x = field.x
    out = []
    for m in (field.m1, field.m2):
        mass = m.sum()
        a = float((x * m).sum() / mass)
        d = float(((x - a) ** 2 * m).sum() / mass)
        out.append((a, d))
    (a1, d1), (a2, d2) = out
    return a1, a2, d1, d2


def initial_moments(field: Field) -> InitialMoments:
    a1, a2, d1, d2 = moments(field)
    return InitialMoments(a1, a2, d1, d2)


def rescaled_profile(field: Field, species: int, u) -> np.ndarray:
    """Density of species ``i`` in standard units: ``sqrt(d) m(a + u sqrt(d)) / M``."""
    a1, a2, d1, d2 = moments(field)
    a, d, m, mass = {1: (a1, d1, field.m1, field.mass1), 2: (a2, d2, field.m2, field.mass2)}[species]
    if not d > 0:
        raise ValueError("variance must be positive")
    u = np.asarray(u, dtype=float)
    xs = a + u * math.sqrt(d)
    x = field.x
    if np.any(xs < x[0]) or np.any(xs > x[-1]):
        raise ValueError("sample point outside the grid")
    return math.sqrt(d) * np.interp(xs, x, m) / mass


def standard_normal(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def profile_distance(field: Field, species: int, u=None) -> float:
    if u is None:
        u = np.linspace(-4.0, 4.0, 801)
    return float(np.max(np.abs(rescaled_profile(field, species, u) - standard_normal(u))))


def l1_distance(f: Field, g: Field) -> float:
    if f.cells != g.cells or f.dx != g.dx:
        raise ValueError("fields live on different grids")
    return float((np.abs(f.m1 - g.m1).sum() + np.abs(f.m2 - g.m2).sum()) * f.dx)


def default_grid(params: ModelParams, init: InitialMoments, horizon: float, *, min_cells: int = 2048,
                 min_width: float = 0.0) -> GridSpec:
    """Domain ``[lowest start - L, highest start + v2 T + L]`` with ``L = 10 sqrt(d_max(T))``.

    ``cells`` is the smallest power of two that is at least ``min_cells``.
    """
    d1, d2 = variance_trajectories(params, init, horizon)
    d_max = max(float(d1), float(d2), init.d1_0, init.d2_0, 1e-12)
    half = max(10.0 * math.sqrt(d_max), min_width)
    lo = min(init.a1_0, init.a2_0) + min(params.v1, 0.0) * horizon - half
    hi = max(init.a1_0, init.a2_0) + max(params.v2, 0.0) * horizon + half
    cells = 1 << max(3, math.ceil(math.log2(min_cells)))
    return GridSpec(lo, hi, cells)


def edge_mass(field: Field, fraction: float = 0.02) -> float:
    """Mass in the outer ``fraction`` of cells on either side (wrap-around indicator for the spectral grid)."""
    k = max(1, int(fraction * field.cells))
    return float((field.m1[:k].sum() + field.m1[-k:].sum() + field.m2[:k].sum() + field.m2[-k:].sum()) * field.dx)
