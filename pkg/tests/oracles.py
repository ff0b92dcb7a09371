"""Independent reference computations, written without the package's closed forms."""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm


def moment_ode_numeric(v1, v2, a12, a21, a1, a2, d1, d2, t):
    """Integrate the mean and variance ODEs directly with a stiff-safe integrator."""

    def rhs(_, y):
        m1, m2, s1, s2 = y
        gap = m2 - m1
        return [
            v1 + a12 * gap,
            v2 - a21 * gap,
            a12 * (s2 - s1) + a12 * gap**2,
            a21 * (s1 - s2) + a21 * gap**2,
        ]

    sol = solve_ivp(rhs, (0.0, t), [a1, a2, d1, d2], method="DOP853", rtol=1e-12, atol=1e-13)
    return sol.y[:, -1]


def finite_n_second_moments(v1, v2, a12, a21, n1, n2, t, x1=0.0, x2=0.0):
    """Exact expected empirical moments of the finite particle system started from two clusters.

    The generator closes on the state (mu1, mu2, P11, Q11, P22, Q22, C12, 1):
    mu_i = E x_i, P_ii = E x_i^2 (same particle), Q_ii = E x_i x_i' (distinct
    particles of one type), C12 = E x_1 x_2.  Returns ``(E mean1, E mean2, E R1, E R2)``
    with ``R_i`` the divisor-``N_i`` empirical variance.
    """
    a = np.zeros((8, 8))
    a[0, [0, 1, 7]] = [-a12, a12, v1]
    a[1, [0, 1, 7]] = [a21, -a21, v2]
    a[2, 0] += 2 * v1
    a[2, 4] += a12
    a[2, 2] -= a12
    a[3, 0] += 2 * v1
    a[3, 6] += 2 * a12
    a[3, 3] -= 2 * a12
    a[4, 1] += 2 * v2
    a[4, 2] += a21
    a[4, 4] -= a21
    a[5, 1] += 2 * v2
    a[5, 6] += 2 * a21
    a[5, 5] -= 2 * a21
    a[6, 1] += v1
    a[6, 0] += v2
    a[6, 4] += a12 / n2
    a[6, 5] += a12 * (n2 - 1) / n2
    a[6, 6] -= a12
    a[6, 2] += a21 / n1
    a[6, 3] += a21 * (n1 - 1) / n1
    a[6, 6] -= a21
    y0 = np.array([x1, x2, x1 * x1, x1 * x1, x2 * x2, x2 * x2, x1 * x2, 1.0])
    y = expm(a * t) @ y0
    r1 = (1 - 1 / n1) * (y[2] - y[3])
    r2 = (1 - 1 / n2) * (y[4] - y[5])
    return y[0], y[1], r1, r2
