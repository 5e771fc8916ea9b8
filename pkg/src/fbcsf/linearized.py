"""Exactly solvable linear problem used to validate the stepping machinery.

On the fixed interval [0, pi] with homogeneous Neumann ends, the equation
v_t = v_thth + 2v diagonalizes in cosine modes with growth rates 2 - j^2.
No moving boundary here: this isolates the integrator and spectral code
paths from the geometry.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .analysis import cosine_coefficients, fit_rate

PI = math.pi


@dataclass
class LinearState:
    t_tilde: float
    v: np.ndarray

    @property
    def n(self):
        return self.v.size - 1

    def neumann_defect(self):
        """One-sided slope estimates at the two ends (should be ~0)."""
        dth = PI / self.n
        v = self.v
        lo = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dth)
        hi = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dth)
        return lo, hi


def _cn_matrices(n, dt):
    """Banded (I -/+ dt/2 A) for A = D2 + 2 with mirror-ghost Neumann rows."""
    dth = PI / n
    r = 0.5 * dt / (dth * dth)
    lower = np.full(n + 1, -r)
    diag = np.full(n + 1, 1.0 + 2.0 * r - dt)
    upper = np.full(n + 1, -r)
    # ghost folding doubles the single off-diagonal entry in the end rows
    upper[1] = -2.0 * r
    lower[-2] = -2.0 * r
    ab = np.zeros((3, n + 1))
    ab[0, 1:] = upper[1:]
    ab[1] = diag
    ab[2, :-1] = lower[:-1]
    return ab, r


def linear_evolve(state, dt, steps):
    """Crank-Nicolson advance by `steps` increments of dt."""
    n = state.n
    dth = PI / n
    if dt > dth * (1.0 + 1e-12):
        raise ValueError(f"dt={dt:g} exceeds the accuracy budget dth={dth:g}")
    ab, r = _cn_matrices(n, dt)
    v = state.v.astype(float).copy()
    rhs = np.empty_like(v)
    for _ in range(steps):
        rhs[1:-1] = (1.0 - 2.0 * r + dt) * v[1:-1] + r * (v[:-2] + v[2:])
        rhs[0] = (1.0 - 2.0 * r + dt) * v[0] + 2.0 * r * v[1]
        rhs[-1] = (1.0 - 2.0 * r + dt) * v[-1] + 2.0 * r * v[-2]
        v = solve_banded((1, 1), ab, rhs)
    return LinearState(state.t_tilde + steps * dt, v)


def mode_decay_fit(j, horizon, n=256, dt=None, stride=1):
    """Evolve cos(j theta) and fit the amplitude exponent (expected j^2 - 2).

    The grid cosine is an exact eigenvector of the ghost-folded operator,
    so the fit isolates the eigenvalue error of the scheme.
    """
    if j > n // 8:
        raise ValueError(f"mode {j} too high for n={n} (need j <= n/8)")
    dth = PI / n
    if dt is None:
        dt = min(dth, horizon / 64.0)
    steps = max(int(math.ceil(horizon / dt)), 8)
    dt = horizon / steps
    theta = np.linspace(0.0, PI, n + 1)
    state = LinearState(0.0, np.cos(j * theta))
    t_samp = [0.0]
    amp = [1.0]
    for k in range(0, steps, stride):
        m = min(stride, steps - k)
        state = linear_evolve(state, dt, m)
        c, _ = cosine_coefficients(state.v, max(j, 1))
        t_samp.append(state.t_tilde)
        amp.append(abs(c[j]))
    t_samp = np.asarray(t_samp)
    return fit_rate(t_samp, np.asarray(amp), (t_samp[0], t_samp[-1] + 1e-12))


def spectrum_table(modes, horizon, n=256, dt=None):
    """Rows (j, expected, fitted, stderr) for the requested modes."""
    rows = []
    for j in modes:
        fit = mode_decay_fit(int(j), horizon, n=n, dt=dt)
        rows.append((int(j), float(j * j - 2), fit.exponent, fit.stderr))
    return rows
