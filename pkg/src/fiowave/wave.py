"""Closed-form wave-equation operators, the package-wide oracle.

For d_t^2 u - Lap u = f the solution operators are Fourier multipliers:

    u(t) = cos(t|D|) u0 + (sin(t|D|)/|D|) u1 + int_0^t sin((t-s)|D|)/|D| f(s) ds,

with the zero mode of sin(tau |xi|)/|xi| extended continuously to tau.
These are written down directly from the multiplication formulas, never
through the generic pipeline, so pipeline defects cannot hide here.
"""

from __future__ import annotations

import numpy as np

from .errors import HorizonError
from .grid import Field, Grid, forward_ft, inverse_ft
from .quadrature import CompositeGL


def _norm(xi):
    return np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in xi))


def fundamental_ft(tau, xi):
    """sin(tau |xi|) / |xi| with the continuity value tau at xi = 0.

    `xi` is a tuple of coordinate arrays (or a bare array in d = 1).
    """
    if not isinstance(xi, tuple):
        xi = (xi,)
    r = _norm(xi)
    safe = np.where(r == 0.0, 1.0, r)
    return np.where(r == 0.0, tau, np.sin(tau * safe) / safe)


def cosine_ft(tau, xi):
    """cos(tau |xi|)."""
    if not isinstance(xi, tuple):
        xi = (xi,)
    return np.cos(tau * _norm(xi))


class WaveOracle:
    """Multiplier solution operators of the constant wave equation."""

    orders = (0.0, -1.0)
    source_order = -1.0
    horizon = np.inf

    def __init__(self, grid: Grid):
        self.grid = grid
        self.n = 2

    def _mult(self, vals, f: Field) -> Field:
        spec = forward_ft(f)
        return inverse_ft(Field(self.grid, np.broadcast_to(vals, self.grid.shape)
                                * spec.values, "spectral"))

    def apply_t0(self, u0: Field, t: float) -> Field:
        return self._mult(cosine_ft(t, self.grid.xi_mesh()), u0)

    def apply_t1(self, u1: Field, t: float) -> Field:
        return self._mult(fundamental_ft(t, self.grid.xi_mesh()), u1)

    def apply_initial(self, u0: Field, u1, t: float) -> Field:
        u1 = u1[0] if isinstance(u1, (list, tuple)) else u1
        out = self.apply_t0(u0, t).values + self.apply_t1(u1, t).values
        return Field(self.grid, out)

    def apply_source(self, f: Field, t: float, s: float) -> Field:
        if t < s:
            raise HorizonError("source operator needs t >= s")
        return self._mult(fundamental_ft(t - s, self.grid.xi_mesh()), f)

    def source_symbol(self, t: float, s: float, xi) -> np.ndarray:
        return fundamental_ft(t - s, xi) + 0j

    def initial_symbols(self, t: float, xi) -> np.ndarray:
        return np.stack([cosine_ft(t, xi) + 0j, fundamental_ft(t, xi) + 0j])

    def kernel_ft(self, x_point, eta, t: float, s: float) -> complex:
        dot = sum(float(xc) * float(ec) for xc, ec in
                  zip(np.atleast_1d(x_point), np.atleast_1d(eta)))
        m_eta = tuple(np.asarray([-float(c)]) for c in np.atleast_1d(eta))
        return complex(np.exp(-1j * dot) * fundamental_ft(t - s, m_eta)[0])

    def energy(self, u0: Field, u1: Field, t: float) -> float:
        """|d_t u|^2 + |grad u|^2 in the lattice L2 measure at time t."""
        g = self.grid
        xi = g.xi_mesh()
        r = _norm(xi)
        u0s, u1s = forward_ft(u0).values, forward_ft(u1).values
        ut = -np.sin(t * r) * r * u0s + np.cos(t * r) * u1s
        gu = 1j * r * (np.cos(t * r) * u0s + fundamental_ft(t, xi) * u1s)
        w = g.cell_volume_xi() / (2 * np.pi) ** g.dim
        return float(np.sum(np.abs(ut) ** 2 + np.abs(gu) ** 2) * w)


def wave_ops(grid_or_dim, t: float | None = None, s: float = 0.0,
             length: float = 20 * np.pi, points: int = 256) -> WaveOracle:
    """Oracle operators on a grid (dimension shortcut builds a default
    grid); t and s are accepted for interface symmetry but the oracle is
    valid at all times."""
    if isinstance(grid_or_dim, Grid):
        return WaveOracle(grid_or_dim)
    return WaveOracle(Grid(dim=int(grid_or_dim), length=length, points=points))


def dalembert_solution(grid: Grid, t: float, u0_fn=None, u1_fn=None) -> Field:
    """Spectral evaluation of the homogeneous wave evolution used as an
    independent reference in tests."""
    oracle = WaveOracle(grid)
    zero = Field(grid, np.zeros(grid.shape, complex))
    from .grid import sample

    u0 = sample(grid, u0_fn) if u0_fn else zero
    u1 = sample(grid, u1_fn) if u1_fn else zero
    return oracle.apply_initial(u0, u1, t)
