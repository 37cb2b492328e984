"""Phase functions for Fourier integral operators.

A phase is a real map (t, s, x, xi), positively homogeneous of degree
one in xi, equal to x.xi at t = s.  The closed-form family here covers
x-linear phases x.xi + psi(t, s, xi), which includes every
pseudo-differential phase (psi = 0), the wave phases x.xi -+ (t-s)|xi|,
and the general x-independent-root case with psi obtained by quadrature
of the root in time.  Phases built from bicharacteristic rays live in
the eikonal module and implement the same interface.
"""

from __future__ import annotations

import numpy as np

from .quadrature import gauss_legendre
from .symbols import Symbol, _as_tuple


class PhaseFunction:
    """Interface shared by all phases.

    Subclasses provide value/gradients/time derivative; x and xi are
    tuples of broadcastable coordinate arrays as for symbols.
    """

    dim: int
    horizon: float = np.inf
    tag: str = "closed-form"

    def value(self, t, s, x, xi):
        raise NotImplementedError

    def grad_x(self, t, s, x, xi):
        raise NotImplementedError

    def grad_xi(self, t, s, x, xi):
        raise NotImplementedError

    def hess_xx(self, t, s, x, xi):
        raise NotImplementedError

    def hess_xixi(self, t, s, x, xi):
        raise NotImplementedError

    def dt(self, t, s, x, xi):
        raise NotImplementedError

    @property
    def is_x_linear(self):
        """True when phi = x.xi + psi(t, s, xi) (multiplier-compatible)."""
        return False

    def __call__(self, t, s, x, xi):
        return self.value(t, s, x, xi)


def _dot(x, xi):
    out = None
    for c, k in zip(x, xi):
        term = np.asarray(c) * np.asarray(k)
        out = term if out is None else out + term
    return out


class XLinearPhase(PhaseFunction):
    """phi(t, s, x, xi) = x.xi + psi(t, s, xi).

    psi and its xi-derivatives come from callables; missing derivative
    callables fall back to centered differences with <xi>-scaled steps.
    """

    tag = "closed-form"

    def __init__(self, dim, psi=None, dpsi_dxi=None, hess_psi=None, dpsi_dt=None,
                 horizon=np.inf, name=""):
        self.dim = dim
        self._psi = psi
        self._dpsi_dxi = dpsi_dxi
        self._hess_psi = hess_psi
        self._dpsi_dt = dpsi_dt
        self.horizon = horizon
        self.name = name

    @property
    def is_x_linear(self):
        return True

    def psi(self, t, s, xi):
        if self._psi is None:
            zero = sum(np.asarray(c) * 0.0 for c in xi)
            return zero
        return self._psi(t, s, _as_tuple(xi, self.dim))

    def value(self, t, s, x, xi):
        x = _as_tuple(x, self.dim)
        xi = _as_tuple(xi, self.dim)
        return _dot(x, xi) + self.psi(t, s, xi)

    def grad_x(self, t, s, x, xi):
        xi = _as_tuple(xi, self.dim)
        x = _as_tuple(x, self.dim)
        shape = np.broadcast_shapes(*(np.shape(c) for c in x + xi))
        return tuple(np.broadcast_to(np.asarray(k, dtype=float), shape) for k in xi)

    def _psi_grad(self, t, s, xi):
        if self._dpsi_dxi is not None:
            return self._dpsi_dxi(t, s, xi)
        from .grid import japanese_bracket

        out = []
        step = 1e-5 * japanese_bracket(xi)
        for j in range(self.dim):
            def shifted(delta, j=j):
                z = list(xi)
                z[j] = z[j] + delta
                return self.psi(t, s, tuple(z))

            out.append((shifted(step) - shifted(-step)) / (2 * step))
        return tuple(out)

    def grad_xi(self, t, s, x, xi):
        x = _as_tuple(x, self.dim)
        xi = _as_tuple(xi, self.dim)
        g = self._psi_grad(t, s, xi)
        shape = np.broadcast_shapes(*(np.shape(c) for c in x + xi))
        return tuple(
            np.broadcast_to(np.asarray(c, dtype=float) + gj, shape) for c, gj in zip(x, g)
        )

    def hess_xx(self, t, s, x, xi):
        x = _as_tuple(x, self.dim)
        xi = _as_tuple(xi, self.dim)
        shape = np.broadcast_shapes(*(np.shape(c) for c in x + xi))
        zero = np.zeros(shape)
        return [[zero for _ in range(self.dim)] for _ in range(self.dim)]

    def hess_xixi(self, t, s, x, xi):
        xi = _as_tuple(xi, self.dim)
        if self._hess_psi is not None:
            return self._hess_psi(t, s, xi)
        from .grid import japanese_bracket

        step = 1e-4 * japanese_bracket(xi)
        out = [[None] * self.dim for _ in range(self.dim)]
        for j in range(self.dim):
            for k in range(self.dim):
                def at(dj, dk, j=j, k=k):
                    z = list(xi)
                    z[j] = z[j] + dj
                    if j == k:
                        return self.psi(t, s, tuple(z))
                    z[k] = z[k] + dk
                    return self.psi(t, s, tuple(z))

                if j == k:
                    val = (at(step, 0) - 2 * self.psi(t, s, tuple(xi)) + at(-step, 0)) / step**2
                else:
                    val = (at(step, step) - at(step, -step) - at(-step, step) + at(-step, -step)) / (
                        4 * step**2
                    )
                out[j][k] = val
        return out

    def dt(self, t, s, x, xi):
        xi = _as_tuple(xi, self.dim)
        if self._dpsi_dt is not None:
            return self._dpsi_dt(t, s, xi)
        dt = 1e-5
        return (self.psi(t + dt, s, xi) - self.psi(t - dt, s, xi)) / (2 * dt)


def pdo_phase(dim) -> XLinearPhase:
    """The pseudo-differential phase x.xi."""
    ph = XLinearPhase(dim, name="x.xi")
    ph.is_pdo = True
    return ph


def quadrature_phase(root: Symbol, dim, n_panels=24, n_nodes=8, name="") -> XLinearPhase:
    """Phase for an x-independent root: psi(t, s, xi) = -int_s^t root dtheta.

    Solves the eikonal equation exactly for x-independent symbols since
    grad_x phi = xi there.  Panel quadrature is cached per time pair.
    """
    cache = {}

    def psi(t, s, xi):
        key = (float(t), float(s))
        if key not in cache:
            nodes, weights = [], []
            edges = np.linspace(s, t, n_panels + 1)
            for p in range(n_panels):
                ns, ws = gauss_legendre(n_nodes, edges[p], edges[p + 1])
                nodes.extend(ns)
                weights.extend(ws)
            cache[key] = (np.asarray(nodes), np.asarray(weights))
        nodes, weights = cache[key]
        acc = None
        for theta, w in zip(nodes, weights):
            term = w * np.real(root.eval(theta, (np.zeros(1),) * dim, xi))
            acc = term if acc is None else acc + term
        if acc is None:
            acc = sum(np.asarray(c) * 0.0 for c in xi)
        return -acc

    def dpsi_dt(t, s, xi):
        return -np.real(root.eval(t, (np.zeros(1),) * dim, xi))

    return XLinearPhase(dim, psi=psi, dpsi_dt=dpsi_dt, name=name or f"phase({root.name})")


def wave_phase(dim, sign: int) -> XLinearPhase:
    """x.xi - sign (t - s) |xi|, the classical wave phases (sign = +1
    belongs to the root +|xi|)."""

    def norm(xi):
        return np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in xi))

    def psi(t, s, xi):
        return -sign * (t - s) * norm(xi)

    def dpsi_dxi(t, s, xi):
        n = norm(xi)
        safe = np.where(n == 0, 1.0, n)
        return tuple(-sign * (t - s) * np.asarray(c) / safe for c in xi)

    def hess_psi(t, s, xi):
        n = norm(xi)
        safe = np.where(n == 0, 1.0, n)
        out = []
        for j in range(dim):
            row = []
            for k in range(dim):
                delta = 1.0 if j == k else 0.0
                row.append(
                    -sign
                    * (t - s)
                    * (delta / safe - np.asarray(xi[j]) * np.asarray(xi[k]) / safe**3)
                )
            out.append(row)
        return out

    def dpsi_dt(t, s, xi):
        return -sign * norm(xi)

    return XLinearPhase(
        dim, psi=psi, dpsi_dxi=dpsi_dxi, hess_psi=hess_psi, dpsi_dt=dpsi_dt,
        name=f"wave{'+' if sign > 0 else '-'}",
    )
