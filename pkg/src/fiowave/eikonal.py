"""Eikonal (Hamilton-Jacobi) solver for FIO phases.

For a real root lambda(t, x, xi), positively homogeneous of degree one
in xi, the phase phi(t, s, x, xi) solves

    d_t phi + lambda(t, x, grad_x phi) = 0,     phi(s, s, x, xi) = x.xi.

x-independent roots have the closed solution x.xi - int_s^t lambda and
are handled by the quadrature phase.  Otherwise (d = 1) the phase is
built by integrating the bicharacteristic system

    x' = d_xi lambda,   p' = -d_x lambda,   phi' = p d_xi lambda - lambda

with a fixed-step RK4 from an oversampled bundle of ray starts, then
interpolating the periodic correction w = phi - x.xi back to the
lattice with a periodic cubic spline.  Homogeneity is exploited: rays
are integrated only for unit directions and extended radially.

Ray crossing is monitored through the ray-map Jacobian; the first time
it drops below the configured floor defines the returned validity
horizon (the construction itself never asserts a horizon size).
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CausticWarning, HorizonError
from .grid import Grid, spectral_derivative
from .phases import PhaseFunction, quadrature_phase
from .symbols import Symbol


def _rk4_rays(root: Symbol, direction: float, x0, t_from: float, t_to: float,
              n_steps: int, snapshots=None):
    """Integrate the d = 1 bicharacteristic bundle from t_from to t_to.

    Returns (state, min_jac, taken) where state = (x, p, w) at t_to with
    w = phi - x.xi at |xi| = 1, min_jac is the running minimum of the
    ray-map Jacobian, and taken maps each requested snapshot time to its
    state (one integration serves every endpoint along the way).
    """
    x = np.array(x0, dtype=float)
    p = np.full_like(x, float(direction))
    w = np.zeros_like(x)
    dx0 = x0[1] - x0[0]
    min_jac = 1.0
    snapshots = sorted(set(snapshots or []))
    taken = {}

    def rhs(t, state):
        xs, ps, _ = state
        lam = np.real(root.eval(t, (xs,), (ps,)))
        lam_p = np.real(root.derivative(t, (xs,), (ps,), None, (1,)))
        lam_x = np.real(root.derivative(t, (xs,), (ps,), (1,), None))
        return (lam_p, -lam_x, ps * lam_p - lam - lam_p * direction)

    def advance(state, a, b, steps):
        nonlocal min_jac
        dt = (b - a) / steps
        for i in range(steps):
            t = a + i * dt
            k1 = rhs(t, state)
            k2 = rhs(t + dt / 2, tuple(s + dt / 2 * k for s, k in zip(state, k1)))
            k3 = rhs(t + dt / 2, tuple(s + dt / 2 * k for s, k in zip(state, k2)))
            k4 = rhs(t + dt, tuple(s + dt * k for s, k in zip(state, k3)))
            state = tuple(
                s + dt / 6 * (ka + 2 * kb + 2 * kc + kd)
                for s, ka, kb, kc, kd in zip(state, k1, k2, k3, k4)
            )
            jac = np.gradient(state[0]) / dx0
            min_jac = min(min_jac, float(np.min(jac)))
        return state

    state = (x, p, w)
    span = abs(t_to - t_from)
    forward = t_to >= t_from
    cur = t_from
    inside = [tq for tq in snapshots
              if (t_from < tq < t_to) or (t_to < tq < t_from)]
    marks = sorted(inside, reverse=not forward) + [t_to]
    for mark in marks:
        seg = abs(mark - cur)
        if seg > 0:
            steps = max(2, int(np.ceil(n_steps * seg / span))) if span > 0 else 2
            state = advance(state, cur, mark, steps)
            cur = mark
        taken[mark] = state
    return state, min_jac, taken


class CharacteristicsPhase(PhaseFunction):
    """Ray-built phase for a d = 1 root with spatial dependence.

    Lattice tables of the periodic correction w and its derivatives are
    built lazily per requested (t, s) pair and cached; evaluation off
    the lattice goes through the periodic spline.
    """

    tag = "characteristics"

    def __init__(self, grid: Grid, root: Symbol, horizon: float,
                 n_steps: int = 200, oversample: int = 4,
                 jacobian_floor: float = 0.1):
        if grid.dim != 1:
            raise NotImplementedError(
                "characteristics phases are implemented for d = 1; "
                "x-independent roots use the quadrature phase in any d"
            )
        self.grid = grid
        self.dim = 1
        self.root = root
        self.horizon = horizon
        self.n_steps = n_steps
        self.oversample = oversample
        self.jacobian_floor = jacobian_floor
        fine = grid.points * oversample
        self._x0 = -0.5 * grid.length + grid.length * np.arange(fine) / fine
        self._cache: dict = {}

    def _check_horizon(self, t, s):
        # small backward spans are legal: the Volterra collocation
        # evaluates within-panel pairs on both sides of the target
        if abs(t - s) > self.horizon + 1e-12:
            raise HorizonError(
                f"phase requested for |t - s| = {abs(t - s):.6g} beyond horizon "
                f"{self.horizon:.6g}"
            )

    def _direction_table(self, state):
        g = self.grid
        L = g.length
        x_end, _p_end, w_end = state
        x_mod = (x_end + 0.5 * L) % L - 0.5 * L
        order = np.argsort(x_mod)
        xs = np.concatenate([x_mod[order], [x_mod[order][0] + L]])
        ws = np.concatenate([w_end[order], [w_end[order][0]]])
        spline = CubicSpline(xs, ws, bc_type="periodic")
        w_lat = spline((g.x_axis - xs[0]) % L + xs[0])
        dw = np.real(spectral_derivative(g, w_lat.astype(complex), 0))
        d2w = np.real(spectral_derivative(g, w_lat.astype(complex), 0, order=2))
        return {"w": w_lat, "dw": dw, "d2w": d2w, "spline": spline, "x0": xs[0]}

    def _trivial_table(self):
        g = self.grid
        zero = np.zeros(g.points)
        return {"w": zero, "dw": zero.copy(), "d2w": zero.copy(), "spline": None,
                "x0": -0.5 * g.length}

    def prepare_anchor(self, s: float, times):
        """Integrate one ray bundle from s through all requested times,
        caching the phase tables for every (time, s) pair on the way."""
        wanted = sorted({float(tq) for tq in times
                         if tq > s + 1e-14 and (float(tq), float(s)) not in self._cache})
        if not wanted:
            return
        self._check_horizon(wanted[-1], s)
        per_dir = {}
        for direction in (+1.0, -1.0):
            _, _, taken = _rk4_rays(self.root, direction, self._x0, s, wanted[-1],
                                    self.n_steps, snapshots=wanted)
            per_dir[direction] = taken
        for tq in wanted:
            self._cache[(tq, float(s))] = {
                d: self._direction_table(per_dir[d][tq]) for d in (+1.0, -1.0)
            }

    def _tables(self, t: float, s: float):
        key = (float(t), float(s))
        if key in self._cache:
            return self._cache[key]
        self._check_horizon(t, s)
        if t == s:
            out = {d: self._trivial_table() for d in (+1.0, -1.0)}
        else:
            steps = max(min(24, self.n_steps),
                        int(np.ceil(self.n_steps * abs(t - s)
                                    / max(self.horizon, 1e-12))))
            out = {}
            for direction in (+1.0, -1.0):
                state, _, _ = _rk4_rays(self.root, direction, self._x0, s, t, steps)
                out[direction] = self._direction_table(state)
        self._cache[key] = out
        return out

    def _is_lattice_column(self, x_arr):
        g = self.grid
        flat = np.asarray(x_arr).reshape(-1)
        if flat.shape[0] != g.points:
            return False
        return (abs(flat[0] - g.x_axis[0]) < 1e-12
                and abs(flat[-1] - g.x_axis[-1]) < 1e-12)

    def _w_of(self, tables, x_arr, which="w"):
        """Evaluate the correction table (or a derivative) at arbitrary x;
        lattice columns short-circuit to the stored tables."""
        g = self.grid
        L = g.length
        res = {}
        on_lattice = self._is_lattice_column(x_arr)
        shape = np.shape(x_arr)
        for direction in (+1.0, -1.0):
            tab = tables[direction]
            if on_lattice:
                res[direction] = tab[which].reshape(shape)
            elif which == "w" and tab["spline"] is not None:
                res[direction] = tab["spline"]((x_arr - tab["x0"]) % L + tab["x0"])
            else:
                lat = tab[which]
                spl = CubicSpline(
                    np.concatenate([g.x_axis, [g.x_axis[0] + L]]),
                    np.concatenate([lat, [lat[0]]]),
                    bc_type="periodic",
                )
                res[direction] = spl((x_arr + 0.5 * L) % L - 0.5 * L)
        return res

    def _combine(self, res, xi_arr, radial_power=1):
        r = np.abs(xi_arr)
        pos = xi_arr > 0
        return r**radial_power * np.where(pos, res[+1.0], res[-1.0])

    def value(self, t, s, x, xi):
        tables = self._tables(t, s)
        x_arr = np.asarray(x[0] if isinstance(x, tuple) else x, dtype=float)
        xi_arr = np.asarray(xi[0] if isinstance(xi, tuple) else xi, dtype=float)
        res = self._w_of(tables, x_arr)
        return x_arr * xi_arr + self._combine(res, xi_arr)

    def grad_x(self, t, s, x, xi):
        tables = self._tables(t, s)
        x_arr = np.asarray(x[0] if isinstance(x, tuple) else x, dtype=float)
        xi_arr = np.asarray(xi[0] if isinstance(xi, tuple) else xi, dtype=float)
        res = self._w_of(tables, x_arr, "dw")
        return (xi_arr + self._combine(res, xi_arr),)

    def grad_xi(self, t, s, x, xi):
        tables = self._tables(t, s)
        x_arr = np.asarray(x[0] if isinstance(x, tuple) else x, dtype=float)
        xi_arr = np.asarray(xi[0] if isinstance(xi, tuple) else xi, dtype=float)
        res = self._w_of(tables, x_arr)
        return (x_arr + np.sign(xi_arr) * np.where(xi_arr > 0, res[+1.0], res[-1.0]),)

    def hess_xx(self, t, s, x, xi):
        tables = self._tables(t, s)
        x_arr = np.asarray(x[0] if isinstance(x, tuple) else x, dtype=float)
        xi_arr = np.asarray(xi[0] if isinstance(xi, tuple) else xi, dtype=float)
        res = self._w_of(tables, x_arr, "d2w")
        return [[self._combine(res, xi_arr)]]

    def hess_xixi(self, t, s, x, xi):
        x_arr = np.asarray(x[0] if isinstance(x, tuple) else x, dtype=float)
        xi_arr = np.asarray(xi[0] if isinstance(xi, tuple) else xi, dtype=float)
        shape = np.broadcast_shapes(x_arr.shape, xi_arr.shape)
        return [[np.zeros(shape)]]

    def dt(self, t, s, x, xi, step=2.5e-3):
        # fourth-order difference in t of the phase tables; the stencil
        # slides to stay inside [s, s + horizon]
        from .quadrature import fornberg_weights

        lo, hi = s - self.horizon, s + self.horizon
        offsets = np.arange(-2, 3) * step
        shift = 0.0
        if t + offsets[-1] > hi:
            shift = hi - (t + offsets[-1])
        elif t + offsets[0] < lo:
            shift = lo - (t + offsets[0])
        nodes = t + offsets + shift
        w = fornberg_weights(t, nodes, 1)[1]
        out = None
        for node, wk in zip(nodes, w):
            term = wk * self.value(node, s, x, xi)
            out = term if out is None else out + term
        return out


def solve_eikonal(root: Symbol, grid: Grid, horizon_request: float,
                  n_steps: int = 200, oversample: int = 4,
                  jacobian_floor: float = 0.1) -> PhaseFunction:
    """Phase function for one characteristic root.

    x-independent roots get the exact quadrature phase on any grid;
    otherwise (d = 1) rays are probed over [0, horizon_request] and the
    returned phase carries the possibly reduced horizon at which the
    ray-map Jacobian first dropped below `jacobian_floor`, with a
    CausticWarning when that happened early.
    """
    if root.x_independent:
        phase = quadrature_phase(root, grid.dim, name=f"phase({root.name})")
        phase.horizon = horizon_request
        return phase
    phase = CharacteristicsPhase(
        grid, root, horizon_request, n_steps=n_steps, oversample=oversample,
        jacobian_floor=jacobian_floor,
    )
    # probe the ray map for focusing over the requested window (thinned
    # ray bundle is enough to spot compression)
    probes = np.linspace(0.0, horizon_request, 9)[1:]
    horizon = horizon_request
    probe_rays = phase._x0[:: max(1, oversample)]
    for direction in (+1.0, -1.0):
        for tp in probes:
            _, min_jac, _ = _rk4_rays(root, direction, probe_rays, 0.0, tp,
                                      max(20, int(n_steps * tp / max(horizon_request, 1e-12))))
            if min_jac < jacobian_floor:
                horizon = min(horizon, tp)
                break
    if horizon < horizon_request:
        warnings.warn(
            f"ray crossing detected near t = {horizon:.4g}; phase horizon "
            f"reduced from {horizon_request:.4g}",
            CausticWarning,
            stacklevel=2,
        )
    phase.horizon = horizon
    return phase


def phase_residual(phase: PhaseFunction, root: Symbol, grid: Grid,
                   t_pairs, radii=(1.0, 4.0, 16.0), dt_step: float = 2.5e-3) -> float:
    """max over the validation cloud of |d_t phi + lambda(t, x, grad phi)| / |xi|.

    The time derivative is a fourth-order finite difference of the phase
    itself, keeping the check independent of the ray construction.
    """
    worst = 0.0
    x = (grid.x_axis,)
    if hasattr(phase, "prepare_anchor"):
        # one ray bundle per anchor serves the whole dt stencil
        by_s = {}
        for (t, s) in t_pairs:
            offs = [t + k * dt_step for k in (-4, -3, -2, -1, 0, 1, 2, 3, 4)]
            by_s.setdefault(float(s), []).extend(offs)
        for s, times in by_s.items():
            fence = s + phase.horizon
            phase.prepare_anchor(s, [tq for tq in times if s < tq <= fence])
    for (t, s) in t_pairs:
        for r in radii:
            for direction in (+1.0, -1.0):
                xi = (np.array([direction * r]),)
                if phase.tag == "characteristics":
                    dphi_dt = phase.dt(t, s, x, xi, step=dt_step)
                else:
                    # x-linear phases carry their exact time derivative
                    dphi_dt = phase.dt(t, s, x, xi)
                grad = phase.grad_x(t, s, x, xi)
                lam = np.real(root.eval(t, x, grad))
                res = np.max(np.abs(dphi_dt + lam)) / r
                worst = max(worst, float(res))
    return worst
