"""Symbol classes with seminorms and asymptotic composition calculus.

A Symbol is a numerically evaluable map (t, x, xi) -> C with a declared
order m: away from a ball of radius R it is expected to obey

    |d_xi^a d_x^b p(t, x, xi)| <= C <xi>^(m - |a|),

which is testable on a finite sample cloud but never proven.  Points x
and frequencies xi are passed as tuples of d broadcastable coordinate
arrays so meshes of any shape evaluate vectorized.

Derivatives are central finite differences (Fornberg weights) unless an
analytic rule is attached; steps scale with <xi> in frequency and with a
configurable spatial step (grid spacing / 4 by the module defaults).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, UnsupportedDepthError, ZeroModeWarning
from .grid import Grid, japanese_bracket
from .quadrature import fornberg_weights

MASK = "mask"


def _as_tuple(v, dim):
    if isinstance(v, tuple):
        return v
    return (v,) if dim == 1 else tuple(v)


def _zero_index(dim):
    return (0,) * dim


def multi_indices(dim, max_total):
    """All multi-indices of dimension dim with |alpha| <= max_total."""
    out = [()]
    for _ in range(dim):
        out = [t + (k,) for t in out for k in range(max_total + 1)]
    return [a for a in out if sum(a) <= max_total]


def factorial_multi(alpha):
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


def _shift(coords, axis, delta):
    coords = list(coords)
    coords[axis] = coords[axis] + delta
    return tuple(coords)


class Symbol:
    """Evaluable symbol of declared order with finite-difference calculus.

    Parameters
    ----------
    fn : callable (t, x, xi) -> complex array
        x and xi are tuples of d broadcastable coordinate arrays.
    order : float
        Declared symbol order m.
    dim : int
        Spatial dimension d.
    zero_mode : None, "mask", number, or callable (t, x) -> value
        Behavior at |xi| = 0: trust fn, set the mode to zero with a
        warning, or use the continuous extension.
    x_independent, t_independent : bool
        Declared independencies; the corresponding derivatives are
        exactly zero and multiplier fast paths become available.
    deriv_fn : callable or None
        Optional analytic derivative (t, x, xi, ax, axi) -> array.
        Returning None falls back to finite differences.
    """

    def __init__(self, fn, order, dim, name="", zero_mode=None,
                 x_independent=False, t_independent=False, deriv_fn=None,
                 depth=6, radius=1.0, dx_step=0.05, fd_accuracy=6,
                 warn_on_mask=True):
        self.fn = fn
        self.order = float(order)
        self.dim = int(dim)
        self.name = name
        self.zero_mode = zero_mode
        self.x_independent = x_independent
        self.t_independent = t_independent
        self.deriv_fn = deriv_fn
        self.depth = depth
        self.radius = radius
        self.dx_step = dx_step
        self.fd_accuracy = fd_accuracy
        self._warned_zero = not warn_on_mask

    # -- evaluation ----------------------------------------------------

    def eval(self, t, x, xi):
        x = _as_tuple(x, self.dim)
        xi = _as_tuple(xi, self.dim)
        with np.errstate(all="ignore"):
            vals = np.asarray(self.fn(t, x, xi), dtype=complex)
        norm_sq = sum(np.asarray(c, dtype=float) ** 2 for c in xi)
        zero = np.broadcast_to(norm_sq == 0.0, np.broadcast_shapes(vals.shape, np.shape(norm_sq)))
        if not np.any(zero):
            return vals
        vals = np.array(np.broadcast_to(vals, zero.shape), dtype=complex)
        if self.zero_mode is None:
            return vals
        if self.zero_mode == MASK:
            vals[zero] = 0.0
            if not self._warned_zero:
                warnings.warn(
                    f"symbol {self.name or '<anonymous>'} has no continuous "
                    "extension at xi = 0; zero mode masked",
                    ZeroModeWarning,
                    stacklevel=2,
                )
                self._warned_zero = True
            return vals
        if callable(self.zero_mode):
            fill = np.broadcast_to(np.asarray(self.zero_mode(t, x), dtype=complex), zero.shape)
            vals[zero] = fill[zero]
        else:
            vals[zero] = complex(self.zero_mode)
        return vals

    def __call__(self, t, x, xi):
        return self.eval(t, x, xi)

    # -- derivatives ---------------------------------------------------

    def _xi_step(self, xi, order):
        scale = {1: 1e-4, 2: 1e-3, 3: 1e-2}.get(order, 3e-2)
        return scale * japanese_bracket(xi)

    def _x_stepsize(self, order):
        return self.dx_step * (1.0 if order <= 2 else 2.0)

    def _cache_key(self, t, x, xi, ax, axi):
        parts = [round(float(t), 12), ax, axi]
        for c in x + xi:
            arr = np.asarray(c)
            parts.append((arr.shape, float(np.real(arr.flat[0])),
                          float(np.real(arr.flat[-1])), float(np.sum(np.real(arr)))))
        return tuple(parts)

    def derivative(self, t, x, xi, ax=None, axi=None):
        """Mixed partial d_x^ax d_xi^axi evaluated at (t, x, xi).

        Values are memoized per (t, point-set) fingerprint: composed
        symbols revisit the same leaf derivatives many times during one
        mesh evaluation.
        """
        ax = tuple(ax) if ax is not None else _zero_index(self.dim)
        axi = tuple(axi) if axi is not None else _zero_index(self.dim)
        total = sum(ax) + sum(axi)
        x = _as_tuple(x, self.dim)
        xi = _as_tuple(xi, self.dim)
        # memoize mesh-scale requests only: composed symbols revisit the
        # same leaf derivatives many times per dense evaluation, while
        # small pointwise calls (ray stages) would only pay for keys
        size = max(int(np.prod(np.broadcast_shapes(
            *(np.shape(c) for c in x + xi)))), 1)
        if size < 16384:
            return self._derivative_impl(t, x, xi, ax, axi, total)
        key = self._cache_key(t, x, xi, ax, axi)
        cache = getattr(self, "_memo", None)
        if cache is None:
            cache = self._memo = {}
        if key in cache:
            return cache[key]
        out = self._derivative_impl(t, x, xi, ax, axi, total)
        if len(cache) > 12:
            cache.pop(next(iter(cache)))
        cache[key] = out
        return out

    def _derivative_impl(self, t, x, xi, ax, axi, total):
        if total == 0:
            return self.eval(t, x, xi)
        if total > self.depth:
            raise UnsupportedDepthError(
                f"derivative depth {total} exceeds configured depth {self.depth}"
            )
        if self.x_independent and sum(ax) > 0:
            shape = np.broadcast_shapes(
                *(np.shape(c) for c in _as_tuple(x, self.dim)),
                *(np.shape(c) for c in _as_tuple(xi, self.dim)),
            )
            return np.zeros(shape, dtype=complex)
        if self.deriv_fn is not None:
            out = self.deriv_fn(t, x, xi, ax, axi)
            if out is not None:
                return np.asarray(out, dtype=complex)
        x = _as_tuple(x, self.dim)
        xi = _as_tuple(xi, self.dim)
        # peel one x axis, then one xi axis, recursing on the rest
        for j in range(self.dim):
            if ax[j] > 0:
                m = ax[j]
                rest = tuple(0 if i == j else a for i, a in enumerate(ax))
                step = self._x_stepsize(m)
                return self._fd(
                    lambda off: self.derivative(t, _shift(x, j, off), xi, rest, axi),
                    m, step,
                )
        for j in range(self.dim):
            if axi[j] > 0:
                m = axi[j]
                rest = tuple(0 if i == j else a for i, a in enumerate(axi))
                steps = self._xi_step(xi, m)
                return self._fd_var(
                    lambda offs: self.derivative(t, x, _shift(xi, j, offs), ax, rest),
                    m, steps,
                )
        raise AssertionError("unreachable")

    def _fd(self, f, m, step):
        npts = m + self.fd_accuracy
        if npts % 2 == 0:
            npts += 1
        half = npts // 2
        w = fornberg_weights(0.0, np.arange(-half, half + 1, dtype=float), m)[m]
        acc = None
        for k, wk in zip(range(-half, half + 1), w):
            if wk == 0.0:
                continue
            term = wk * f(k * step)
            acc = term if acc is None else acc + term
        return acc / step**m

    def _fd_var(self, f, m, steps):
        """FD with a pointwise step array (frequency-scaled stencils)."""
        npts = m + self.fd_accuracy
        if npts % 2 == 0:
            npts += 1
        half = npts // 2
        w = fornberg_weights(0.0, np.arange(-half, half + 1, dtype=float), m)[m]
        acc = None
        for k, wk in zip(range(-half, half + 1), w):
            if wk == 0.0:
                continue
            term = wk * f(k * steps)
            acc = term if acc is None else acc + term
        return acc / np.asarray(steps, dtype=float) ** m

    def derivative_t(self, t, x, xi, order=1, dt_step=1e-3):
        """Time derivative by central differences (or zero if declared)."""
        if self.t_independent:
            x = _as_tuple(x, self.dim)
            xi = _as_tuple(xi, self.dim)
            shape = np.broadcast_shapes(*(np.shape(c) for c in x + xi))
            return np.zeros(shape, dtype=complex)
        npts = order + self.fd_accuracy
        if npts % 2 == 0:
            npts += 1
        half = npts // 2
        w = fornberg_weights(0.0, np.arange(-half, half + 1, dtype=float), order)[order]
        acc = None
        for k, wk in zip(range(-half, half + 1), w):
            if wk == 0.0:
                continue
            term = wk * self.eval(t + k * dt_step, x, xi)
            acc = term if acc is None else acc + term
        return acc / dt_step**order

    # -- algebra ---------------------------------------------------------

    def _merge_flags(self, other):
        return dict(
            x_independent=self.x_independent and getattr(other, "x_independent", True),
            t_independent=self.t_independent and getattr(other, "t_independent", True),
            zero_mode=(MASK if MASK in (self.zero_mode, getattr(other, "zero_mode", None)) else None),
            depth=min(self.depth, getattr(other, "depth", self.depth)),
            dim=self.dim,
            dx_step=self.dx_step,
            fd_accuracy=max(self.fd_accuracy, getattr(other, "fd_accuracy", self.fd_accuracy)),
            warn_on_mask=False,
        )

    def __add__(self, other):
        other = as_symbol(other, self.dim)
        return Symbol(
            lambda t, x, xi: self.eval(t, x, xi) + other.eval(t, x, xi),
            max(self.order, other.order),
            name=f"({self.name}+{other.name})",
            deriv_fn=lambda t, x, xi, ax, axi: (
                self.derivative(t, x, xi, ax, axi) + other.derivative(t, x, xi, ax, axi)
            ),
            **self._merge_flags(other),
        )

    def __sub__(self, other):
        return self + (-as_symbol(other, self.dim))

    def __neg__(self):
        return self * (-1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            c = complex(other)
            return Symbol(
                lambda t, x, xi: c * self.eval(t, x, xi),
                self.order,
                dim=self.dim,
                name=f"({c}*{self.name})",
                zero_mode=self.zero_mode if self.zero_mode in (None, MASK) else None,
                warn_on_mask=False,
                x_independent=self.x_independent,
                t_independent=self.t_independent,
                deriv_fn=lambda t, x, xi, ax, axi: c * self.derivative(t, x, xi, ax, axi),
                depth=self.depth,
                dx_step=self.dx_step,
                fd_accuracy=self.fd_accuracy,
            )
        other = as_symbol(other, self.dim)

        def prod_deriv(t, x, xi, ax, axi):
            # Leibniz over both groups of indices
            out = None
            for bx in _sub_indices(ax):
                cx = tuple(a - b for a, b in zip(ax, bx))
                for bxi in _sub_indices(axi):
                    cxi = tuple(a - b for a, b in zip(axi, bxi))
                    coeff = _binom_multi(ax, bx) * _binom_multi(axi, bxi)
                    term = coeff * self.derivative(t, x, xi, bx, bxi) * other.derivative(
                        t, x, xi, cx, cxi
                    )
                    out = term if out is None else out + term
            return out

        return Symbol(
            lambda t, x, xi: self.eval(t, x, xi) * other.eval(t, x, xi),
            self.order + other.order,
            name=f"({self.name}*{other.name})",
            deriv_fn=prod_deriv,
            **self._merge_flags(other),
        )

    __rmul__ = __mul__

    def conj(self):
        return Symbol(
            lambda t, x, xi: np.conj(self.eval(t, x, xi)),
            self.order,
            dim=self.dim,
            name=f"conj({self.name})",
            zero_mode=self.zero_mode if self.zero_mode in (None, MASK) else None,
            warn_on_mask=False,
            x_independent=self.x_independent,
            t_independent=self.t_independent,
            deriv_fn=lambda t, x, xi, ax, axi: np.conj(self.derivative(t, x, xi, ax, axi)),
            depth=self.depth,
            dx_step=self.dx_step,
            fd_accuracy=self.fd_accuracy,
        )


def _sub_indices(alpha):
    out = [()]
    for a in alpha:
        out = [t + (k,) for t in out for k in range(a + 1)]
    return out


def _binom_multi(alpha, beta):
    out = 1
    for a, b in zip(alpha, beta):
        out *= math.comb(a, b)
    return out


def as_symbol(v, dim):
    if isinstance(v, Symbol):
        return v
    c = complex(v)
    return Symbol(
        lambda t, x, xi: np.full(
            np.broadcast_shapes(*(np.shape(a) for a in _as_tuple(x, dim) + _as_tuple(xi, dim))),
            c,
        ),
        0.0,
        dim=dim,
        name=str(v),
        x_independent=True,
        t_independent=True,
        deriv_fn=lambda t, x, xi, ax, axi: np.zeros(
            np.broadcast_shapes(*(np.shape(a) for a in _as_tuple(x, dim) + _as_tuple(xi, dim))),
            dtype=complex,
        )
        if sum(ax) + sum(axi) > 0
        else None,
    )


def from_xi_function(fn, order, dim, name="", zero_mode=None, **kw):
    """Symbol depending on xi only (a Fourier multiplier symbol)."""
    return Symbol(
        lambda t, x, xi: fn(xi),
        order,
        dim=dim,
        name=name,
        zero_mode=zero_mode,
        x_independent=True,
        t_independent=True,
        **kw,
    )


def from_x_function(fn, dim, name="", **kw):
    """Order-zero symbol depending on (t, x) only."""
    return Symbol(lambda t, x, xi: fn(t, x) + 0j * sum(np.asarray(c) for c in xi),
                  0.0, dim=dim, name=name, **kw)


def bracket_symbol(dim, power=1.0):
    """<xi>^power as a Symbol."""
    return from_xi_function(
        lambda xi: japanese_bracket(xi) ** power + 0j, power, dim, name=f"<xi>^{power}"
    )


def abs_xi_symbol(dim, zero_mode=0.0):
    """|xi| as a Symbol (zero mode extends continuously to 0)."""
    return from_xi_function(
        lambda xi: np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in xi)) + 0j,
        1.0,
        dim,
        name="|xi|",
        zero_mode=zero_mode,
    )


# -- sample cloud and seminorms ------------------------------------------


@dataclass
class SampleCloud:
    """Deterministic (x, xi) cloud on which sup-based quantities are read.

    x points subsample the grid lattice; |xi| is log-spaced in
    [R, xi_max] along a fixed direction set.  Density is a knob, not a
    proof: supremum estimates are lower bounds of the true sup.
    """

    x: tuple
    xi: tuple
    grid: Grid

    @classmethod
    def for_grid(cls, grid, radius=1.0, x_per_axis=None, n_radii=64, n_dirs=16):
        d = grid.dim
        if x_per_axis is None:
            x_per_axis = {1: 32, 2: 12, 3: 6}[d]
        stride = max(1, grid.points // x_per_axis)
        axis = grid.x_axis[::stride]
        xmesh = np.meshgrid(*([axis] * d), indexing="ij")
        xpts = tuple(m.ravel() for m in xmesh)
        radii = np.geomspace(max(radius, 1e-6), grid.xi_max, n_radii)
        if d == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif d == 2:
            ang = np.linspace(0.0, 2 * np.pi, n_dirs, endpoint=False)
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            idx = np.arange(n_dirs) + 0.5
            phi = np.arccos(1 - 2 * idx / n_dirs)
            theta = np.pi * (1 + 5**0.5) * idx
            dirs = np.stack(
                [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)],
                axis=1,
            )
        xi_pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
        x = tuple(c[:, None] for c in xpts)
        xi = tuple(xi_pts[None, :, j] for j in range(d))
        return cls(x=x, xi=xi, grid=grid)

    def bracket(self):
        return japanese_bracket(self.xi)


def seminorm(p: Symbol, l: int, radius: float = 1.0, cloud: SampleCloud | None = None,
             grid: Grid | None = None, t: float = 0.0) -> float:
    """Estimate |p|_{l,R}: max over |ax+axi| <= l of the cloud sup of
    |d^ax_x d^axi_xi p| <xi>^(-m+|axi|).

    Monotone nondecreasing in l by construction.  Raises if l exceeds
    the symbol's configured derivative depth.
    """
    if l > p.depth:
        raise UnsupportedDepthError(f"seminorm level {l} exceeds depth {p.depth}")
    if cloud is None:
        if grid is None:
            raise ValueError("either a cloud or a grid is required")
        cloud = SampleCloud.for_grid(grid, radius=radius)
    br = cloud.bracket()
    keep = br >= np.sqrt(1.0 + radius**2) * (1 - 1e-12)
    best = 0.0
    for ax in multi_indices(p.dim, l):
        for axi in multi_indices(p.dim, l - sum(ax)):
            vals = p.derivative(t, cloud.x, cloud.xi, ax, axi)
            weight = br ** (-p.order + sum(axi))
            sup = np.max(np.abs(vals) * weight * keep)
            best = max(best, float(sup))
    return best


# -- composition calculus --------------------------------------------------


def compose_pdo(p: Symbol, q: Symbol, terms: int = 2) -> Symbol:
    """Asymptotic symbol of the operator product P(x,D) Q(x,D).

    sum over |alpha| < terms of (1/alpha!) d_xi^alpha p . D_x^alpha q,
    declared order p.order + q.order; the dropped remainder has order
    p.order + q.order - terms.
    """
    if terms < 1:
        raise ValueError("terms must be >= 1")
    dim = p.dim
    alphas = [a for a in multi_indices(dim, terms - 1)]

    def term_deriv(t, x, xi, a, ax, axi):
        # Leibniz on d_xi^a p . D_x^a q, pushing all differentiation to
        # the leaf symbols so finite differences never nest
        coeff = (-1j) ** sum(a) / factorial_multi(a)
        out = None
        for bx in _sub_indices(ax):
            cx = tuple(u - v for u, v in zip(ax, bx))
            for bxi in _sub_indices(axi):
                cxi = tuple(u - v for u, v in zip(axi, bxi))
                w = _binom_multi(ax, bx) * _binom_multi(axi, bxi)
                left = p.derivative(t, x, xi, bx, tuple(u + v for u, v in zip(a, bxi)))
                right = q.derivative(t, x, xi, tuple(u + v for u, v in zip(a, cx)), cxi)
                term = w * left * right
                out = term if out is None else out + term
        return coeff * out

    def fn(t, x, xi):
        out = None
        for a in alphas:
            if sum(a) == 0:
                term = p.eval(t, x, xi) * q.eval(t, x, xi)
            else:
                coeff = (-1j) ** sum(a) / factorial_multi(a)
                term = coeff * p.derivative(t, x, xi, None, a) * q.derivative(t, x, xi, a, None)
            out = term if out is None else out + term
        return out

    def deriv(t, x, xi, ax, axi):
        out = None
        for a in alphas:
            term = term_deriv(t, x, xi, a, ax, axi)
            out = term if out is None else out + term
        return out

    return Symbol(
        fn,
        p.order + q.order,
        dim=dim,
        deriv_fn=deriv,
        name=f"compose({p.name},{q.name})",
        zero_mode=(MASK if MASK in (p.zero_mode, q.zero_mode) else None),
        warn_on_mask=False,
        x_independent=p.x_independent and q.x_independent,
        t_independent=p.t_independent and q.t_independent,
        depth=min(p.depth, q.depth),
        dx_step=p.dx_step,
        fd_accuracy=max(p.fd_accuracy, q.fd_accuracy),
    )


def commutator_symbol(p: Symbol, q: Symbol, terms: int = 2) -> Symbol:
    """Symbol of [P, Q] = PQ - QP; the leading terms cancel, so the
    declared order drops by one."""
    pq = compose_pdo(p, q, terms)
    qp = compose_pdo(q, p, terms)
    out = pq - qp
    out.order = p.order + q.order - 1
    out.name = f"[{p.name},{q.name}]"
    return out


def adjoint_symbol(p: Symbol, terms: int = 2) -> Symbol:
    """Adjoint symbol sum over |alpha| < terms of
    (1 / alpha!) d_xi^alpha D_x^alpha conj(p); the L2 adjoint identity
    <Pu, v> = <u, P*v> holds on the grid up to the dropped order."""
    if terms < 1:
        raise ValueError("terms must be >= 1")
    alphas = [a for a in multi_indices(p.dim, terms - 1)]

    def fn(t, x, xi):
        out = None
        for a in alphas:
            coeff = (-1j) ** sum(a) / factorial_multi(a)
            term = coeff * np.conj(p.derivative(t, x, xi, a, a))
            out = term if out is None else out + term
        return out

    def deriv(t, x, xi, ax, axi):
        out = None
        for a in alphas:
            coeff = (-1j) ** sum(a) / factorial_multi(a)
            inner = p.derivative(
                t, x, xi,
                tuple(u + v for u, v in zip(a, ax)),
                tuple(u + v for u, v in zip(a, axi)),
            )
            term = coeff * np.conj(inner)
            out = term if out is None else out + term
        return out

    return Symbol(
        fn,
        p.order,
        dim=p.dim,
        deriv_fn=deriv,
        name=f"adjoint({p.name})",
        zero_mode=p.zero_mode if p.zero_mode in (None, MASK) else None,
        warn_on_mask=False,
        x_independent=p.x_independent,
        t_independent=p.t_independent,
        depth=p.depth,
        dx_step=p.dx_step,
        fd_accuracy=p.fd_accuracy,
    )


class TwoTimeSymbol:
    """Symbol with a frozen pair of time arguments (t, s), as produced by
    FIO compositions whose phase carries two times."""

    def __init__(self, fn, order, dim, name=""):
        self.fn = fn
        self.order = float(order)
        self.dim = dim
        self.name = name

    def eval(self, t, s, x, xi):
        return np.asarray(self.fn(t, s, _as_tuple(x, self.dim), _as_tuple(xi, self.dim)),
                          dtype=complex)

    def at(self, s) -> Symbol:
        return Symbol(lambda t, x, xi: self.eval(t, s, x, xi), self.order, dim=self.dim,
                      name=f"{self.name}@s={s}")


def compose_fio_pdo(p: Symbol, phi, q: Symbol, side: str) -> TwoTimeSymbol:
    """Second-order symbol expansion of a PDO/FIO product.

    side="right" is the product P_phi Q (PDO applied first), side="left"
    is Q P_phi.  The expansion keeps the leading term, the first-order
    term and the half curvature term and discards the order
    (p.order + q.order - 2) remainder.
    """
    dim = p.dim
    axes = range(dim)

    def unit(j):
        return tuple(1 if i == j else 0 for i in axes)

    def unit2(j, k):
        return tuple((1 if i == j else 0) + (1 if i == k else 0) for i in axes)

    if side == "right":
        # P_phi Q: q is evaluated at the xi-gradient of the phase
        def fn(t, s, x, xi):
            grad = phi.grad_xi(t, s, x, xi)
            pv = p.eval(t, x, xi)
            out = pv * q.eval(t, x, grad)
            for j in axes:
                out = out + p.derivative(t, x, xi, None, unit(j)) * (
                    -1j * q.derivative(t, x, grad, unit(j), None)
                )
            hess = phi.hess_xixi(t, s, x, xi)
            curv = None
            for j in axes:
                for k in axes:
                    term = (-1.0) * q.derivative(t, x, grad, unit2(j, k), None) * hess[j][k]
                    curv = term if curv is None else curv + term
            out = out + 0.5j * pv * curv
            return out

    elif side == "left":
        # Q P_phi: q is evaluated at the x-gradient of the phase
        def fn(t, s, x, xi):
            grad = phi.grad_x(t, s, x, xi)
            out = q.eval(t, x, grad) * p.eval(t, x, xi)
            for j in axes:
                out = out + q.derivative(t, x, grad, None, unit(j)) * (
                    -1j * p.derivative(t, x, xi, unit(j), None)
                )
            hess = phi.hess_xx(t, s, x, xi)
            curv = None
            for j in axes:
                for k in axes:
                    term = q.derivative(t, x, grad, None, unit2(j, k)) * hess[j][k]
                    curv = term if curv is None else curv + term
            out = out - 0.5j * curv * p.eval(t, x, xi)
            return out

    else:
        raise ValueError("side must be 'left' or 'right'")

    return TwoTimeSymbol(fn, p.order + q.order, dim,
                         name=f"fio_compose({p.name},{q.name},{side})")


# -- symbol matrices and the diagonalizer ----------------------------------


@dataclass
class SymbolMatrix:
    """Square array of Symbols sharing evaluation conventions."""

    entries: list

    def __post_init__(self):
        n = len(self.entries)
        for row in self.entries:
            if len(row) != n:
                raise ValueError("matrix must be square")

    @property
    def n(self):
        return len(self.entries)

    def __getitem__(self, ij):
        return self.entries[ij[0]][ij[1]]

    def eval_matrix(self, t, x, xi):
        """Pointwise values, shape (..., n, n)."""
        n = self.n
        first = self.entries[0][0].eval(t, x, xi)
        shape = np.shape(first)
        out = np.zeros(shape + (n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                v = self.entries[i][j].eval(t, x, xi) if (i, j) != (0, 0) else first
                out[..., i, j] = np.broadcast_to(v, shape)
        return out

    @property
    def is_multiplier(self):
        return all(e.x_independent for row in self.entries for e in row)


def diagonalizer(roots, c_min: float = 1e-3, cloud: SampleCloud | None = None,
                 t_samples=(0.0,)) -> tuple:
    """Unitriangular diagonalizer M of the bidiagonal root matrix
    (roots on the diagonal, -<xi> above it) and its exact pointwise
    inverse.

    Entry (i, j) above the diagonal is
        (-1)^(j-i) <xi>^(j-i) / prod_{i<=k<j} (root_j - root_k),
    the unique unitriangular choice making column j an eigenvector for
    root_j; every entry is an order-zero symbol when the roots stay
    separated by c |xi|.  The separation is screened on the sample cloud
    when one is supplied, and a DegeneracyError names the first
    offending point.
    """
    n = len(roots)
    dim = roots[0].dim

    if cloud is not None:
        br = np.sqrt(cloud.bracket() ** 2 - 1.0)
        for tval in t_samples:
            vals = [np.real(r.eval(tval, cloud.x, cloud.xi)) for r in roots]
            for j in range(n):
                for k in range(j):
                    gap, radius, *coords = np.broadcast_arrays(
                        np.abs(vals[j] - vals[k]), br, *cloud.x, *cloud.xi
                    )
                    bad = gap < c_min * radius
                    if np.any(bad):
                        idx = np.unravel_index(np.argmax(bad), bad.shape)
                        d = len(cloud.x)
                        raise DegeneracyError(
                            "root separation below threshold",
                            t=tval,
                            x=tuple(c[idx] for c in coords[:d]),
                            xi=tuple(c[idx] for c in coords[d:]),
                        )

    def m_entry(i, j):
        def fn(t, x, xi):
            denom = None
            for k in range(i, j):
                gap = roots[j].eval(t, x, xi) - roots[k].eval(t, x, xi)
                denom = gap if denom is None else denom * gap
            return (-1.0) ** (j - i) * japanese_bracket(xi) ** (j - i) / denom

        return Symbol(
            fn,
            0.0,
            dim=dim,
            name=f"m[{i},{j}]",
            zero_mode=MASK,
            x_independent=all(r.x_independent for r in roots),
            t_independent=all(r.t_independent for r in roots),
            dx_step=roots[0].dx_step,
        )

    def ident(i, j):
        return as_symbol(1.0 if i == j else 0.0, dim)

    upper = [[m_entry(i, j) if i < j else ident(i, j) for j in range(n)] for i in range(n)]
    M = SymbolMatrix(upper)

    # exact inverse of the unitriangular matrix via the nilpotent series
    zero = as_symbol(0.0, dim)
    U = [[upper[i][j] if i < j else zero for j in range(n)] for i in range(n)]
    inv = [[ident(i, j) for j in range(n)] for i in range(n)]
    power = [[U[i][j] for j in range(n)] for i in range(n)]
    sign = -1.0
    for _ in range(1, n):
        for i in range(n):
            for j in range(n):
                inv[i][j] = inv[i][j] + sign * power[i][j]
        nxt = [[zero for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = zero
                for k in range(n):
                    acc = acc + power[i][k] * U[k][j]
                nxt[i][j] = acc
        power = nxt
        sign = -sign
    return M, SymbolMatrix(inv)
