"""Characteristic roots, strict-hyperbolicity checks, and reduction of
the second-order operator to a diagonalized first-order system.

The physical operator is

    L = d_t^2 - sum_jk a_jk(t,x) d_j d_k - sum_j b_j(t,x) d_j - c(t,x),

restated with D = -i d as P = D_t^2 - A(t,x,D) + i b.D + c, for which
L u = f is P u = -f.  The substitution v1 = <D> u, v2 = (D_t + l1) u
turns P u = f into (D_t + K + R) V = (0, f) with K bidiagonal (roots on
the diagonal, -<xi> above) and R an order-zero remainder built from the
commutator [l1, <D>] <D>^-1 and the operator factorization residual.
Conjugating by the root diagonalizer yields the system the propagator
series is built on.

Root ordering: the standalone root finder reports ascending roots; the
n = 2 reduction labels l1 = +sqrt(A) so the reduced system matches the
classical second-order displays (the assembled solution operators are
invariant under the labeling).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, NotHyperbolicError
from .grid import Field, Grid, japanese_bracket
from .operators import GridOperator, multiplier_operator
from .symbols import (
    SampleCloud,
    Symbol,
    SymbolMatrix,
    as_symbol,
    bracket_symbol,
    compose_pdo,
    diagonalizer,
)


class Coefficient:
    """A scalar coefficient function of (t, x).

    Wraps a callable fn(t, x_tuple) -> array; constants and
    x-independent profiles are declared so the downstream symbols keep
    exact zero derivatives and multiplier fast paths.  `dx_fns` may
    carry analytic first spatial partials (one callable per axis);
    otherwise a five-point difference stands in.
    """

    def __init__(self, fn=None, value=None, x_independent=False, t_independent=False,
                 dx_fns=None, name=""):
        if fn is None and value is None:
            raise ValueError("either fn or value is required")
        if fn is None:
            self.fn = lambda t, x: np.full(
                np.broadcast_shapes(*(np.shape(c) for c in x)), float(value)
            )
            x_independent = True
            t_independent = True
        else:
            self.fn = fn
        self.x_independent = x_independent
        self.t_independent = t_independent
        self.dx_fns = dx_fns
        self.name = name

    @classmethod
    def constant(cls, value, name=""):
        return cls(value=value, name=name)

    def __call__(self, t, x):
        return self.fn(t, x)

    def dx(self, t, x, axis, step=1e-3):
        """First spatial partial along one axis."""
        if self.x_independent:
            return np.zeros(np.broadcast_shapes(*(np.shape(c) for c in x)))
        if self.dx_fns is not None:
            return self.dx_fns[axis](t, x)
        out = None
        for k, w in ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)):
            shifted = list(x)
            shifted[axis] = shifted[axis] + k * step
            term = w * self.fn(t, tuple(shifted))
            out = term if out is None else out + term
        return out / (12 * step)


def _as_coefficient(c) -> Coefficient:
    if isinstance(c, Coefficient):
        return c
    if np.isscalar(c):
        return Coefficient.constant(float(c))
    return Coefficient(fn=c)


@dataclass
class HyperbolicOperator:
    """Variable-coefficient hyperbolic operator of order n.

    For n = 2 supply the symmetric matrix a, the drift b and the
    potential c as Coefficients (or scalars / callables).  For n > 2
    only constant coefficients are supported, given as a table
    {(alpha, j): value} with |alpha| <= n - j (alpha a d-tuple); the
    reduction for that case lives in the multiplier module.
    """

    dim: int
    order: int = 2
    a: list = None
    b: list = None
    c: object = 0.0
    coeff_table: dict = None
    smoothness: str = "C1 in t, Cb-infinity in x"

    def __post_init__(self):
        d = self.dim
        if self.order < 2:
            raise ValueError("order must be at least 2")
        if self.order == 2:
            if self.a is None:
                self.a = [[1.0 if i == j else 0.0 for j in range(d)] for i in range(d)]
            self.a = [[_as_coefficient(self.a[i][j]) for j in range(d)] for i in range(d)]
            self.b = [_as_coefficient(v) for v in (self.b or [0.0] * d)]
            self.c = _as_coefficient(self.c)
        else:
            if self.coeff_table is None:
                raise ValueError("order > 2 requires a constant coefficient table")
            for (alpha, j), v in self.coeff_table.items():
                if len(alpha) != d or j >= self.order:
                    raise ValueError(f"bad coefficient index {(alpha, j)}")
                if not np.isscalar(v):
                    raise NotHyperbolicError(
                        "order > 2 reduction is implemented for constant "
                        "coefficients only"
                    )

    # -- principal symbol ---------------------------------------------

    def quadratic_form(self, t, x, xi):
        """A(t,x,xi) = sum a_jk xi_j xi_k (order n = 2 only)."""
        d = self.dim
        out = None
        for i in range(d):
            for j in range(d):
                term = self.a[i][j](t, x) * np.asarray(xi[i]) * np.asarray(xi[j])
                out = term if out is None else out + term
        return out

    @property
    def x_independent(self):
        if self.order != 2:
            return True
        coeffs = [e for row in self.a for e in row] + list(self.b) + [self.c]
        return all(c.x_independent for c in coeffs)

    @property
    def t_independent(self):
        if self.order != 2:
            return True
        coeffs = [e for row in self.a for e in row] + list(self.b) + [self.c]
        return all(c.t_independent for c in coeffs)

    def principal_tau_coefficients(self, t, x, xi):
        """Coefficients c_j of the principal tau-polynomial
        tau^n + sum_j c_j tau^j (general n)."""
        n, d = self.order, self.dim
        coeffs = [None] * n
        if self.order == 2:
            coeffs[1] = np.zeros_like(np.asarray(self.quadratic_form(t, x, xi)))
            coeffs[0] = -self.quadratic_form(t, x, xi)
            return coeffs
        for j in range(n):
            acc = None
            for (alpha, jj), v in self.coeff_table.items():
                if jj != j or sum(alpha) != n - j:
                    continue
                mono = np.ones(np.broadcast_shapes(*(np.shape(c) for c in xi)))
                for axis, power in enumerate(alpha):
                    mono = mono * np.asarray(xi[axis]) ** power
                acc = v * mono if acc is None else acc + v * mono
            shape = np.broadcast_shapes(*(np.shape(c) for c in xi))
            coeffs[j] = np.zeros(shape) if acc is None else acc
        return coeffs


def characteristic_roots(op: HyperbolicOperator, t, x, xi):
    """Real characteristic roots of the principal symbol at one point,
    ascending.  xi must be nonzero; n = 2 uses the closed form, higher
    orders go through companion-matrix eigenvalues."""
    d = op.dim
    x = tuple(np.atleast_1d(np.asarray(c, dtype=float)) for c in np.atleast_1d(x)) \
        if not isinstance(x, tuple) else x
    xi = tuple(np.atleast_1d(np.asarray(c, dtype=float)) for c in np.atleast_1d(xi)) \
        if not isinstance(xi, tuple) else xi
    norm = np.sqrt(sum(np.asarray(c) ** 2 for c in xi))
    if np.any(norm == 0):
        raise ValueError("characteristic roots need xi != 0")
    if op.order == 2:
        A = op.quadratic_form(t, x, xi)
        if np.any(np.asarray(A) < 0):
            raise NotHyperbolicError("principal form is negative: complex roots")
        r = np.sqrt(A)
        return [-r, r]
    coeffs = op.principal_tau_coefficients(t, x, xi)
    n = op.order
    shape = np.broadcast_shapes(*(np.shape(c) for c in coeffs))
    comp = np.zeros(shape + (n, n), dtype=complex)
    for j in range(1, n):
        comp[..., j, j - 1] = 1.0
    for j in range(n):
        comp[..., j, n - 1] = -np.broadcast_to(coeffs[j], shape)
    lam = np.linalg.eigvals(comp)
    tol = 1e-10 * np.maximum(norm, 1.0) ** n
    if np.any(np.abs(lam.imag) > tol[..., None]):
        raise NotHyperbolicError("complex characteristic roots beyond tolerance")
    lam = np.sort(lam.real, axis=-1)
    return [lam[..., j] for j in range(n)]


def strictness_margin(op: HyperbolicOperator, grid: Grid, t_samples=(0.0,),
                      n_dirs: int = 16, x_stride: int = 8) -> float:
    """Strict-hyperbolicity margin on a sample of (t, x, unit xi).

    n = 2: min of the principal quadratic form on the unit sphere
    (positive iff strictly hyperbolic there).  General n: the minimal
    pairwise root gap at |xi| = 1.  A nonpositive value is a valid
    report, not an error.
    """
    d = grid.dim
    axis = grid.x_axis[::x_stride]
    xmesh = np.meshgrid(*([axis] * d), indexing="ij")
    x = tuple(m.ravel()[:, None] for m in xmesh)
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        cloud = SampleCloud.for_grid(grid, n_dirs=n_dirs)
        pts = np.stack([np.broadcast_to(c, np.broadcast_shapes(*(np.shape(q) for q in cloud.xi)))
                        .ravel() for c in cloud.xi], axis=-1)
        norms = np.linalg.norm(pts, axis=-1, keepdims=True)
        dirs = np.unique(np.round(pts / norms, 12), axis=0)
    xi = tuple(dirs[None, :, j] for j in range(d))
    worst = np.inf
    for t in t_samples:
        if op.order == 2:
            val = np.min(np.real(op.quadratic_form(t, x, xi)))
        else:
            roots = characteristic_roots(op, t, x, xi)
            val = np.inf
            for j in range(len(roots)):
                for k in range(j):
                    val = min(val, float(np.min(np.abs(roots[j] - roots[k]))))
        worst = min(worst, float(val))
    return worst


def root_symbols(op: HyperbolicOperator, grid: Grid):
    """The pair (+sqrt(A), -sqrt(A)) as Symbols (n = 2).

    First and second derivatives are closed-form (chain rule on the
    quadratic form, coefficient spatial partials analytic or five-point);
    deeper requests fall back to the generic finite differences.
    """
    if op.order != 2:
        raise ValueError("root symbols as Symbol objects are the n = 2 path")
    d = op.dim
    h4 = grid.spacing / 4

    def fn(t, x, xi):
        return np.sqrt(np.maximum(np.real(op.quadratic_form(t, x, xi)), 0.0)) + 0j

    def make_deriv(sign):
        def deriv(t, x, xi, ax, axi):
            tot_x, tot_xi = sum(ax), sum(axi)
            if tot_x + tot_xi > 2 or tot_x > 1:
                return None
            A = np.real(op.quadratic_form(t, x, xi))
            root = np.sqrt(np.maximum(A, 0.0))
            safe = np.where(root == 0, 1.0, root)

            def A_xi(l):
                out = None
                for k in range(d):
                    term = op.a[l][k](t, x) * np.asarray(xi[k])
                    out = term if out is None else out + term
                return 2.0 * out

            def A_x(l):
                out = None
                for i in range(d):
                    for k in range(d):
                        term = op.a[i][k].dx(t, x, l, step=h4) \
                            * np.asarray(xi[i]) * np.asarray(xi[k])
                        out = term if out is None else out + term
                return out

            if tot_x == 0 and tot_xi == 1:
                l = axi.index(1)
                return sign * A_xi(l) / (2 * safe) + 0j
            if tot_x == 1 and tot_xi == 0:
                l = ax.index(1)
                return sign * A_x(l) / (2 * safe) + 0j
            if tot_x == 0 and tot_xi == 2:
                if 2 in axi:
                    l = m = axi.index(2)
                else:
                    l = axi.index(1)
                    m = axi.index(1, l + 1)
                alm = 2.0 * op.a[l][m](t, x)
                return sign * (alm / (2 * safe)
                               - A_xi(l) * A_xi(m) / (4 * safe**3)) + 0j
            if tot_x == 1 and tot_xi == 1:
                l = ax.index(1)
                m = axi.index(1)
                dA_xi = None
                for k in range(d):
                    term = op.a[m][k].dx(t, x, l, step=h4) * np.asarray(xi[k])
                    dA_xi = term if dA_xi is None else dA_xi + term
                dA_xi = 2.0 * dA_xi
                return sign * (dA_xi / (2 * safe)
                               - A_xi(m) * A_x(l) / (4 * safe**3)) + 0j
            return None

        return deriv

    lam1 = Symbol(fn, 1.0, dim=d, name="root+",
                  x_independent=op.x_independent, t_independent=op.t_independent,
                  zero_mode=0.0, dx_step=h4, deriv_fn=make_deriv(+1.0))
    lam2 = Symbol(lambda t, x, xi: -fn(t, x, xi), 1.0, dim=d, name="root-",
                  x_independent=op.x_independent, t_independent=op.t_independent,
                  zero_mode=0.0, dx_step=h4, deriv_fn=make_deriv(-1.0))
    return lam1, lam2


@dataclass
class FirstOrderSystem:
    """The reduced (and optionally diagonalized) first-order system
    D_t + K + R acting on V = (<D> u, (D_t + l1) u).

    `remainder` is R for the bidiagonal system; `diag_remainder` is the
    conjugated R' of the diagonalized system (filled by `diagonalize`).
    `source_sign` tracks that the physical right-hand side f of L u = f
    enters the D-form system as G = (0, -f).
    """

    grid: Grid
    op: HyperbolicOperator
    roots: list
    remainder: SymbolMatrix
    M: SymbolMatrix
    Minv: SymbolMatrix
    compose_terms: int = 3
    diag_remainder: SymbolMatrix = None
    source_sign: float = -1.0

    @property
    def n(self):
        return len(self.roots)

    @property
    def is_multiplier(self):
        flags = [r.x_independent for r in self.roots]
        flags += [e.x_independent for row in self.remainder.entries for e in row]
        if self.diag_remainder is not None:
            flags += [e.x_independent for row in self.diag_remainder.entries for e in row]
        return all(flags)

    def bracket_op(self, power=1.0) -> GridOperator:
        return multiplier_operator(
            self.grid, lambda xi: japanese_bracket(xi) ** power + 0j, order=power,
            name=f"<D>^{power}",
        )

    def initial_fields(self, u0: Field, u1: Field, s: float = 0.0):
        """V(s) = (<D> u0, -i u1 + l1(s) u0) from Cauchy data
        (u(s), d_t u(s))."""
        v1 = self.bracket_op().apply(u0)
        lam_op = GridOperator(self.grid, self.roots[0], name="root+")
        v2 = (-1j) * u1 + lam_op.apply(u0, s, s)
        return [v1, v2]


def _dt_symbol(p: Symbol) -> Symbol:
    out = Symbol(
        lambda t, x, xi: p.derivative_t(t, x, xi),
        p.order,
        dim=p.dim,
        name=f"dt({p.name})",
        x_independent=p.x_independent,
        t_independent=False,
        zero_mode=0.0 if p.zero_mode is not None else None,
        dx_step=p.dx_step,
    )
    if p.t_independent:
        return as_symbol(0.0, p.dim)
    return out


def reduce_to_system(op: HyperbolicOperator, grid: Grid, compose_terms: int = 3,
                     c_min: float = 1e-3, t_samples=(0.0,)) -> FirstOrderSystem:
    """Reduce the n = 2 operator to the bidiagonal first-order system.

    Requires a strictness margin above c_min; degenerate operators are
    pointed to the weak-hyperbolic module.  The remainder entries are

        R_11 = -[l1, <D>] <D>^-1,
        R_21 = S0 <D>^-1,   S0 = i b.xi + c + i dt(l1) - tail(l2 o l1),

    where tail is the operator-composition correction beyond the
    pointwise product; all entries pass the order-zero bound on the
    sample cloud.
    """
    if op.order != 2:
        raise ValueError("reduce_to_system covers n = 2; use the multiplier "
                         "module for constant-coefficient higher orders")
    margin = strictness_margin(op, grid, t_samples=t_samples)
    if margin <= c_min:
        raise DegeneracyError(
            f"strictness margin {margin:.3g} at or below c_min = {c_min:.3g}; "
            "coinciding roots need the weak-hyperbolic regularization",
        )
    d = grid.dim
    lam1, lam2 = root_symbols(op, grid)
    jb = bracket_symbol(d)
    jb_inv = bracket_symbol(d, -1.0)

    # commutator [l1, <D>]: the product in one order is exact because
    # <xi> is x-independent
    comm = compose_pdo(lam1, jb, terms=1) - compose_pdo(jb, lam1, terms=compose_terms)
    comm.order = 0.0
    r11 = (-1.0) * (comm * jb_inv)
    r11.order = 0.0
    r11.name = "R11"

    def b_dot_xi(t, x, xi):
        out = None
        for j in range(d):
            term = op.b[j](t, x) * np.asarray(xi[j])
            out = term if out is None else out + term
        return out

    lower = Symbol(
        lambda t, x, xi: 1j * b_dot_xi(t, x, xi) + op.c(t, x),
        1.0,
        dim=d,
        name="ib.xi+c",
        x_independent=op.x_independent,
        t_independent=op.t_independent,
        dx_step=grid.spacing / 4,
    )
    tail = compose_pdo(lam2, lam1, terms=compose_terms) - lam2 * lam1
    tail.order = 1.0
    s0 = lower + 1j * _dt_symbol(lam1) - tail
    s0.order = 1.0
    r21 = s0 * jb_inv
    r21.order = 0.0
    r21.name = "R21"

    zero = as_symbol(0.0, d)
    remainder = SymbolMatrix([[r11, zero], [r21, zero]])

    cloud = SampleCloud.for_grid(grid)
    M, Minv = diagonalizer([lam1, lam2], c_min=c_min, cloud=cloud, t_samples=t_samples)
    return FirstOrderSystem(grid=grid, op=op, roots=[lam1, lam2], remainder=remainder,
                            M=M, Minv=Minv, compose_terms=compose_terms)


def diagonalize(sys: FirstOrderSystem) -> FirstOrderSystem:
    """Conjugate the reduced system by the root diagonalizer.

    Computes R' = M^-1 (K + R) M + M^-1 D_t M - diag(roots) with
    operator compositions truncated at the system's compose_terms; the
    off-diagonal order-one parts cancel pointwise exactly.
    """
    n = sys.n
    d = sys.grid.dim
    terms = sys.compose_terms
    jb = bracket_symbol(d)
    zero = as_symbol(0.0, d)

    K = [[zero for _ in range(n)] for _ in range(n)]
    for i in range(n):
        K[i][i] = sys.roots[i]
        if i + 1 < n:
            K[i][i + 1] = -1.0 * jb

    KR = [[K[i][j] + sys.remainder.entries[i][j] for j in range(n)] for i in range(n)]

    def matcompose(Arows, Brows):
        out = [[zero for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = None
                for k in range(n):
                    term = compose_pdo(Arows[i][k], Brows[k][j], terms=terms)
                    acc = term if acc is None else acc + term
                out[i][j] = acc
        return out

    inner = matcompose(KR, sys.M.entries)
    conj = matcompose(sys.Minv.entries, inner)

    dtM = [[_dt_symbol(sys.M.entries[i][j]) * (-1j) for j in range(n)] for i in range(n)]
    corr = matcompose(sys.Minv.entries, dtM)

    entries = [[zero for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            e = conj[i][j] + corr[i][j]
            if i == j:
                e = e - sys.roots[i]
            e.order = 0.0
            e.name = f"R'{i}{j}"
            entries[i][j] = e
    return FirstOrderSystem(
        grid=sys.grid, op=sys.op, roots=sys.roots, remainder=sys.remainder,
        M=sys.M, Minv=sys.Minv, compose_terms=terms,
        diag_remainder=SymbolMatrix(entries), source_sign=sys.source_sign,
    )
