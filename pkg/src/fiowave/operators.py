"""Application of pseudo-differential and Fourier integral operators to
grid fields, plus the Schwartz-kernel Fourier-transform identity.

The discrete action is

    (P v)(x) = (2pi)^-d sum_xi exp(i phi(t,s,x,xi)) p(t,x,xi) (Fv)(xi) (2pi/L)^d.

Three strategies: a multiplier fast path (x-independent symbol and
x-linear phase, a few FFTs), a separable path (configured decomposition
p = sum_j a_j(x) b_j(xi), rank-many FFTs), and the dense path (explicit
x-by-xi matrix, O(N^2d), chunked over x rows).  Dense matrices are
cached per (t, s) because propagator quadratures revisit time pairs.
"""

from __future__ import annotations

import numpy as np

from .errors import EvaluationError
from .grid import (PHYSICAL, Field, Grid, _checker_phase, forward_ft,
                   inverse_ft, japanese_bracket)
from .phases import PhaseFunction, pdo_phase
from .symbols import Symbol, as_symbol

_DENSE_CACHE_SLOTS = 240


class GridOperator:
    """A symbol/phase pair bound to a grid.

    The pair (p, x.xi) is a pseudo-differential operator; a nontrivial
    phase makes it a Fourier integral operator.  `separable_terms`, when
    given, is a list of (a_j, b_j) callables with p(t,x,xi) =
    sum_j a_j(t,x) b_j(xi) (rank at most 8) enabling the FFT fast path
    for x-dependent symbols with x-linear phases.
    """

    def __init__(self, grid: Grid, symbol, phase: PhaseFunction | None = None,
                 separable_terms=None, strategy: str = "auto", name: str = ""):
        self.grid = grid
        self.symbol = as_symbol(symbol, grid.dim) if not isinstance(symbol, Symbol) else symbol
        self.symbol.dx_step = grid.spacing / 4.0
        self.phase = phase if phase is not None else pdo_phase(grid.dim)
        if separable_terms is not None and len(separable_terms) > 8:
            raise ValueError("separable decompositions are capped at rank 8")
        self.separable_terms = separable_terms
        self.strategy = strategy
        self.name = name
        self._dense_cache: dict = {}

    # -- classification -------------------------------------------------

    @property
    def is_pdo(self) -> bool:
        return getattr(self.phase, "is_pdo", False)

    @property
    def is_multiplier(self) -> bool:
        return self.symbol.x_independent and self.phase.is_x_linear

    def _pick_strategy(self) -> str:
        if self.strategy != "auto":
            return self.strategy
        if self.is_multiplier:
            return "multiplier"
        if self.separable_terms is not None and self.phase.is_x_linear:
            return "separable"
        return "dense"

    # -- evaluation helpers ----------------------------------------------

    def multiplier_values(self, t, s, xi=None) -> np.ndarray:
        """Total spectral factor exp(i psi) p(t, xi) for multiplier ops,
        on the lattice by default or on caller-supplied frequencies."""
        if not self.is_multiplier:
            raise EvaluationError(f"operator {self.name} is not a multiplier")
        g = self.grid
        xi = g.xi_mesh() if xi is None else xi
        x0 = tuple(np.zeros(1) for _ in range(g.dim))
        sym = self.symbol.eval(t, x0, xi)
        psi = self.phase.psi(t, s, xi) if hasattr(self.phase, "psi") else 0.0
        vals = np.exp(1j * np.asarray(psi)) * sym
        return vals

    def _dense_matrix(self, t, s) -> np.ndarray:
        # a PDO matrix depends on t only; FIO matrices on the time pair
        key = float(t) if self.is_pdo else (float(t), float(s))
        if key in self._dense_cache:
            return self._dense_cache[key]
        g = self.grid
        n = g.size
        xmesh = g.x_mesh()
        xflat = tuple(np.broadcast_to(c, g.shape).reshape(n, 1) for c in xmesh)
        ximesh = g.xi_mesh()
        xiflat = tuple(np.broadcast_to(c, g.shape).reshape(1, n) for c in ximesh)
        mat = np.empty((n, n), dtype=complex)
        chunk = max(1, 2**22 // n)
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            xs = tuple(c[lo:hi] for c in xflat)
            phi = self.phase.value(t, s, xs, xiflat)
            sym = self.symbol.eval(t, xs, xiflat)
            block = np.exp(1j * phi) * sym
            if not np.all(np.isfinite(block)):
                bad = np.argwhere(~np.isfinite(block))[0]
                raise EvaluationError(
                    f"non-finite phase/symbol for operator {self.name} at "
                    f"x index {lo + bad[0]}, xi index {bad[1]} (t={t}, s={s})"
                )
            mat[lo:hi, :] = np.broadcast_to(block, (hi - lo, n))
        if len(self._dense_cache) >= _DENSE_CACHE_SLOTS:
            self._dense_cache.pop(next(iter(self._dense_cache)))
        self._dense_cache[key] = mat
        return mat

    # -- application -----------------------------------------------------

    def apply(self, v: Field, t: float = 0.0, s: float = 0.0) -> Field:
        """Apply the operator to a physical-side field."""
        v.require_side(PHYSICAL)
        if v.grid != self.grid:
            raise EvaluationError("field lives on a different grid")
        out = self.apply_block(v.values[..., None], t, s)
        return Field(self.grid, out[..., 0], PHYSICAL)

    def apply_block(self, block: np.ndarray, t: float = 0.0, s: float = 0.0) -> np.ndarray:
        """Apply to a block of fields stacked along the last axis.

        `block` has shape grid.shape + (P,); the operator matrix and the
        FFTs are shared across the P columns.
        """
        g = self.grid
        axes = tuple(range(g.dim))
        checker = _checker_phase(g)[..., None]
        spec = np.fft.fftn(block, axes=axes) * checker * g.cell_volume_x()
        strategy = self._pick_strategy()
        weight = g.cell_volume_xi() / (2 * np.pi) ** g.dim  # = L^-d

        def back(spec_out):
            return np.fft.ifftn(spec_out * checker, axes=axes) / g.cell_volume_x()

        if strategy == "multiplier":
            vals = self.multiplier_values(t, s)
            return back(np.broadcast_to(vals, g.shape)[..., None] * spec)
        if strategy == "separable":
            xi = g.xi_mesh()
            x = g.x_mesh()
            psi = self.phase.psi(t, s, xi) if hasattr(self.phase, "psi") else 0.0
            carrier = np.exp(1j * np.asarray(psi))
            acc = np.zeros(block.shape, dtype=complex)
            for a_fn, b_fn in self.separable_terms:
                piece = back(np.broadcast_to(carrier * b_fn(xi), g.shape)[..., None] * spec)
                acc = acc + np.broadcast_to(a_fn(t, x), g.shape)[..., None] * piece
            return acc
        mat = self._dense_matrix(t, s)
        out = (mat @ spec.reshape(g.size, -1)) * weight
        return out.reshape(block.shape)

    def kernel_ft(self, x_point, eta, t: float = 0.0, s: float = 0.0) -> complex:
        """Fourier transform in the second argument of the Schwartz
        kernel at (x, eta): exp(i phi(t,s,x,-eta)) p(t,x,-eta)."""
        d = self.grid.dim
        x = tuple(np.asarray([float(c)]) for c in np.atleast_1d(x_point))
        m_eta = tuple(np.asarray([-float(c)]) for c in np.atleast_1d(eta))
        if len(x) != d or len(m_eta) != d:
            raise ValueError("point dimensions do not match the grid")
        phi = self.phase.value(t, s, x, m_eta)
        sym = self.symbol.eval(t, x, m_eta)
        return complex((np.exp(1j * phi) * sym).reshape(-1)[0])


def identity_operator(grid: Grid) -> GridOperator:
    return GridOperator(grid, as_symbol(1.0, grid.dim), pdo_phase(grid.dim), name="identity")


def multiplier_operator(grid: Grid, fn, order=0.0, name="", zero_mode=None) -> GridOperator:
    """PDO with an x-independent symbol fn(xi_tuple)."""
    from .symbols import from_xi_function

    return GridOperator(grid, from_xi_function(fn, order, grid.dim, name=name,
                                               zero_mode=zero_mode), name=name)


def sobolev_norm(v: Field, r: float = 0.0) -> float:
    """H^r lattice norm ((2pi)^-d sum <xi>^2r |Fv|^2 (2pi/L)^d)^(1/2)."""
    spec = forward_ft(v) if v.side == PHYSICAL else v
    g = v.grid
    w = japanese_bracket(g.xi_mesh()) ** (2.0 * r)
    weight = g.cell_volume_xi() / (2 * np.pi) ** g.dim
    return float(np.sqrt(np.sum(w * np.abs(spec.values) ** 2) * weight))


def assemble_kernel_rows(op: GridOperator, t: float = 0.0, s: float = 0.0) -> np.ndarray:
    """Schwartz kernel K(x, y) assembled column by column by applying the
    operator to shifted discrete deltas (the formula-free route; used as
    the independent oracle for kernel_ft)."""
    g = op.grid
    n = g.size
    mat = np.empty((n, n), dtype=complex)
    inv_h = 1.0 / g.cell_volume_x()
    for j in range(n):
        delta = np.zeros(n, dtype=complex)
        delta[j] = 1.0
        col = op.apply(Field(g, delta.reshape(g.shape)), t, s)
        mat[:, j] = col.values.reshape(-1) * inv_h
    return mat
