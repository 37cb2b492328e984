"""Characteristic roots, margins, and the first-order reduction."""

import numpy as np
import pytest

from fiowave.errors import DegeneracyError, NotHyperbolicError
from fiowave.grid import Field, Grid, japanese_bracket
from fiowave.operators import GridOperator
from fiowave.reduction import (
    Coefficient,
    HyperbolicOperator,
    characteristic_roots,
    diagonalize,
    reduce_to_system,
    strictness_margin,
)

G = Grid(dim=1, length=20 * np.pi, points=256)


def sin_operator(amp=1.0, b=None, c=0.0):
    a = Coefficient(
        fn=lambda t, x: 2.0 + amp * np.sin(x[0]),
        dx_fns=[lambda t, x: amp * np.cos(x[0])],
        t_independent=True,
    )
    return HyperbolicOperator(dim=1, a=[[a]], b=b, c=c)


def test_wave_roots():
    op = HyperbolicOperator(dim=2)
    roots = characteristic_roots(op, 0.0, (np.zeros(1), np.zeros(1)),
                                 (np.array([3.0]), np.array([4.0])))
    assert np.allclose([float(r) for r in roots], [-5.0, 5.0])


def test_variable_roots_explicit():
    op = sin_operator()
    roots = characteristic_roots(op, 0.0, (np.array([np.pi / 2]),), (np.array([1.0]),))
    assert np.allclose(sorted(float(r) for r in roots),
                       [-np.sqrt(3.0), np.sqrt(3.0)])


def test_cubic_factored_roots_match_companion():
    # oracle: polynomial evaluation at the returned roots
    table = {((2,), 1): -1.0}  # tau^3 - |xi|^2 tau = (tau - |xi|) tau (tau + |xi|)
    op = HyperbolicOperator(dim=1, order=3, coeff_table=table)
    xi = (np.array([2.5]),)
    roots = characteristic_roots(op, 0.0, (np.zeros(1),), xi)
    vals = sorted(float(r) for r in roots)
    assert np.allclose(vals, [-2.5, 0.0, 2.5], atol=1e-12)
    for r in vals:
        p = r**3 - 2.5**2 * r
        assert abs(p) < 1e-9 * 2.5**3


def test_root_homogeneity():
    op = sin_operator()
    x = (np.array([0.7]),)
    for c in (2.0, 10.0):
        base = characteristic_roots(op, 0.0, x, (np.array([1.3]),))
        scaled = characteristic_roots(op, 0.0, x, (np.array([1.3 * c]),))
        for rb, rs in zip(base, scaled):
            assert float(rs) == pytest.approx(c * float(rb), rel=1e-14)


def test_not_hyperbolic_rejected():
    a = Coefficient(fn=lambda t, x: -1.0 + 0.0 * x[0])
    op = HyperbolicOperator(dim=1, a=[[a]])
    with pytest.raises(NotHyperbolicError):
        characteristic_roots(op, 0.0, (np.zeros(1),), (np.array([1.0]),))


def test_strictness_margins():
    assert strictness_margin(HyperbolicOperator(dim=1), G) == pytest.approx(1.0)
    assert strictness_margin(sin_operator(), G) == pytest.approx(1.0, abs=2e-3)
    # degenerate at t = 0: margin includes the degenerate time
    a = Coefficient(fn=lambda t, x: t**4 + 0.0 * x[0], x_independent=True)
    op = HyperbolicOperator(dim=1, a=[[a]])
    assert strictness_margin(op, G, t_samples=(0.0, 0.5, 1.0)) == pytest.approx(0.0)


def test_degenerate_reduce_points_to_weak():
    a = Coefficient(fn=lambda t, x: t**4 + 0.0 * x[0], x_independent=True)
    op = HyperbolicOperator(dim=1, a=[[a]])
    with pytest.raises(DegeneracyError, match="weak"):
        reduce_to_system(op, G, t_samples=(0.0, 1.0))


def test_wave_reduction_matches_classical_system():
    sys0 = reduce_to_system(HyperbolicOperator(dim=1), G)
    x = (np.zeros(1),)
    xi = (np.array([0.7, 3.0, -11.0]),)
    lam1 = sys0.roots[0].eval(0, x, xi)
    lam2 = sys0.roots[1].eval(0, x, xi)
    assert np.allclose(lam1, np.abs(xi[0]))
    assert np.allclose(lam2, -np.abs(xi[0]))
    # remainder absent
    for i in range(2):
        for j in range(2):
            assert np.max(np.abs(sys0.remainder.entries[i][j].eval(0, x, xi))) == 0.0
    # diagonalizer entry <xi>/(2|xi|)
    m12 = sys0.M.entries[0][1].eval(0, x, xi)
    assert np.allclose(m12, japanese_bracket(xi) / (2 * np.abs(xi[0])))


def test_constant_coefficient_reduction_remainder_small():
    # constant a: roots commute with everything; remainder only from
    # lower-order coefficients
    op = HyperbolicOperator(dim=1, a=[[4.0]], b=[0.3], c=Coefficient.constant(0.1))
    sys0 = reduce_to_system(op, G)
    x = (np.zeros(1),)
    xi = (np.array([2.0, 8.0]),)
    r11 = sys0.remainder.entries[0][0].eval(0, x, xi)
    assert np.max(np.abs(r11)) < 1e-13
    r21 = sys0.remainder.entries[1][0].eval(0, x, xi)
    want = (1j * 0.3 * xi[0] + 0.1) / japanese_bracket(xi)
    assert np.max(np.abs(r21 - want)) < 1e-12


def test_remainder_entries_are_order_zero():
    sysd = diagonalize(reduce_to_system(sin_operator(), G))
    from fiowave.symbols import SampleCloud, seminorm

    cloud = SampleCloud.for_grid(G, radius=2.0)
    for i in range(2):
        for j in range(2):
            val = seminorm(sysd.diag_remainder.entries[i][j], 0, radius=2.0, cloud=cloud)
            assert np.isfinite(val) and val < 2.0


def test_diagonalize_offdiagonal_cancels_pointwise():
    sysd = diagonalize(reduce_to_system(sin_operator(), G))
    x = (G.x_axis[::16][:, None],)
    xi = (np.array([1.0, 4.0, -9.0])[None, :],)
    lam1 = np.real(sysd.roots[0].eval(0.0, x, xi))
    m12 = np.real(sysd.M.entries[0][1].eval(0.0, x, xi))
    br = japanese_bracket(xi)
    # leading off-diagonal of M^-1 K M: m (lam1 - lam2) - <xi> = 0
    offdiag = m12 * (2 * lam1) - br
    assert np.max(np.abs(offdiag)) < 1e-10 * np.max(br)


def test_minv_m_identity_at_operator_level():
    sysd = diagonalize(reduce_to_system(sin_operator(), G))
    rng = np.random.default_rng(0)
    spec = np.zeros(G.shape, complex)
    sel = np.abs(G.k_axis) <= 40
    spec[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    v = Field(G, np.fft.ifftn(spec))
    m_op = GridOperator(G, sysd.M.entries[0][1])
    minv_op = GridOperator(G, sysd.Minv.entries[0][1])
    # for the unitriangular pair, (M Minv)_{12} = m + minv = 0
    out = m_op.apply(v).values + minv_op.apply(v).values
    assert np.max(np.abs(out)) < 1e-12 * np.max(np.abs(v.values))


def test_factorization_oracle():
    # apply both sides of the operator factorization to band-limited
    # modes u = exp(i tau t) g(x): P u vs (D_t + l2)(D_t + l1) u + S0 u.
    # N = 512 leaves sideband headroom: the coefficient 2 + sin(x) has 10
    # periods on this torus, so each application spreads the spectrum in
    # steps of 10 modes with per-harmonic decay exp(-1.32)
    g512 = Grid(dim=1, length=20 * np.pi, points=512)
    op = sin_operator()
    sys0 = reduce_to_system(op, g512, compose_terms=3)
    lam1, lam2 = sys0.roots
    rng = np.random.default_rng(9)
    from fiowave.grid import spectral_derivative
    from fiowave.operators import sobolev_norm
    from fiowave.symbols import from_xi_function

    lam1_op = GridOperator(g512, lam1)
    lam2_op = GridOperator(g512, lam2)
    r21_op = GridOperator(g512, sys0.remainder.entries[1][0])
    br_op = GridOperator(
        g512, from_xi_function(lambda xi: japanese_bracket(xi) + 0j, 1.0, 1)
    )
    a_vals = 2.0 + np.sin(g512.x_axis)
    worst = 0.0
    for trial in range(20):
        spec = np.zeros(g512.shape, complex)
        sel = (np.abs(g512.k_axis) >= 60) & (np.abs(g512.k_axis) <= 100)
        spec[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
        gvals = np.fft.ifftn(spec)
        gfield = Field(g512, gvals)
        tau = rng.uniform(-3, 3)

        # P u / e^{i tau t} = tau^2 g - A(x, D) g  (b = c = 0)
        Pg = tau**2 * gvals + a_vals * spectral_derivative(g512, gvals, 0, order=2)

        # factorization side: (D_t + l2)(D_t + l1) + S0 with
        # (D_t + l1)[e^{i tau t} g] = e^{i tau t}(tau + l1(x,D)) g
        h = lam1_op.apply(gfield).values + tau * gvals
        fact = tau * h + lam2_op.apply(Field(g512, h)).values
        # S0 = R21 <D>; apply via the stored remainder
        fact = fact + r21_op.apply(br_op.apply(gfield)).values

        rel = sobolev_norm(Field(g512, fact - Pg), 0.0) / sobolev_norm(gfield, 2.0)
        worst = max(worst, rel)
    assert worst < 1e-6
