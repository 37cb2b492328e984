"""Degenerate-operator machinery: regularized roots, integral lemmas,
loss-of-derivatives fit."""

import numpy as np
import pytest

from fiowave.grid import Grid, japanese_bracket
from fiowave.multiplier import MultiplierPropagator, MultiplierSolutionOperators
from fiowave.weak import (
    WeakConfigError,
    WeakHypConfig,
    WeakSymbols,
    build_weak_system,
    estimate_delta,
    gap_time_integral,
    integral_inequality,
    verify_lemma_42_43,
)

G = Grid(dim=1, length=8 * np.pi, points=512)


def test_config_validation():
    with pytest.raises(WeakConfigError, match="k - 2"):
        WeakHypConfig(k=2, c=0.1)
    with pytest.raises(WeakConfigError):
        WeakHypConfig(k=4, c=-1.0)
    cfg = WeakHypConfig(k=4, c=0.1)
    assert cfg.rho == pytest.approx(0.25)


def test_symbol_family_relations():
    sym = WeakSymbols(k=4, c=0.1)
    xi = (np.array([0.7, 3.0, -12.0]),)
    for t in (0.0, 0.3, 1.0):
        lam = sym.lam_true(t, xi)
        reg = sym.lam_reg(t, xi)
        # lam~^2 - lam^2 = <xi>^-2 xi^2 >= 0 and lam~ >= lam >= 0
        want = japanese_bracket(xi) ** -2 * xi[0] ** 2
        assert np.allclose(reg**2 - lam**2, want, atol=1e-12)
        assert np.all(reg >= lam) and np.all(lam >= 0)
        # zeta within [1, sqrt(2) <xi>]
        z = sym.zeta(t, xi)
        assert np.all(z >= 1.0)
        assert np.all(z <= np.sqrt(2) * japanese_bracket(xi) + 1e-12)


def test_gap_closed_form_at_t1():
    sym = WeakSymbols(k=4, c=0.1)
    xi = (np.array([5.0]),)
    got = sym.lam_gap(1.0, xi)
    br = japanese_bracket(xi)
    want = br**-2 * 5.0 / (np.sqrt(1 + br**-2) + 1.0)
    assert got[0] == pytest.approx(want[0], rel=1e-13)
    assert got[0] > 0


def test_degenerate_time_separation():
    sym = WeakSymbols(k=4, c=0.1)
    xi = (np.array([0.5, 2.0, 30.0]),)
    # at t = 0 the true roots coincide while the regularized pair is
    # separated by exactly 2|xi|/<xi>
    assert np.all(sym.lam_true(0.0, xi) == 0.0)
    sep = 2 * sym.lam_reg(0.0, xi)
    assert np.allclose(sep, 2 * np.abs(xi[0]) / japanese_bracket(xi), atol=1e-14)


def test_q0_vanishes():
    sym = WeakSymbols(k=4, c=0.1)
    rng = np.random.default_rng(0)
    xi = (rng.uniform(0.5, 50, 100) * rng.choice([-1, 1], 100),)
    worst = 0.0
    for t in rng.uniform(0, 1, 12):
        worst = max(worst, float(np.max(np.abs(sym.q0(t, xi)))))
    assert worst < 1e-14 * 50  # relative to the symbol scale <xi>


def test_gap_time_integral_bound():
    # corrected cap 1 + 2/(k-2): the literature constant 2/(k-2) relies
    # on the defective power-case constant and fails at (k=6, <xi>=2)
    for k in (3, 4, 6):
        cfg = WeakHypConfig(k=k, c=0.1)
        for b in (2.0, 10.0, 100.0):
            val = gap_time_integral(cfg, b)
            assert val <= 1.0 + 2.0 / (k - 2) + 1e-9


def test_integral_inequality_cases():
    r = integral_inequality(3, 1, 2, 10.0)
    assert r.case == "integrable"
    assert r.bound == pytest.approx(0.25 + 0.5)
    assert r.ok
    k = 4
    r = integral_inequality(0, 1 / k, k, 10.0)
    assert r.case == "logarithmic"
    assert r.bound == pytest.approx(1.0 + np.log(10.0 ** (2 / k)))
    assert r.ok
    for b in (2.0, 10.0, 100.0):
        r = integral_inequality(0, 0.5, 4, b)
        assert r.case == "power"
        # bound scale <xi>^(2 (beta delta - 1)/delta) = <xi>^(1/2)
        assert r.bound == pytest.approx(2.0 * b**0.5)
        assert r.ok


def test_integral_inequality_quadrature_vs_closed_form():
    # oracle: the boundary-case integrand has the closed antiderivative
    # (1/k) log(1 + t^k <xi>^2) for (alpha, beta, delta) = (k-1, 1, k)
    k, b = 3, 25.0
    r = integral_inequality(k - 1.0, 1.0, float(k), b)
    want = np.log(1.0 + b**2) / k
    assert r.numeric == pytest.approx(want, rel=1e-8)


def test_lemma_table_passes():
    cfg = WeakHypConfig(k=3, c=0.1)
    rows = verify_lemma_42_43(cfg, 3, [2.0, 10.0, 100.0, 1000.0])
    assert rows and all(r.ok for r in rows)


def test_lemma_depth_guard():
    with pytest.raises(Exception):
        verify_lemma_42_43(WeakHypConfig(k=3, c=0.1), 5, [2.0])


def test_weak_system_matches_mode_ode():
    # oracle: the per-mode fundamental solution of
    # u'' + t^k xi^2 u + i c t^(k rho) xi u = 0
    from scipy.integrate import solve_ivp

    k, c = 4, 0.1
    system, _ = build_weak_system(WeakHypConfig(k=k, c=c), G)
    ops = MultiplierSolutionOperators(MultiplierPropagator(system, levels=14))
    rho = 0.5 - 1.0 / k
    for z in (3.0, 11.0, 37.0):
        def rhs(tt, y):
            u = y[0] + 1j * y[1]
            v = y[2] + 1j * y[3]
            acc = -(tt**k * z**2) * u - 1j * c * tt ** (k * rho) * z * u
            return [v.real, v.imag, acc.real, acc.imag]

        sol = solve_ivp(rhs, [0, 1.0], [0, 0, 1, 0], rtol=1e-10, atol=1e-12)
        truth = sol.y[0, -1] + 1j * sol.y[1, -1]
        ours = complex(ops.source_symbol(1.0, 0.0, (np.array([z]),))[0])
        assert ours == pytest.approx(truth, rel=2e-4)


def test_delta_fit_range_and_monotonicity():
    fits = [estimate_delta(WeakHypConfig(k=4, c=c), G, levels=14).delta_fit
            for c in (0.05, 0.1, 0.2)]
    assert all(0 < f < 1 for f in fits)
    assert fits[0] <= fits[1] + 1e-6 <= fits[2] + 2e-6


def test_delta_fit_small_coupling_floor():
    # with vanishing coupling the residual loss is the turning-point
    # envelope sqrt(t) J_(1/(k+2)): decay xi^-(1/2 + 1/(k+2)), so
    # delta -> 1/2 - 1/(k+2) (1/3 at k = 4), verified against the exact
    # mode solutions in test_weak_system_matches_mode_ode
    fit = estimate_delta(WeakHypConfig(k=4, c=1e-6), G, levels=14)
    assert fit.delta_fit == pytest.approx(1.0 / 3.0, abs=0.06)
