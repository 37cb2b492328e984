"""Eikonal phases: closed forms, characteristics, residual oracle."""

import numpy as np
import pytest

from fiowave.eikonal import CharacteristicsPhase, phase_residual, solve_eikonal
from fiowave.errors import CausticWarning, HorizonError
from fiowave.grid import Grid
from fiowave.phases import wave_phase
from fiowave.symbols import Symbol, abs_xi_symbol, from_xi_function

G = Grid(dim=1, length=20 * np.pi, points=256)


def variable_root(amp=1.0):
    s = Symbol(
        lambda t, x, xi: np.sqrt(2.0 + amp * np.sin(x[0])) * np.abs(xi[0]) + 0j,
        1.0,
        dim=1,
    )
    s.dx_step = G.spacing / 4
    return s


def test_wave_phase_closed_form():
    lam = abs_xi_symbol(1)
    phase = solve_eikonal(lam, G, horizon_request=2.0)
    x = (G.x_axis[:8],)
    xi = (np.array([[3.0], [-5.0]]),)
    got = phase.value(1.3, 0.4, x, xi)
    want = x[0] * xi[0] - (1.3 - 0.4) * np.abs(xi[0])
    assert np.max(np.abs(got - want)) < 1e-12
    res = phase_residual(phase, lam, G, [(0.5, 0.0), (1.0, 0.25)])
    assert res < 1e-12


def test_constant_speed_phase():
    c0 = 2.5
    lam = from_xi_function(lambda xi: c0 * np.abs(xi[0]) + 0j, 1.0, 1)
    phase = solve_eikonal(lam, G, horizon_request=1.0)
    x = (np.array([0.7]),)
    xi = (np.array([4.0]),)
    got = phase.value(0.9, 0.2, x, xi)
    want = 0.7 * 4.0 - c0 * 0.7 * 4.0
    assert abs(float(got) - want) < 1e-10


def test_initial_condition_exact():
    lam = variable_root()
    phase = solve_eikonal(lam, G, horizon_request=0.3, n_steps=60)
    x = (G.x_axis,)
    xi = (np.array([[2.0], [-7.0]]),)
    got = phase.value(0.1, 0.1, x, xi)
    assert np.max(np.abs(got - x[0] * xi[0])) == 0.0


def test_characteristics_phase_residual():
    lam = variable_root()
    phase = solve_eikonal(lam, G, horizon_request=0.25, n_steps=120)
    res = phase_residual(phase, lam, G, [(0.1, 0.0), (0.2, 0.0), (0.15, 0.05)])
    assert res < 1e-6


def test_homogeneity_of_ray_phase():
    lam = variable_root()
    phase = solve_eikonal(lam, G, horizon_request=0.2, n_steps=80)
    x = (G.x_axis[::16],)
    for c in (2.0, 10.0):
        base = phase.value(0.15, 0.0, x, (np.array([1.0]),))
        scaled = phase.value(0.15, 0.0, x, (np.array([c]),))
        assert np.max(np.abs(scaled - c * base)) < 1e-8 * c


def test_gradient_consistency():
    # grad_x phi at the lattice equals xi + |xi| w'(x); sanity against a
    # finite difference of the phase in x
    lam = variable_root()
    phase = solve_eikonal(lam, G, horizon_request=0.2, n_steps=120)
    t, s = 0.18, 0.0
    xs = G.x_axis[10:-10:7]
    xi = (np.array([3.0]),)
    dx = 1e-5
    fd = (
        phase.value(t, s, (xs + dx,), xi) - phase.value(t, s, (xs - dx,), xi)
    ) / (2 * dx)
    grad = phase.grad_x(t, s, (xs,), xi)[0]
    assert np.max(np.abs(fd - grad)) < 1e-6 * 3.0


def test_corrupted_phase_detected():
    # the pdo phase x.xi does not solve the eikonal equation for a
    # nonzero root: residual equals max |lambda| / |xi|
    lam = variable_root()
    from fiowave.phases import pdo_phase

    res = phase_residual(pdo_phase(1), lam, G, [(0.1, 0.0)])
    exact = np.sqrt(3.0)  # max of sqrt(2 + sin)
    assert res == pytest.approx(exact, rel=1e-6)


def test_refinement_rate_fourth_order():
    # Richardson: the phase error under RK4 step refinement drops at
    # fourth order; a stiff speed contrast and coarse steps keep the
    # truncation error above the interpolation floor
    lam = variable_root(amp=1.9)
    steps = [3, 6, 12]
    phases = [
        CharacteristicsPhase(G, lam, horizon=0.6, n_steps=n, oversample=4)
        for n in steps
    ]
    ref = CharacteristicsPhase(G, lam, horizon=0.6, n_steps=384, oversample=4)
    x = (G.x_axis,)
    xi = (np.array([1.0]),)
    ref_vals = ref.value(0.6, 0.0, x, xi)
    errs = [np.max(np.abs(p.value(0.6, 0.0, x, xi) - ref_vals)) for p in phases]
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert slope < -3.5


def test_caustic_detection_and_horizon():
    # near-degenerate speed contrast compresses the ray map (in 1d the
    # map Jacobian equals f(x(t))/f(x0) for speed f, so a contrast above
    # 10 pushes it below the 0.1 floor); expects a reduced horizon and a
    # warning, then a HorizonError past it
    lam = variable_root(amp=1.995)
    with pytest.warns(CausticWarning):
        phase = solve_eikonal(lam, G, horizon_request=12.0, n_steps=240)
    assert phase.horizon < 12.0
    with pytest.raises(HorizonError):
        phase.value(phase.horizon + 1.0, 0.0, (G.x_axis,), (np.array([1.0]),))


def test_group_property_x_independent():
    # for lambda(t, xi) the phase is x.xi - int_s^t lambda dtheta
    lam = Symbol(
        lambda t, x, xi: (1.0 + 0.5 * t**2) * np.abs(xi[0]) + 0j,
        1.0,
        dim=1,
        x_independent=True,
    )
    phase = solve_eikonal(lam, G, horizon_request=1.0)
    t, s = 0.8, 0.1
    integral = (t - s) + 0.5 * (t**3 - s**3) / 3
    x = (np.array([1.0]),)
    xi = (np.array([5.0]),)
    got = phase.value(t, s, x, xi)
    want = 5.0 - integral * 5.0
    assert abs(float(got) - want) < 1e-10
