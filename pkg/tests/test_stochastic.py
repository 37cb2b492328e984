"""Noise admissibility, sampling, convolutions, and moment statistics."""

import numpy as np
import pytest

from fiowave.errors import AdmissibilityError
from fiowave.grid import Field, Grid, forward_ft, sample
from fiowave.measures import SpectralMeasure, dalang_integral
from fiowave.stochastic import (
    CoefficientPair,
    check_a1,
    check_a3,
    continuity_modulus,
    pathwise_convolution,
    random_field_solution,
    sample_noise,
    second_moment_bound,
    stochastic_convolution,
)
from fiowave.wave import wave_ops

G = Grid(dim=1, length=20 * np.pi, points=256)
WHITE = SpectralMeasure.white_noise(1)
OPS = wave_ops(G)


# -- dalang integrals -------------------------------------------------------


def test_dalang_d1_lebesgue_is_pi():
    rep = dalang_integral(WHITE, 1.0, eta_probes=[[0.0]])
    assert rep.finite
    assert rep.sup_value == pytest.approx(np.pi, abs=1e-4)


def test_dalang_d3_thresholds():
    mu = SpectralMeasure.white_noise(3)
    assert dalang_integral(mu, 1.0).verdict == "infinite"
    rep = dalang_integral(mu, 2.0)
    assert rep.finite
    # oracle: 4 pi int r^2 (1+r^2)^-2 dr = pi^2
    assert rep.sup_value == pytest.approx(np.pi**2, rel=1e-6)


def test_dalang_riesz_threshold_d2():
    for eta, finite in [(0.5, True), (1.0, True), (1.5, True), (2.5, False)]:
        rep = dalang_integral(SpectralMeasure.riesz(eta, 2), 1.0)
        assert rep.finite == finite, (eta, rep.verdict)


def test_dalang_delta0_always_finite():
    mu = SpectralMeasure.delta0(2)
    for nu in (0.25, 1.0, 3.0):
        rep = dalang_integral(mu, nu)
        assert rep.finite
        assert rep.sup_value == pytest.approx(1.0)  # attained at eta = 0


def test_dalang_monotone_in_nu():
    vals = [dalang_integral(WHITE, nu).sup_value for nu in (0.75, 1.0, 1.5, 2.0)]
    assert all(vals[i + 1] <= vals[i] + 1e-9 for i in range(len(vals) - 1))


def test_dalang_sup_at_origin_for_decreasing_density():
    rep = dalang_integral(SpectralMeasure.bessel(1.0, 1), 1.0)
    per = dict(rep.per_eta)
    assert per[0.0] == pytest.approx(rep.sup_value)
    etas = sorted(per)
    assert all(per[etas[i + 1]] <= per[etas[i]] + 1e-9 for i in range(len(etas) - 1))


def test_condition_shift_equivalence_for_densities():
    # absolutely continuous measures: the shifted and unshifted
    # conditions agree in verdict (catalog cross-check)
    for mu, nu in [(SpectralMeasure.white_noise(1), 1.0),
                   (SpectralMeasure.riesz(1.0, 2), 1.0),
                   (SpectralMeasure.riesz(2.5, 2), 1.0)]:
        shifted = dalang_integral(mu, nu)
        plain = dalang_integral(mu, nu, eta_probes=[[0.0] * mu.dim])
        assert shifted.verdict == plain.verdict


# -- noise sampling ---------------------------------------------------------


def test_noise_is_real_and_deterministic():
    n1 = sample_noise(WHITE, G, 0.01, 8, seed=123)
    n2 = sample_noise(WHITE, G, 0.01, 8, seed=123)
    assert np.array_equal(n1.spectral, n2.spectral)
    inc = n1.increment(3)
    assert np.max(np.abs(inc.values.imag)) < 1e-12 * np.max(np.abs(inc.values.real))
    n3 = sample_noise(WHITE, G, 0.01, 8, seed=124)
    assert not np.array_equal(n1.spectral, n3.spectral)


def test_noise_mode_variance_matches_measure():
    dt, n_steps = 0.02, 256
    noise = sample_noise(WHITE, G, dt, n_steps, seed=5)
    w = WHITE.lattice_weights(G)
    scale = dt * w * G.length**2
    emp = np.mean(np.abs(noise.spectral) ** 2, axis=0)
    ratio = emp[1:] / scale[1:]
    assert abs(np.mean(ratio) - 1.0) < 4 / np.sqrt(n_steps)


def test_noise_physical_variance():
    dt, n_steps = 0.05, 400
    noise = sample_noise(WHITE, G, dt, n_steps, seed=6)
    incs = np.stack([noise.increment(j).values.real for j in range(n_steps)])
    target = dt * np.sum(WHITE.lattice_weights(G))
    emp = np.var(incs)
    se = target * np.sqrt(2.0 / incs.size)
    assert abs(emp - target) < 5 * se


def test_delta0_noise_is_spatially_constant():
    mu = SpectralMeasure.delta0(1, mass=2.0)
    noise = sample_noise(mu, G, 0.1, 50, seed=7)
    incs = np.stack([noise.increment(j).values.real for j in range(50)])
    assert np.max(np.std(incs, axis=1)) < 1e-12
    emp = np.var(incs[:, 0])
    # variance dt * mass
    assert emp == pytest.approx(0.1 * 2.0, rel=0.5)


def test_discrete_isometry_simple_process():
    # E[(g . M)_t^2] = |g|_0^2 for g = 1_(a,b] 1_A: MC within 3 SE
    rng_paths = 4000
    dt, n_steps = 0.05, 20
    a_idx, b_idx = 4, 12          # time window (0.2, 0.6]
    sel = np.abs(G.x_axis) < 5.0  # spatial set A
    ind = np.zeros(G.shape)
    ind[sel] = 1.0
    spec_ind = forward_ft(Field(G, ind)).values
    w = WHITE.lattice_weights(G)
    target = (b_idx - a_idx) * dt * np.sum(np.abs(spec_ind) ** 2 * w)
    vals = np.empty(rng_paths)
    h = G.cell_volume_x()
    for p in range(rng_paths):
        noise = sample_noise(WHITE, G, dt, n_steps, seed=99, path=p)
        acc = 0.0
        for j in range(a_idx, b_idx):
            acc += np.sum(noise.increment(j).values.real * ind) * h
        vals[p] = acc
    emp = np.var(vals)
    se = emp * np.sqrt(2.0 / rng_paths)
    assert abs(emp - target) < 3 * se
    assert abs(np.mean(vals)) < 3 * np.sqrt(emp / rng_paths)


# -- convolutions ----------------------------------------------------------


def test_stochastic_convolution_zero_sigma():
    noise = sample_noise(WHITE, G, 0.05, 20, seed=1)
    val = stochastic_convolution(OPS, CoefficientPair(sigma=0.0), noise, 1.0, [0.0])
    assert val == 0.0


def test_stochastic_convolution_variance_additivity():
    # disjoint windows contribute independent variance
    dt, n_steps = 0.05, 20
    coeff = CoefficientPair(sigma=1.0)
    n_paths = 1200
    full = np.empty(n_paths)
    first = np.empty(n_paths)
    second = np.empty(n_paths)
    for p in range(n_paths):
        noise = sample_noise(WHITE, G, dt, n_steps, seed=11, path=p)
        full[p] = stochastic_convolution(OPS, coeff, noise, 1.0, [0.0])
        half = NoiseHalf(noise, 10)
        first[p] = stochastic_convolution(OPS, coeff, half.first, 1.0, [0.0])
        second[p] = stochastic_convolution(OPS, coeff, half.second_as_full, 1.0, [0.0])
    lhs = np.var(full)
    rhs = np.var(first) + np.var(second)
    se = lhs * np.sqrt(2.0 / n_paths)
    assert abs(lhs - rhs) < 4 * se


class NoiseHalf:
    """Split a noise path into complementary half-windows (test helper)."""

    def __init__(self, noise, cut):
        import copy

        self.first = copy.copy(noise)
        self.first.spectral = noise.spectral.copy()
        self.first.spectral[cut:] = 0.0
        self.second_as_full = copy.copy(noise)
        self.second_as_full.spectral = noise.spectral.copy()
        self.second_as_full.spectral[:cut] = 0.0


def test_pathwise_convolution_zero():
    assert pathwise_convolution(OPS, CoefficientPair(gamma=0.0), 1.0, [0.0]) == 0.0


def test_pathwise_convolution_sine_mode():
    coeff = CoefficientPair(gamma=lambda s, x: np.sin(x[0]), gamma_spatial=True)
    probe = G.x_axis[96]
    got = pathwise_convolution(OPS, coeff, 1.0, [probe], quad_nodes=10, panels=6)
    want = (1 - np.cos(1.0)) * np.sin(probe)
    assert got == pytest.approx(want, abs=1e-9)


def test_pathwise_convolution_constant_zero_mode():
    # gamma = 1 rides the zero mode: int_0^t (t-s) ds = t^2/2
    coeff = CoefficientPair(gamma=1.0)
    got = pathwise_convolution(OPS, coeff, 1.0, [0.0])
    assert got == pytest.approx(0.5, abs=1e-10)


# -- moments and admissibility ----------------------------------------------


def test_second_moment_closed_form():
    mb = second_moment_bound(OPS, CoefficientPair(sigma=1.0), WHITE, 1.0, dt=1 / 64)
    # untruncated pi/2; lattice truncation removes ~2/ximax
    assert mb.continuum_value == pytest.approx(np.pi / 2, rel=0.06)
    assert mb.discrete_target == pytest.approx(np.pi / 2, rel=0.06)
    assert 0 < mb.truncated_fraction < 0.1


def test_second_moment_zero_measure():
    zero = SpectralMeasure.from_radial_density(lambda r: np.zeros_like(r), 1, "null")
    mb = second_moment_bound(OPS, CoefficientPair(sigma=1.0), zero, 1.0)
    assert mb.continuum_value == 0.0


def test_mc_variance_within_3se():
    coeff = CoefficientPair(sigma=1.0)
    dt, t = 1 / 64, 1.0
    n_paths = 3000
    vals = np.empty(n_paths)
    for p in range(n_paths):
        noise = sample_noise(WHITE, G, dt, 64, seed=31, path=p)
        vals[p] = stochastic_convolution(OPS, coeff, noise, t, [0.0])
    mb = second_moment_bound(OPS, coeff, WHITE, t, dt=dt)
    emp = np.var(vals)
    se = emp * np.sqrt(2.0 / n_paths)
    assert abs(emp - mb.discrete_target) < 3 * se
    assert abs(np.mean(vals)) < 3 * np.sqrt(emp / n_paths)
    # the bound dominates the estimator
    assert mb.continuum_value + 3 * se > emp * (1 - 3 * np.sqrt(2 / n_paths))


def test_check_a1_scalar_wave():
    rep = check_a1(OPS, CoefficientPair(sigma=1.0), WHITE, 1.0)
    assert rep.finite
    # closed form pi T^2 / 2 at T = 1 (value includes a tail majorant)
    assert rep.value == pytest.approx(np.pi / 2, rel=0.25)


def test_check_a1_spatial_gaussian():
    coeff = CoefficientPair(sigma=lambda s, x: np.exp(-x[0] ** 2), sigma_spatial=True)
    rep = check_a1(OPS, coeff, WHITE, 1.0)
    assert rep.finite
    mb = second_moment_bound(OPS, coeff, WHITE, 1.0)
    assert rep.value >= 0 and np.isfinite(mb.bound_value)


def test_check_a1_riesz_violation():
    mu = SpectralMeasure.riesz(2.5, 2)
    g2 = Grid(dim=2, length=8 * np.pi, points=32)
    ops2 = wave_ops(g2)
    coeff = CoefficientPair(sigma=lambda s, x: np.exp(-x[0] ** 2 - x[1] ** 2),
                            sigma_spatial=True)
    rep = check_a1(ops2, coeff, mu, 1.0, refine_check=False)
    assert not rep.finite


def test_check_a3_wave():
    rep = check_a3(OPS, CoefficientPair(gamma=1.0), 1.0)
    assert rep.finite
    # int_0^T (T-s)^2 ds = T^3/3
    assert rep.value == pytest.approx(1.0 / 3.0, rel=1e-6)


def test_check_a3_comb_violated():
    # a lattice comb has no absolutely summable transform: the l1 mass
    # grows under refinement
    def comb(s, x):
        return (np.abs(np.mod(x[0], 1.0)) < G.spacing / 2).astype(float) / G.spacing

    coeff = CoefficientPair(gamma=comb, gamma_spatial=True)
    rep = check_a3(OPS, coeff, 1.0)
    assert not rep.finite


def test_check_a3_spatial_smooth():
    coeff = CoefficientPair(gamma=lambda s, x: np.exp(-x[0] ** 2) * s,
                            gamma_spatial=True)
    rep = check_a3(OPS, coeff, 1.0)
    assert rep.finite


def test_continuity_modulus_wave():
    out = continuity_modulus(OPS, CoefficientPair(sigma=1.0), WHITE, 1.0)
    vals = [v for _, v in out["table"]]
    assert out["verdict"] == "consistent"
    # Lipschitz kernel: the modulus decays like h^2 in this square form
    assert vals[-1] < vals[0] * 0.1


def test_continuity_modulus_constant_kernel():
    class Frozen:
        grid = G
        horizon = np.inf
        source_order = -1.0

        def source_symbol(self, t, s, xi):
            from fiowave.wave import fundamental_ft

            return fundamental_ft(0.7, xi) + 0j

    out = continuity_modulus(Frozen(), CoefficientPair(sigma=1.0), WHITE, 1.0)
    assert all(v == 0.0 for _, v in out["table"])


# -- full random-field driver ----------------------------------------------


def test_random_field_deterministic_case():
    u0 = sample(G, lambda x: np.sin(x))
    u1 = Field(G, np.zeros(G.shape, complex))
    out = random_field_solution(
        OPS, u0, u1, CoefficientPair(sigma=0.0, gamma=0.0), WHITE,
        t=0.75, x_probe=[G.x_axis[32]], n_paths=16, seed=3,
    )
    assert out.variance == pytest.approx(0.0, abs=1e-20)
    want = np.cos(0.75) * np.sin(G.x_axis[32])
    assert out.mean == pytest.approx(want, abs=1e-9)


def test_random_field_reproducible():
    u0 = Field(G, np.zeros(G.shape, complex))
    coeff = CoefficientPair(sigma=1.0)
    kw = dict(t=0.5, x_probe=[0.0], n_paths=4, seed=77, dt=1 / 32)
    a = random_field_solution(OPS, u0, u0, coeff, WHITE, **kw)
    b = random_field_solution(OPS, u0, u0, coeff, WHITE, **kw)
    assert np.array_equal(a.samples, b.samples)


def test_random_field_threads_match_serial():
    u0 = Field(G, np.zeros(G.shape, complex))
    coeff = CoefficientPair(sigma=1.0)
    kw = dict(t=0.5, x_probe=[0.0], n_paths=6, seed=78, dt=1 / 32)
    a = random_field_solution(OPS, u0, u0, coeff, WHITE, threads=1, **kw)
    b = random_field_solution(OPS, u0, u0, coeff, WHITE, threads=2, **kw)
    assert np.allclose(a.samples, b.samples)


def test_admissibility_gate_raises():
    mu = SpectralMeasure.riesz(2.5, 2)
    g2 = Grid(dim=2, length=8 * np.pi, points=32)
    ops2 = wave_ops(g2)
    u0 = Field(g2, np.zeros(g2.shape, complex))
    coeff = CoefficientPair(sigma=lambda s, x: np.exp(-x[0] ** 2 - x[1] ** 2),
                            sigma_spatial=True)
    with pytest.raises(AdmissibilityError):
        random_field_solution(ops2, u0, u0, coeff, mu, t=0.5,
                              x_probe=[0.0, 0.0], n_paths=2, seed=1, dt=1 / 16)
    out = random_field_solution(ops2, u0, u0, coeff, mu, t=0.5,
                                x_probe=[0.0, 0.0], n_paths=2, seed=1, dt=1 / 16,
                                override_admissibility=True)
    assert out.n_paths == 2
