"""Grid and transform contracts: normalization, inversion, Parseval."""

import numpy as np
import pytest

from fiowave.errors import SideMismatchError
from fiowave.grid import (
    Field,
    Grid,
    forward_ft,
    inverse_ft,
    japanese_bracket,
    sample,
    spectral_derivative,
)


def test_grid_invariants():
    g = Grid(dim=1, length=10.0, points=64)
    assert g.spacing * g.points == pytest.approx(g.length)
    k = np.sort(g.k_axis)
    assert k[0] == -32 and k[-1] == 31
    # lattice symmetric about zero apart from the unmatched Nyquist mode
    assert set(-k[k != -32]) <= set(k)


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        Grid(dim=1, length=1.0, points=48)
    with pytest.raises(ValueError):
        Grid(dim=4, length=1.0, points=16)


def test_constant_field_transforms_to_delta():
    g = Grid(dim=1, length=12.0, points=64)
    f = sample(g, lambda x: np.ones_like(x))
    spec = forward_ft(f)
    assert spec.at_frequency([0.0]) == pytest.approx(g.length)
    rest = spec.values.copy()
    rest[g.index_of_xi([0.0])] = 0.0
    assert np.max(np.abs(rest)) < 1e-12 * g.length


def test_plane_wave_transforms_to_spike():
    g = Grid(dim=1, length=12.0, points=64)
    xi1 = 2 * np.pi * 5 / g.length
    f = sample(g, lambda x: np.exp(1j * xi1 * x))
    spec = forward_ft(f)
    assert spec.at_frequency([xi1]) == pytest.approx(g.length)
    off = spec.values.copy()
    off[g.index_of_xi([xi1])] = 0.0
    assert np.max(np.abs(off)) < 1e-10


def test_gaussian_matches_continuum_transform():
    # oracle: the closed-form transform of exp(-x^2/2) is sqrt(2 pi) exp(-xi^2/2)
    g = Grid(dim=1, length=40.0, points=512)
    f = sample(g, lambda x: np.exp(-0.5 * x**2))
    spec = forward_ft(f)
    xi = g.xi_axis
    exact = np.sqrt(2 * np.pi) * np.exp(-0.5 * xi**2)
    assert np.max(np.abs(spec.values - exact)) < 1e-10


def test_roundtrip_identity():
    rng = np.random.default_rng(7)
    g = Grid(dim=1, length=5.0, points=128)
    f = Field(g, rng.standard_normal(g.shape))
    back = inverse_ft(forward_ft(f))
    assert np.max(np.abs(back.values - f.values)) < 1e-12 * np.max(np.abs(f.values))


def test_roundtrip_complex_2d():
    rng = np.random.default_rng(11)
    g = Grid(dim=2, length=7.0, points=64)
    f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    back = inverse_ft(forward_ft(f))
    assert np.max(np.abs(back.values - f.values)) < 1e-12 * np.max(np.abs(f.values))


def test_spike_at_zero_gives_constant():
    g = Grid(dim=1, length=9.0, points=32)
    spec = np.zeros(g.shape, dtype=complex)
    spec[g.index_of_xi([0.0])] = g.length
    f = inverse_ft(Field(g, spec, side="spectral"))
    assert np.max(np.abs(f.values - 1.0)) < 1e-12


def test_side_mismatch_raises():
    g = Grid(dim=1, length=9.0, points=32)
    f = sample(g, lambda x: np.cos(x))
    with pytest.raises(SideMismatchError):
        inverse_ft(f)
    with pytest.raises(SideMismatchError):
        forward_ft(forward_ft(f))


def test_parseval():
    rng = np.random.default_rng(3)
    for dim, n in [(1, 256), (2, 32)]:
        g = Grid(dim=dim, length=11.0, points=n)
        f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
        spec = forward_ft(f)
        lhs = np.sum(np.abs(f.values) ** 2) * g.cell_volume_x()
        rhs = (
            np.sum(np.abs(spec.values) ** 2)
            * g.cell_volume_xi()
            / (2 * np.pi) ** dim
        )
        assert abs(lhs - rhs) < 1e-10 * lhs


def test_real_field_is_hermitian():
    rng = np.random.default_rng(5)
    g = Grid(dim=1, length=4.0, points=64)
    spec = forward_ft(Field(g, rng.standard_normal(g.shape)))
    k = g.k_axis
    for idx in range(1, g.points):
        if k[idx] == -g.points // 2:
            continue
        mirror = np.where(k == -k[idx])[0][0]
        assert spec.values[idx] == pytest.approx(np.conj(spec.values[mirror]), abs=1e-12)


def test_linearity():
    rng = np.random.default_rng(13)
    g = Grid(dim=1, length=6.0, points=64)
    a, b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    f1 = Field(g, rng.standard_normal(g.shape))
    f2 = Field(g, rng.standard_normal(g.shape))
    lhs = forward_ft(a * f1 + b * f2).values
    rhs = a * forward_ft(f1).values + b * forward_ft(f2).values
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(rhs))


def test_japanese_bracket_values():
    assert japanese_bracket((np.array(0.0),)) == pytest.approx(1.0)
    assert japanese_bracket([3.0, 4.0]) == pytest.approx(np.sqrt(26.0))
    assert japanese_bracket([1.0, 0.0, 0.0]) == pytest.approx(np.sqrt(2.0))


def test_spectral_derivative_matches_analytic():
    g = Grid(dim=1, length=2 * np.pi, points=64)
    x = g.x_axis
    d = spectral_derivative(g, np.sin(3 * x).astype(complex), axis=0)
    assert np.max(np.abs(d - 3 * np.cos(3 * x))) < 1e-10


def test_aliasing_drops_when_domain_grows():
    # torus truncation error of a fixed Gaussian shrinks as L and N double
    def tail_error(length, points):
        g = Grid(dim=1, length=length, points=points)
        spec = forward_ft(sample(g, lambda x: np.exp(-0.5 * x**2)))
        xi = g.xi_axis
        exact = np.sqrt(2 * np.pi) * np.exp(-0.5 * xi**2)
        return np.max(np.abs(spec.values - exact))

    coarse = tail_error(12.0, 64)
    fine = tail_error(24.0, 128)
    assert fine < coarse * 1e-3
