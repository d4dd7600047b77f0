import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import B_GAUSS_ORIGIN
from paraharnack.core_fields import Field, Grid
from paraharnack.fractional_ops import (
    FracParams, bilinear_B, carre_du_champ_residual, default_c_norm, discrete_kernel,
    frac_laplacian_quadrature, frac_laplacian_spectral, rescale, scaling_check,
)

S_VALUES = [0.25, 0.5, 0.75]
G2PI = Grid(1, 128, 2 * np.pi)


def gauss(g, width=1.0, shift=0.0):
    return Field.from_function(g, lambda x: np.exp(-(x - shift) ** 2 / (2 * width**2)))


def quiet(fn, *a, **k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*a, **k)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2, 1.5])
def test_params_reject_order_outside_unit_interval(s):
    with pytest.raises(ValueError):
        FracParams(s)


@pytest.mark.parametrize("s", S_VALUES)
def test_params_exponent(s):
    p = FracParams(s)
    assert p.a == 1 - 2 * s and p.c_norm == default_c_norm(s) > 0


def test_default_constant_at_half():
    assert default_c_norm(0.5) == pytest.approx(1 / np.pi, rel=1e-14)


@pytest.mark.parametrize("op", [frac_laplacian_spectral, frac_laplacian_quadrature])
@pytest.mark.parametrize("s", S_VALUES)
def test_constants_annihilated(op, s):
    u = Field.constant(G2PI, 0.7)
    assert np.abs(quiet(op, u, FracParams(s)).values).max() < 1e-12


@pytest.mark.parametrize("s", S_VALUES)
def test_spectral_eigenfunction(s):
    u = Field.from_function(G2PI, np.cos)
    assert np.allclose(quiet(frac_laplacian_spectral, u, FracParams(s)).values, u.values, atol=1e-12)


def test_spectral_symbol_value():
    u = Field.from_function(G2PI, lambda x: np.cos(2 * x))
    out = quiet(frac_laplacian_spectral, u, FracParams(0.5))
    assert np.allclose(out.values, 2 * u.values, atol=1e-12)


@pytest.mark.parametrize("s", S_VALUES)
def test_quadrature_eigenfunction_pins_constant(s):
    u = Field.from_function(G2PI, np.cos)
    out = quiet(frac_laplacian_quadrature, u, FracParams(s))
    assert np.abs(out.values - u.values).max() <= 1e-3


@pytest.mark.parametrize("s", S_VALUES)
def test_quadrature_matches_spectral(grid1, s):
    u = gauss(grid1)
    p = FracParams(s)
    a = frac_laplacian_quadrature(u, p).values
    b = frac_laplacian_spectral(u, p).values
    assert np.abs(a - b).max() <= 1e-3 * np.abs(b).max()


def test_kernel_is_positive_and_symmetric(grid1):
    ker = discrete_kernel(grid1, FracParams(0.5))
    assert np.all(ker[1:] > 0) and np.allclose(ker[1:], ker[1:][::-1])


@pytest.mark.parametrize("mode", ["kernel", "continuum"])
def test_B_of_constant_vanishes(grid1, gaussian, mode):
    c = Field.constant(grid1, 2.0)
    assert np.abs(bilinear_B(c, gaussian, FracParams(0.5), mode).values).max() < 1e-12


@pytest.mark.parametrize("s", [0.25, 0.5])
def test_B_at_origin_against_quadrature_oracle(gaussian, s):
    B = bilinear_B(gaussian, gaussian, FracParams(s), "continuum").values[0]
    assert B[gaussian.grid.N // 2] == pytest.approx(B_GAUSS_ORIGIN[s], rel=1e-4)


def test_B_rejects_mismatched_inputs(gaussian):
    other = gauss(Grid(1, 128, 16.0))
    with pytest.raises(ValueError):
        bilinear_B(gaussian, other, FracParams(0.5))
    two = gaussian.with_values(np.stack([gaussian.values[0]] * 2))
    with pytest.raises(ValueError):
        bilinear_B(gaussian, two, FracParams(0.5))


fields_1d = st.lists(st.floats(-1, 1), min_size=6, max_size=6)


def _smooth(coef, g):
    x = g.x
    return Field(g, np.exp(-x**2 / 4) * sum(c * np.cos(k * x / 2) for k, c in enumerate(coef)))


@pytest.mark.parametrize("mode", ["kernel", "continuum"])
@given(coef=fields_1d, s=st.sampled_from(S_VALUES))
def test_B_nonnegative(mode, coef, s):
    g = Grid(1, 128, 24.0)
    u = _smooth(coef, g)
    B = bilinear_B(u, u, FracParams(s), mode).values
    assert B.min() >= -1e-12 * max(1.0, np.abs(B).max())


@given(a=fields_1d, b=fields_1d)
def test_B_symmetric(a, b):
    g = Grid(1, 64, 24.0)
    u, w = _smooth(a, g), _smooth(b, g)
    p = FracParams(0.5)
    for mode in ("kernel", "continuum"):
        x, y = bilinear_B(u, w, p, mode).values, bilinear_B(w, u, p, mode).values
        assert np.abs(x - y).max() <= 1e-14 * (1 + np.abs(x).max())


def test_carre_du_champ_constant_exact(grid1):
    assert quiet(carre_du_champ_residual, Field.constant(grid1, 3.0), FracParams(0.5)) == 0.0


@given(seed=st.integers(0, 2**31), s=st.sampled_from(S_VALUES))
def test_carre_du_champ_discrete_identity(seed, s):
    g = Grid(1, 64, 8.0)
    u = Field(g, np.random.default_rng(seed).standard_normal(64))
    assert quiet(carre_du_champ_residual, u, FracParams(s)) <= 1e-12


def _mixed_residual(s, L, N):
    u = gauss(Grid(1, N, float(L)))
    return carre_du_champ_residual(u, FracParams(s), "spectral", "continuum")


def test_carre_du_champ_spectral_continuum_bound():
    # the periodic spectral operator carries an image error of order L^(-1-2s)
    assert _mixed_residual(0.5, 64, 1024) <= 1e-3


@pytest.mark.parametrize("s", S_VALUES)
def test_carre_du_champ_spectral_continuum_refines(s):
    r = [_mixed_residual(s, L, 16 * L) for L in (16, 32)]
    assert r[1] < r[0]
    assert np.log2(r[0] / r[1]) == pytest.approx(1 + 2 * s, abs=0.15)


def test_scaling_trivial_cases(gaussian, grid1):
    p = FracParams(0.5)
    assert scaling_check(gaussian, 1.0, p) == 0.0
    assert scaling_check(Field.constant(grid1, 1.0), 0.5, p) == 0.0


@pytest.mark.parametrize("s", S_VALUES)
def test_scaling_half(grid1, s):
    u = gauss(grid1, width=0.5)
    assert scaling_check(u, 0.5, FracParams(s)) <= 1e-3


def test_scaling_rejects_unresolvable(grid1):
    with pytest.raises(ValueError):
        scaling_check(gauss(grid1, width=0.02), 0.5, FracParams(0.5))
    with pytest.raises(ValueError):
        scaling_check(gauss(grid1, width=2.0), 0.5, FracParams(0.5))


def test_rescale_exact_on_band_limited(grid1):
    u = gauss(grid1, width=0.5)
    ul = rescale(u, 0.5)
    assert np.abs(ul.values[0] - np.exp(-(0.5 * grid1.x) ** 2 / 0.5)).max() < 1e-12


@given(st.sampled_from([(0.3, 0.45), (0.1, 0.2), (0.25, 0.5)]))
def test_symbol_homogeneity(pair):
    s1, s2 = pair
    u = gauss(Grid(1, 64, 16.0))
    a = quiet(lambda: frac_laplacian_spectral(frac_laplacian_spectral(u, FracParams(s1)), FracParams(s2)))
    b = quiet(frac_laplacian_spectral, u, FracParams(s1 + s2))
    assert np.abs(a.values - b.values).max() <= 1e-13 * np.abs(b.values).max()
