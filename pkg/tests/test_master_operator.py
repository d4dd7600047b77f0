import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gamma, kv

from oracles import C_GAUSS
from paraharnack import master_operator as mo
from paraharnack.core_fields import Grid, SpaceTimeField
from paraharnack.fractional_ops import FracParams
from paraharnack.master_operator import (
    AccuracyError, EstimationError, ExtensionStack, bilinear_C, extension_build, extension_kernel,
    heat_operator, hs_apply, hs_solve, measured_order, neumann_trace_estimate, tau_range,
    trace_errors, weighted_residual,
)

S_VALUES = [0.25, 0.5, 0.75]
G = Grid(1, 64, 16.0, 64, 4.0, -2.0)
PERIOD = G.dt * G.Nt_total


def bump(g=G, c=0.0, w=1.0):
    return SpaceTimeField.from_function(g, lambda t, x: np.exp(-(x - c) ** 2 / (2 * w**2) - t**2 / 0.1))


def wave(k, j, g=G):
    return SpaceTimeField.from_function(
        g, lambda t, x: np.cos(2 * np.pi * (k * x / g.L + j * t / PERIOD)), margin="extend")


def quiet(fn, *a, **k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*a, **k)


# -- H^s -----------------------------------------------------------------------

@pytest.mark.parametrize("s", S_VALUES)
def test_constant_annihilated(s):
    out = quiet(hs_apply, SpaceTimeField.constant(G, 2.0), s)
    assert np.abs(out.values).max() < 1e-13


@pytest.mark.parametrize("s", S_VALUES)
@pytest.mark.parametrize("k,j", [(1, 1), (2, -3), (0, 2), (3, 0)])
def test_plane_wave_symbol(s, k, j):
    lam = (2 * np.pi * k / G.L) ** 2 + 2j * np.pi * j / PERIOD
    theta = lambda t, x: 2 * np.pi * (k * x / G.L + j * t / PERIOD)
    expected = SpaceTimeField.from_function(G, lambda t, x: np.real(lam**s * np.exp(1j * theta(t, x))),
                                            margin="extend")
    out = quiet(hs_apply, wave(k, j), s)
    assert np.abs(out.values - expected.values).max() < 1e-12


def test_unit_order_is_heat_operator():
    F = bump()
    a, b = hs_apply(F, 1.0).values, heat_operator(F).values
    assert np.abs(a - b).max() <= 1e-13 * np.abs(b).max()


@given(st.sampled_from([(0.3, 0.45), (0.25, 0.25), (0.1, 0.8), (0.5, 0.5)]))
def test_semigroup(pair):
    F = bump()
    a = quiet(lambda: hs_apply(hs_apply(F, pair[0]), pair[1])).values
    b = hs_apply(F, sum(pair)).values
    assert np.abs(a - b).max() <= 1e-13 * np.abs(b).max()


def test_principal_branch():
    lam = np.array([1 + 1e6j, 1 - 1e6j, 1e-3j])
    vals = mo.hs_symbol(0.5)(lam.imag / (2 * np.pi), np.sqrt(lam.real) / (2 * np.pi))
    assert np.all(vals.real >= 0)


@pytest.mark.parametrize("s", S_VALUES)
def test_solve_plane_wave(s):
    k, j = 2, 1
    lam = (2 * np.pi * k / G.L) ** 2 + 2j * np.pi * j / PERIOD
    theta = lambda t, x: 2 * np.pi * (k * x / G.L + j * t / PERIOD)
    expected = SpaceTimeField.from_function(G, lambda t, x: np.real(lam**-s * np.exp(1j * theta(t, x))),
                                            margin="extend")
    assert np.abs(hs_solve(wave(k, j), s).values - expected.values).max() < 1e-12


def test_solve_constant_projected_out():
    out, mean = hs_solve(SpaceTimeField.constant(G, 3.0), 0.5, return_mean=True)
    assert np.abs(out.values).max() == 0.0 and mean[0] == pytest.approx(3.0)


@pytest.mark.parametrize("s", S_VALUES)
def test_solve_round_trip(s):
    g = bump()
    back = quiet(hs_apply, hs_solve(g, s), s).values
    assert np.abs(back - (g.values - g.values.mean())).max() <= 1e-13 * np.abs(g.values).max()


def test_solve_of_nonnegative_bump_is_nearly_nonnegative():
    g = SpaceTimeField.from_function(
        Grid(1, 256, 16.0, 128, 2.0, -1.25),
        lambda t, x: np.exp(-x**2 / 0.32 - (t + 0.6) ** 2 / 0.045))
    out = hs_solve(g, 0.5)
    norm = np.abs(g.values).max()
    assert out.window.min() >= -1e-6 * norm


# -- extension -------------------------------------------------------------------

@pytest.mark.parametrize("s", S_VALUES)
@pytest.mark.parametrize("y", [1e-4, 1e-2, 0.3])
def test_extension_kernel_against_bessel_oracle(s, y):
    lam = np.array([0.5, 3.0 + 40j, 1e-3 - 2j, 100j, 1e3 + 1e3j])
    lo, hi = tau_range(G, y)
    phi, bound = extension_kernel(y, lam, s, lo, hi)
    z = y * np.sqrt(lam)
    ref = 2 / gamma(s) * (z / 2) ** s * kv(s, z)
    assert bound <= 1e-10
    assert np.abs(phi - ref).max() <= 1e-10


def test_extension_kernel_reports_truncation():
    _, bound = extension_kernel(0.1, np.array([1e-3 + 0j]), 0.5, 1e-6, 1e-2)
    assert bound > 1e-3


@pytest.mark.parametrize("s", S_VALUES)
def test_extension_of_one(s):
    st_ = quiet(extension_build, SpaceTimeField.constant(G, 1.0), FracParams(s), [1e-3, 0.1, 1.0, 5.0])
    assert max(np.abs(sl.values - 1).max() for sl in st_.slices) <= 1e-10


@pytest.mark.parametrize("s", S_VALUES)
def test_trace_order(s):
    ys = np.geomspace(1e-4, 1e-2, 6)
    st_ = extension_build(bump(), FracParams(s), ys)
    err = trace_errors(st_)
    assert np.all(np.diff(err) > 0)
    assert measured_order(ys, err) >= min(1, 2 * s) - 0.1


def test_weighted_residual_halves():
    res = []
    for dy in (0.05, 0.025):
        st_ = extension_build(bump(), FracParams(0.5), np.arange(0.2, 0.6 + 1e-9, dy),
                              check_first=False)
        r, scale = weighted_residual(st_)
        res.append(np.abs(r).max() / scale)
    assert res[0] <= 1e-2 and res[1] <= res[0] / 2


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_extension_linear(a, b):
    ys = [1e-3, 1e-1]
    p = FracParams(0.5)
    v, w = bump(), bump(c=1.0, w=0.7)
    lhs = extension_build(v * a + w * b, p, ys)
    sv, sw = extension_build(v, p, ys), extension_build(w, p, ys)
    for L_, x, y in zip(lhs.slices, sv.slices, sw.slices):
        assert np.abs(L_.values - (a * x.values + b * y.values)).max() <= 1e-14 * (1 + abs(a) + abs(b))


@pytest.mark.parametrize("levels,msg", [([0.1, 0.05], "increasing"), ([0.02, 0.1], "0.01"),
                                        ([0.0, 0.1], "positive")])
def test_extension_level_preconditions(levels, msg):
    with pytest.raises(ValueError):
        extension_build(bump(), FracParams(0.5), levels)


def test_extension_accuracy_error(monkeypatch):
    monkeypatch.setattr(mo, "tau_range", lambda grid, y: (y**2 / 400, 1e-3))
    with pytest.raises(AccuracyError):
        extension_build(bump(), FracParams(0.5), [1e-3, 0.5])


def test_stack_round_trip(tmp_path):
    st_ = extension_build(bump(), FracParams(0.25), [1e-3, 1e-2])
    st_.save(tmp_path / "stack")
    back = ExtensionStack.load(tmp_path / "stack")
    assert np.array_equal(back.y_levels, st_.y_levels) and back.p == st_.p
    assert all(np.array_equal(a.values, b.values) for a, b in zip(back.slices, st_.slices))


@pytest.mark.parametrize("s", S_VALUES)
def test_neumann_constant_probe_independent(s):
    p = FracParams(s)
    c1, sp1 = quiet(neumann_trace_estimate, wave(1, 1), p)
    c2, sp2 = quiet(neumann_trace_estimate, wave(3, -2), p)
    c3, sp3 = neumann_trace_estimate(bump(), p)
    assert min(c1, c2, c3) > 0
    assert max(sp1, sp2, sp3) <= 0.02
    assert max(c1, c2, c3) - min(c1, c2, c3) <= 0.02 * c1


def test_neumann_constant_homogeneous():
    p = FracParams(0.5)
    assert neumann_trace_estimate(bump() * 3, p)[0] == pytest.approx(
        neumann_trace_estimate(bump(), p)[0], rel=1e-12)


def test_neumann_degenerate_probes():
    with pytest.raises(EstimationError):
        quiet(neumann_trace_estimate, SpaceTimeField.constant(G, 1.0), FracParams(0.5))


# -- C(u, u) -----------------------------------------------------------------------

def test_C_of_constant_vanishes():
    out = bilinear_C(SpaceTimeField.constant(Grid(1, 64, 16.0, 16, 1.0), [1.0, 2.0]))
    assert np.abs(out.values).max() < 1e-12


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_C_nonnegative(coef):
    g = Grid(1, 64, 16.0, 16, 1.0)
    u = SpaceTimeField.from_function(
        g, lambda t, x: np.exp(-x**2 / 2) * sum(c * np.cos(k * (x + t)) for k, c in enumerate(coef)))
    C = bilinear_C(u).window
    assert C.min() >= -1e-10 * max(1.0, np.abs(C).max())


@pytest.mark.parametrize("N", [128, 256])
def test_C_static_gaussian_against_semi_analytic_oracle(N):
    g = Grid(1, N, 16.0, 16, 1.0)
    u = SpaceTimeField.from_function(g, lambda t, x: np.exp(-x**2 / 2) + 0 * t)
    C = bilinear_C(u).window[0, 8]
    for x, ref in C_GAUSS.items():
        assert C[np.argmin(np.abs(g.x - x))] == pytest.approx(ref, rel=1e-3)
