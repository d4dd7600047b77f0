import numpy as np
import pytest
from hypothesis import given, strategies as st

from paraharnack.core_fields import Field, Grid
from paraharnack.fractional_flow import (
    NonlocalRHS, b_statistics_columns, max_dt, run_fractional, step_fractional,
)
from paraharnack.fractional_ops import FracParams, bilinear_B, frac_symbol
from paraharnack.local_flow import ConfigurationError

P = FracParams(0.5)
G = Grid(1, 256, 16.0)
ZERO = NonlocalRHS(0.0, 0.0, None)


def small_data(g=G, M=0.5):
    return Field.from_function(
        g, lambda x: M * np.exp(-x**2 / 2) * np.stack([np.cos(x), np.sin(x)]))


def test_constant_is_fixed():
    u = Field.constant(G, [0.2, 0.1])
    assert np.allclose(step_fractional(u, 1e-3, P, rhs=None).values, u.values, atol=1e-15)
    tr = run_fractional(u, 0.01, 1e-3, P)
    assert all(np.allclose(f.values, u.values, atol=1e-14) for f in tr.fields)


@pytest.mark.parametrize("dt", [1e-4, 1e-3])
def test_single_mode_implicit_factor(dt):
    g = Grid(1, 64, 2 * np.pi)
    u = Field.from_function(g, lambda x: 0.5 * np.cos(x))
    out = step_fractional(u, dt, P, rhs=None)
    assert np.allclose(out.values, u.values / (1 + dt), atol=1e-15)


def test_step_halving_is_second_order_locally():
    g = Grid(1, 128, 2 * np.pi)
    phi = lambda x: 0.3 * np.sin(x)
    u = Field.from_function(g, lambda x: np.stack([np.cos(phi(x)), np.sin(phi(x))]))
    errs = []
    for dt in (4e-4, 2e-4, 1e-4):
        one = step_fractional(u, dt, P)
        two = step_fractional(step_fractional(u, dt / 2, P), dt / 2, P)
        errs.append(np.abs(one.values - two.values).max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.9)


def test_stability_policy():
    assert max_dt(G, P) == min(1e-3, G.h**0.5 / 4)
    assert max_dt(Grid(1, 1024, 1.0), FracParams(0.75)) < 1e-3
    with pytest.raises(ConfigurationError):
        step_fractional(small_data(), 2e-3, P)
    with pytest.raises(ConfigurationError):
        step_fractional(small_data(), -1e-4, P)


def test_linear_run_matches_exact_multiplier():
    u0 = Field.from_function(G, lambda x: 0.5 * np.exp(-x**2 / 2))
    T = 0.1
    tr = run_fractional(u0, T, 1e-4, P, rhs=ZERO)
    exact = np.fft.ifft(np.fft.fft(u0.values) * np.exp(-T * frac_symbol(0.5)(*G.freqs()))).real
    assert np.abs(tr.fields[-1].values - exact).max() <= 1e-4


def test_linear_run_contracts_l2():
    tr = run_fractional(small_data(), 0.05, 1e-3, P, rhs=ZERO)
    n2 = [np.sqrt((f.values**2).sum()) for f in tr.fields]
    assert all(b <= a * (1 + 1e-15) for a, b in zip(n2, n2[1:]))


def test_nonlinear_run_sup_history_and_step_halving():
    tr = run_fractional(small_data(), 0.1, 1e-3, P)
    sup = tr.diagnostics["sup_norm"]
    assert np.all(np.diff(sup) <= 1e-6)
    fine = run_fractional(small_data(), 0.1, 5e-4, P, sample_every=2)
    assert np.abs(fine.fields[-1].values - tr.fields[-1].values).max() <= 1e-4
    assert tr.diagnostics["validator_hits"] == {"growth": 0, "aligned": 0}
    assert tr.diagnostics["max_B"] > 0


def test_rerun_is_bit_identical():
    a = run_fractional(small_data(), 0.01, 1e-3, P)
    b = run_fractional(small_data(), 0.01, 1e-3, P)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a.fields, b.fields))
    assert np.array_equal(a.diagnostics["B_max_per_step"], b.diagnostics["B_max_per_step"])


def test_sup_cap():
    with pytest.raises(ConfigurationError):
        run_fractional(small_data(M=0.995), 0.01, 1e-3, P)


@given(st.floats(0.05, 0.99), st.integers(0, 2**31))
def test_validator_accepts_default_rhs(M, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((2, 50))
    u *= M * rng.random(50) / np.sqrt((u**2).sum(axis=0))
    b = rng.random(50)
    hits = NonlocalRHS(M, M**2).violations(None, u, b)
    assert hits == {"growth": 0, "aligned": 0}


def test_validator_counts_violations():
    u = small_data(M=0.9)
    b = bilinear_B(u, u, P).values[0]
    hits = NonlocalRHS(0.1, 0.01).violations(None, u.values, b)
    assert hits["growth"] > 0 and hits["aligned"] > 0


def test_b_statistics_columns(tmp_path):
    tr = run_fractional(small_data(), 0.005, 1e-3, P, sample_every=2)
    cols = b_statistics_columns(tr, 2)
    assert len(cols["B_max"]) == len(tr.times) == 4
    tr.export(tmp_path / "t", cols)
    head = (tmp_path / "t" / "manifest.csv").read_text().splitlines()[0]
    assert head.endswith("B_max,B_mean")
