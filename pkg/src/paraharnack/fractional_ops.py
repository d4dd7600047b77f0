"""Fractional Laplacian, its carre du champ B(u, w) and the associated checks.

Sign convention: ``(-Delta)^s`` is the positive operator with symbol
``|2 pi xi|^(2s)``; in integral form

    (-Delta)^s u(x) = c_norm * P.V. int (u(x) - u(y)) / |x - y|^(n + 2s) dy,
    B(u, w)(x)      = c_norm / 2 * int (u(x) - u(y)).(w(x) - w(y)) / |x - y|^(n + 2s) dy,

so that (-Delta)^s (u^2) = 2 u (-Delta)^s u - 2 B(u, u).

The singular-integral routines are one-dimensional. In 1-D the integral is
rewritten as c_norm * int_0^inf D(z) z^(-1-2s) dz with the symmetric
difference D(z) = 2u(x) - u(x+z) - u(x-z). Near zero D(z) = O(z^2), so we
integrate g(z) = D(z)/z^2 against the integrable weight z^(1-2s) with
piecewise-cubic product integration; g(0) = -u''(x) comes from a fourth
order difference. Beyond z = L/2 the periodic images are summed in closed
form with the Hurwitz zeta function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma, zeta

from .core_fields import Field, Grid, apply_multiplier, decay_gate, spectral_gradient


def default_c_norm(s: float, n: int = 1) -> float:
    return float(4**s * gamma(n / 2 + s) / (np.pi ** (n / 2) * abs(gamma(-s))))


@dataclass(frozen=True)
class FracParams:
    s: float
    n: int = 1
    c_norm: float = field(default=None)

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError(f"fractional order must lie in (0, 1), got {self.s}")
        if self.c_norm is None:
            object.__setattr__(self, "c_norm", default_c_norm(self.s, self.n))
        if not self.c_norm > 0:
            raise ValueError("c_norm must be positive")

    @property
    def a(self) -> float:
        return 1 - 2 * self.s


def frac_symbol(s: float):
    return lambda *xi: (2 * np.pi * np.sqrt(sum(x**2 for x in xi))) ** (2 * s)


def frac_laplacian_spectral(u: Field, p: FracParams) -> Field:
    decay_gate(u.values, u.grid)
    return apply_multiplier(u, frac_symbol(p.s))


# -- product-integration weights ---------------------------------------------

def _lagrange_weights_on_interval(nodes: np.ndarray, a: float, b: float, expo: float,
                                  exact_from_zero: bool) -> np.ndarray:
    """int_a^b l_k(t) t^expo dt for the Lagrange basis on ``nodes``."""
    out = np.empty(len(nodes))
    if exact_from_zero:
        # monomial expansion is well conditioned for the small nodes 0..3
        for k, nk in enumerate(nodes):
            others = np.delete(nodes, k)
            coef = np.poly(others) / np.prod(nk - others)  # highest power first
            deg = len(coef) - 1
            mom = [(b ** (p + expo + 1) - a ** (p + expo + 1)) / (p + expo + 1)
                   for p in range(deg, -1, -1)]
            out[k] = np.dot(coef, mom)
        return out
    xg, wg = np.polynomial.legendre.leggauss(12)
    t = a + (b - a) * (xg + 1) / 2
    w = wg * (b - a) / 2 * t**expo
    for k, nk in enumerate(nodes):
        others = np.delete(nodes, k)
        lk = np.prod([(t - o) / (nk - o) for o in others], axis=0)
        out[k] = np.dot(w, lk)
    return out


@lru_cache(maxsize=64)
def product_weights(J: int, s: float) -> np.ndarray:
    """W_j with int_0^J g(t) t^(1-2s) dt ~ sum_j W_j g(j), j = 0 .. J."""
    W = np.zeros(J + 1)
    expo = 1 - 2 * s
    for q in range(J):
        lo = min(max(q - 1, 0), J - 3)
        nodes = np.arange(lo, lo + 4, dtype=float)
        W[nodes.astype(int)] += _lagrange_weights_on_interval(nodes, q, q + 1, expo, lo == 0)
    return W


def _far_kernel_sym(y: np.ndarray, L: float, s: float) -> np.ndarray:
    """K(y) + K(-y) with K(y) = sum_{m>=1} |y + mL|^(-1-2s), |y| <= L/2."""
    q = 1 + 2 * s
    return L ** (-q) * (zeta(q, 1 + y / L) + zeta(q, 1 - y / L))


@lru_cache(maxsize=64)
def _discrete_kernel_cached(N: int, L: float, s: float, c_norm: float) -> np.ndarray:
    h = L / N
    J = N // 2
    W = product_weights(J, s) * h ** (2 - 2 * s)
    ker = np.zeros(N)
    for j in range(1, J + 1):
        wj = c_norm * W[j] / (j * h) ** 2
        ker[j % N] += wj
        ker[-j % N] += wj
    # g(0) = -u'' by the fourth-order central difference
    for q, aq in ((1, 16 / 12), (2, -1 / 12)):
        ker[q] += c_norm * W[0] * aq / h**2
        ker[-q % N] += c_norm * W[0] * aq / h**2
    j = np.arange(-J, J)
    far = c_norm * h * _far_kernel_sym(j * h, L, s)
    far[J] = 0.0
    ker[j % N] += far
    ker[0] = 0.0
    ker.setflags(write=False)
    return ker


def discrete_kernel(grid: Grid, p: FracParams) -> np.ndarray:
    """Symmetric periodic weights K_j with L u_i = sum_j K_j (u_i - u_{i+j})."""
    if grid.n != 1 or p.n != 1:
        raise ValueError("singular-integral quadrature is implemented for n = 1 only")
    ker = _discrete_kernel_cached(grid.N, float(grid.L), float(p.s), float(p.c_norm))
    if np.any(ker[1:] <= 0):
        raise ArithmeticError("discrete kernel lost positivity; refine the grid")
    return ker


def _circ(ker: np.ndarray, v: np.ndarray) -> np.ndarray:
    """sum_j K_j v_{i+j} along the last axis (K symmetric)."""
    return np.fft.irfft(np.fft.rfft(ker) * np.fft.rfft(v, axis=-1), n=v.shape[-1], axis=-1)


def frac_laplacian_quadrature(u: Field, p: FracParams) -> Field:
    decay_gate(u.values, u.grid)
    ker = discrete_kernel(u.grid, p)
    return u.with_values(ker.sum() * u.values - _circ(ker, u.values))


def far_field_bound(u: Field, p: FracParams) -> float:
    """Bound on the z > L/2 contribution: ||u||_inf * 2 (L/2)^(-2s) / (2s) * c_norm."""
    return float(np.abs(u.values).max() * p.c_norm * 2 * (u.grid.L / 2) ** (-2 * p.s) / (2 * p.s))


# -- bilinear form ------------------------------------------------------------

def _bilinear_kernel(u: np.ndarray, w: np.ndarray, ker: np.ndarray) -> np.ndarray:
    S = ker.sum()
    uw = np.sum(u * w, axis=0)
    out = S * uw - np.sum(u * _circ(ker, w) + w * _circ(ker, u), axis=0) + _circ(ker, uw)
    return 0.5 * out


def _shift_zero(v: np.ndarray, j: int) -> np.ndarray:
    """v(x + j h) with zero extension outside the box."""
    out = np.zeros_like(v)
    N = v.shape[-1]
    if abs(j) >= N:
        return out
    if j >= 0:
        out[..., :N - j] = v[..., j:]
    else:
        out[..., -j:] = v[..., :N + j]
    return out


def _recentre(u: Field) -> np.ndarray:
    shell = np.abs(u.grid.x) >= 0.4 * u.grid.L
    return u.values - u.values[:, shell].mean(axis=1, keepdims=True)


def _bilinear_continuum(u: Field, w: Field, p: FracParams) -> np.ndarray:
    g = u.grid
    if g.n != 1:
        raise ValueError("singular-integral quadrature is implemented for n = 1 only")
    h, N, s = g.h, g.N, p.s
    W = product_weights(N, s) * h ** (2 - 2 * s)
    du = spectral_gradient(u)[0]
    dw = spectral_gradient(w)[0]
    acc = W[0] * 2 * np.sum(du * dw, axis=0)
    # B ignores additive constants: extend each component by its outer-shell
    # mean; integrating out to z = L then reaches every box point
    U, Wv = _recentre(u), _recentre(w)
    for j in range(1, N + 1):
        E = np.sum((U - _shift_zero(U, j)) * (Wv - _shift_zero(Wv, j))
                   + (U - _shift_zero(U, -j)) * (Wv - _shift_zero(Wv, -j)), axis=0)
        acc += W[j] * E / (j * h) ** 2
    tail = 2 * np.sum(U * Wv, axis=0) * g.L ** (-2 * s) / (2 * s)
    return 0.5 * p.c_norm * (acc + tail)


def bilinear_B(u: Field, w: Field, p: FracParams, mode: str = "kernel") -> Field:
    """Pointwise B(u, w) as a scalar Field.

    ``mode="kernel"`` uses the periodic discrete kernel of
    :func:`frac_laplacian_quadrature`; ``mode="continuum"`` integrates the
    whole-line kernel against the zero-extended fields.
    """
    if u.grid != w.grid:
        raise ValueError("bilinear_B needs both fields on the same grid")
    if u.m != w.m:
        raise ValueError("bilinear_B needs fields with the same number of components")
    if mode == "kernel":
        vals = _bilinear_kernel(u.values, w.values, discrete_kernel(u.grid, p))
    elif mode == "continuum":
        vals = _bilinear_continuum(u, w, p)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Field(u.grid, vals[None])


def carre_du_champ_residual(u: Field, p: FracParams, lap: str = "kernel",
                            b_mode: str = "kernel") -> float:
    """sup |L(u^2) - 2 u L u + 2 B(u, u)| relative to the largest term.

    ``lap`` selects the operator for L ("kernel" or "spectral").
    """
    if u.m != 1:
        raise ValueError("carre du champ residual is defined for scalar fields")
    op = frac_laplacian_quadrature if lap == "kernel" else frac_laplacian_spectral
    u2 = u.with_values(u.values**2)
    Lu2 = op(u2, p).values
    uLu = u.values * op(u, p).values
    B = bilinear_B(u, u, p, b_mode).values
    scale = max(np.abs(Lu2).max(), np.abs(uLu).max(), np.abs(B).max(), 1e-300)
    return float(np.abs(Lu2 - 2 * uLu + 2 * B).max() / scale)


# -- scaling -----------------------------------------------------------------

def rescale(u: Field, lam: float) -> Field:
    """u_lam(x) = u(lam x) by exact trigonometric interpolation (lam = 1/q, q integer)."""
    q = round(1 / lam)
    g = u.grid
    if g.n != 1 or abs(q * lam - 1) > 1e-12 or q < 1:
        raise ValueError("rescaling supports n = 1 and lam = 1/q with integer q")
    U = np.fft.fft(u.values, axis=-1)
    N = g.N
    big = np.zeros(u.values.shape[:-1] + (q * N,), complex)
    half = N // 2
    big[..., :half] = U[..., :half]
    big[..., -half + 1:] = U[..., -half + 1:]
    big[..., half] = U[..., half] / 2
    big[..., -half] = U[..., half] / 2
    fine = np.fft.ifft(big, axis=-1).real * q
    # fine grid spacing h/q, same box; u(lam x_i) sits at fine index offset + i
    off = (q * N - N) // 2
    return u.with_values(fine[..., off:off + N])


def scaling_check(u: Field, lam: float, p: FracParams) -> float:
    """Relative sup discrepancy between B(u_lam)(x) and lam^(2s) B(u)(lam x)."""
    if lam == 1 or np.ptp(u.values) == 0:
        return 0.0  # both sides vanish identically
    g = u.grid
    uh = np.abs(np.fft.rfft(u.values, axis=-1))
    if uh[..., -max(2, g.N // 16):].max() > 1e-10 * max(uh.max(), 1e-300):
        raise ValueError("field is not resolved on the grid")
    q = round(1 / lam)
    if (g.N * (q - 1)) % (2 * q):
        raise ValueError("grid size incompatible with this lam")
    ul = rescale(u, lam)
    if not decay_gate(ul.values, g, warn=False):
        raise ValueError(f"rescaled field does not decay inside the box for lam = {lam}")
    B = bilinear_B(u, u, p, "continuum").values[0]
    Bl = bilinear_B(ul, ul, p, "continuum").values[0]
    off = (q * g.N - g.N) // (2 * q)  # base index of lam * x_0
    k = np.arange(0, g.N, q)
    lhs = Bl[k]
    rhs = lam ** (2 * p.s) * B[off + k // q]
    scale = max(np.abs(rhs).max(), 1e-300)
    return float(np.abs(lhs - rhs).max() / scale)
