"""The master operator H^s = (d_t - Delta)^s, its extension and the form C(u, u).

H^s is the space-time multiplier ((2 pi |xi|)^2 + 2 pi i sigma)^s on the
padded periodic time axis (principal branch). The extension

    U(x, y, t) = y^(2s) / (2^(2s) Gamma(s)) int_0^inf tau^(-1-s) e^(-y^2/(4 tau)) e^(-tau H) v dtau

acts mode by mode. For a mode with symbol lam = |lam| e^(i phi) the tau
integral is taken along the ray tau = rho e^(-i phi/2); on that ray both
exponentials decay, so the trapezoid rule in log(rho) converges
geometrically even for the purely oscillatory modes (xi = 0, sigma != 0).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gamma, gammaincc

from .core_fields import Field, Grid, SpaceTimeField, apply_multiplier, decay_gate, read_field, \
    spectral_gradient, write_field
from .fractional_ops import FracParams

N_TAU = 200
TAIL_TOL = 1e-10


class AccuracyError(RuntimeError):
    pass


class EstimationError(RuntimeError):
    pass


def hs_symbol(s: float):
    def sym(sigma, *xi):
        lam = (2 * np.pi) ** 2 * sum(x**2 for x in xi) + 2j * np.pi * sigma
        out = np.zeros(np.broadcast(lam).shape, complex)
        nz = lam != 0
        out[nz] = np.power(lam[nz], s)
        return out
    return sym


def _symbol_grid(grid: Grid) -> np.ndarray:
    sig = grid.time_freqs()
    xi2 = sum(f[None] ** 2 for f in grid.freqs())
    return (2 * np.pi) ** 2 * xi2 + 2j * np.pi * sig


def hs_apply(F: SpaceTimeField, s: float) -> SpaceTimeField:
    decay_gate(F.values, F.grid)
    return apply_multiplier(F, hs_symbol(s))


def heat_operator(F: SpaceTimeField) -> SpaceTimeField:
    """d_t F - Delta F with both derivatives taken spectrally on the padded axis."""
    return apply_multiplier(F, lambda sig, *xi: 2j * np.pi * sig + (2 * np.pi) ** 2 * sum(x**2 for x in xi))


def hs_solve(g: SpaceTimeField, s: float, return_mean: bool = False):
    """Right inverse of :func:`hs_apply`; the (0, 0) mode is projected out.

    With ``return_mean=True`` returns ``(field, removed_mean)``.
    """
    sym = hs_symbol(s)

    def inv(sigma, *xi):
        v = sym(sigma, *xi)
        out = np.zeros_like(v)
        nz = v != 0
        out[nz] = 1 / v[nz]
        return out

    mean = g.values.mean(axis=tuple(range(1, g.values.ndim)))
    out = apply_multiplier(g, inv)
    return (out, mean) if return_mean else out


# -- extension ----------------------------------------------------------------

def tau_range(grid: Grid, y: float) -> tuple[float, float]:
    return y**2 / 400, 50 * (grid.T_len**2 + grid.L**2)


def extension_kernel(y: float, lam: np.ndarray, s: float, tau_lo: float, tau_hi: float,
                     n_tau: int = N_TAU) -> tuple[np.ndarray, float]:
    """phi(y, lam) = y^(2s)/(4^s Gamma(s)) int tau^(-1-s) e^(-y^2/4tau - tau lam) dtau.

    Returns the kernel and the analytic bound on the neglected end pieces.
    """
    lam = np.asarray(lam, complex)
    r = np.abs(lam)
    psi = np.angle(lam) / 2
    rot = np.exp(1j * psi)
    u = np.linspace(np.log(tau_lo), np.log(tau_hi), n_tau)
    du = u[1] - u[0]
    acc = np.zeros(lam.shape, complex)
    q = y**2 / 4
    for k, uk in enumerate(u):
        rho = np.exp(uk)
        w = du * (0.5 if k in (0, n_tau - 1) else 1.0)
        acc += w * rho ** (-s) * np.exp(-rot * (q / rho + rho * r))
    acc *= np.exp(1j * psi * s)
    pref = y ** (2 * s) / (4**s * gamma(s))
    c = np.cos(psi)
    # head, rho < tau_lo: bounded by the upper incomplete gamma tail
    head = (q / c) ** (-s) * gamma(s) * gammaincc(s, c * q / tau_lo)
    zero = r == 0
    # the lam = 0 integrand decays only like rho^-s, so the trapezoid end
    # error is not small there; that mode has the closed form Gamma(s) q^-s
    acc[zero] = q ** (-s) * gamma(s)
    tail = np.where(zero, 0.0,
                    tau_hi ** (-1 - s) * np.exp(-c * np.where(zero, 1.0, r) * tau_hi)
                    / (c * np.where(zero, 1.0, r)))
    bound = float(pref * np.max(head + tail))
    return pref * acc, bound


@dataclass
class ExtensionStack:
    base: SpaceTimeField
    y_levels: np.ndarray
    slices: list
    p: FracParams
    tail_bound: float = 0.0

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        write_field(os.path.join(directory, "base.bin"), self.base)
        for i, sl in enumerate(self.slices):
            write_field(os.path.join(directory, f"level_{i:04d}.bin"), sl)
        manifest = {"schema": 1, "s": self.p.s, "n": self.p.n, "c_norm": self.p.c_norm,
                    "y_levels": [float(y) for y in self.y_levels], "tail_bound": self.tail_bound}
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, directory) -> "ExtensionStack":
        with open(os.path.join(directory, "manifest.json")) as fh:
            m = json.load(fh)
        ys = np.array(m["y_levels"])
        slices = [read_field(os.path.join(directory, f"level_{i:04d}.bin")) for i in range(len(ys))]
        return cls(read_field(os.path.join(directory, "base.bin")), ys, slices,
                   FracParams(m["s"], m["n"], m["c_norm"]), m["tail_bound"])


def extension_build(v: SpaceTimeField, p: FracParams, y_levels, n_tau: int = N_TAU,
                    check_first: bool = True) -> ExtensionStack:
    ys = np.asarray(y_levels, float)
    if np.any(ys <= 0) or np.any(np.diff(ys) <= 0):
        raise ValueError("y_levels must be positive and strictly increasing")
    if check_first and ys[0] > 0.01:
        raise ValueError("the first extension level must be <= 0.01")
    decay_gate(v.values, v.grid)
    g = v.grid
    lam = _symbol_grid(g)
    axes = (-g.n - 1,) + tuple(range(-g.n, 0))
    vh = np.fft.fftn(v.values, axes=axes)
    slices, worst = [], 0.0
    scale = max(np.abs(v.values).max(), 1e-300)
    for y in ys:
        lo, hi = tau_range(g, y)
        phi, bound = extension_kernel(y, lam, p.s, lo, hi, n_tau)
        if bound > TAIL_TOL:
            raise AccuracyError(f"tau-quadrature end bound {bound:.2e} at y = {y:g}")
        worst = max(worst, bound)
        vals = np.fft.ifftn(phi * vh, axes=axes).real
        slices.append(SpaceTimeField(g, vals))
    return ExtensionStack(v, ys, slices, p, worst * scale)


def trace_errors(stack: ExtensionStack) -> np.ndarray:
    return np.array([np.abs(sl.values - stack.base.values).max() for sl in stack.slices])


def measured_order(x, err) -> float:
    """Least-squares slope of log err against log x."""
    return float(np.polyfit(np.log(x), np.log(err), 1)[0])


def weighted_residual(stack: ExtensionStack) -> tuple[np.ndarray, float]:
    """div(y^a grad U) - y^a U_t at the interior levels, and the scale it is measured against.

    x and t derivatives are spectral; the y part is the conservative
    second-order difference across levels.
    """
    a = stack.p.a
    ys = stack.y_levels
    U = [sl.values for sl in stack.slices]
    res = []
    scale = 0.0
    for j in range(1, len(ys) - 1):
        heat = heat_operator(stack.slices[j]).values
        yp, ym = (ys[j] + ys[j + 1]) / 2, (ys[j] + ys[j - 1]) / 2
        flux_p = yp**a * (U[j + 1] - U[j]) / (ys[j + 1] - ys[j])
        flux_m = ym**a * (U[j] - U[j - 1]) / (ys[j] - ys[j - 1])
        dy = (flux_p - flux_m) / ((ys[j + 1] - ys[j - 1]) / 2)
        res.append(dy - ys[j] ** a * heat)
        scale = max(scale, float(np.abs(ys[j] ** a * heat).max()))
    return np.array(res), scale


def neumann_trace_estimate(v: SpaceTimeField, p: FracParams, y_levels=None,
                           probe_fraction: float = 0.5, stack: ExtensionStack | None = None
                           ) -> tuple[float, float]:
    """Fit -y^a U_y -> C hs_apply(v) over the smallest levels.

    Per probe point v - U(y) is fitted by A y^(2s) + B y^2, so that
    -lim y^a U_y = 2 s A; the constant is the median of 2 s A / H^s v over
    probes where |H^s v| >= probe_fraction * max, and the spread is
    (max - min) / |median| over those probes.
    """
    if y_levels is None:
        y_levels = np.geomspace(1e-4, 2e-3, 6)
    if stack is None:
        stack = extension_build(v, p, y_levels)
    ys = stack.y_levels
    hv = hs_apply(v, p.s).values
    mag = np.abs(hv)
    probes = mag >= probe_fraction * mag.max()
    if mag.max() == 0 or probes.sum() < 2:
        raise EstimationError("hs_apply(v) vanishes on the probe set")
    D = np.stack([(v.values - sl.values)[probes] for sl in stack.slices])
    X = np.stack([ys ** (2 * p.s), ys**2], axis=1)
    coef, *_ = np.linalg.lstsq(X, D, rcond=None)
    ratios = 2 * p.s * coef[0] / hv[probes]
    C = float(np.median(ratios))
    if not np.isfinite(C) or C == 0:
        raise EstimationError("degenerate Neumann fit")
    spread = float((ratios.max() - ratios.min()) / abs(C))
    return C, spread


# -- the form C(u, u) ---------------------------------------------------------

def _heat_kernel_samples(grid: Grid, tau: float) -> np.ndarray:
    """Sampled whole-space Gaussian (4 pi tau)^(-n/2) e^(-|z|^2/4tau) times h^n, z on [-L, L]^n."""
    z = grid.h * np.arange(-grid.N, grid.N + 1)
    k1 = np.exp(-z**2 / (4 * tau)) / np.sqrt(4 * np.pi * tau) * grid.h
    if grid.n == 1:
        return k1
    return np.outer(k1, k1)


def _heat_conv(arr: np.ndarray, grid: Grid, tau: float) -> np.ndarray:
    """Whole-space heat semigroup at time tau over the last n axes, zero outside the box.

    Narrow kernels (width well inside the box) use the exact spectral
    multiplier; wide ones a linear convolution with the sampled kernel.
    """
    axes = tuple(range(-grid.n, 0))
    if tau <= grid.L**2 / 400:
        xi2 = sum(f**2 for f in np.meshgrid(*[np.fft.fftfreq(grid.N, grid.h)] * grid.n, indexing="ij"))
        mult = np.exp(-tau * (2 * np.pi) ** 2 * xi2)
        return np.fft.ifftn(mult * np.fft.fftn(arr, axes=axes), axes=axes).real
    ker = _heat_kernel_samples(grid, tau)[(None,) * (arr.ndim - grid.n)]
    return fftconvolve(arr, ker, mode="same", axes=axes)


def _time_shift_hold(win: np.ndarray, grid: Grid, tau: float) -> np.ndarray:
    """u(t - tau) on the window, holding the first slice for earlier times."""
    t = grid.t - tau
    pos = np.clip((t - grid.t[0]) / grid.dt, 0, grid.Nt - 1)
    i0 = np.minimum(np.floor(pos).astype(int), grid.Nt - 2)
    w = (pos - i0).reshape((1, -1) + (1,) * grid.n)
    return (1 - w) * win[:, i0] + w * win[:, i0 + 1]


def bilinear_C(u: SpaceTimeField, n_tau: int = N_TAU) -> SpaceTimeField:
    """C(u, u) at s = 1/2 on the window (margin left at zero).

    Space integrals are sums over grid translates with zero extension
    outside the box; tau runs over log-spaced nodes. For tau < 1e-4 h^2 the
    integrand is replaced by its leading term 2 tau |Du|^2, and beyond the
    last node by its large-tau asymptotics. Times before the window hold
    the first slice.
    """
    g = u.grid
    s = 0.5
    norm = 1 / (2 * abs(gamma(-s)))
    # C is blind to adding a constant; subtracting the far-field value makes
    # the zero extension outside the box harmless for fields tending to it
    shell = g.radius(tuple([0.0] * g.n)) >= 0.4 * g.L
    far = u.window[:, :, shell].mean(axis=(1, 2)).reshape((-1, 1) + (1,) * g.n)
    win = u.window - far
    sq = np.sum(win**2, axis=0)
    tau0 = 1e-4 * g.h**2
    period = g.dt * g.Nt_total
    tau_hi = 50 * (period**2 + g.L**2)
    lu = np.linspace(np.log(tau0), np.log(tau_hi), n_tau)
    dl = lu[1] - lu[0]
    acc = np.zeros_like(sq)
    for k, l in enumerate(lu):
        tau = np.exp(l)
        past = _time_shift_hold(win, g, tau)
        conv_u = _heat_conv(past, g, tau)
        conv_sq = _heat_conv(np.sum(past**2, axis=0), g, tau)
        E = sq - 2 * np.sum(win * conv_u, axis=0) + conv_sq
        w = dl * (0.5 if k in (0, n_tau - 1) else 1.0)
        acc += w * E * tau ** (-s)  # tau^(-1-s) dtau = tau^(-s) dlog(tau)
    grad2 = np.sum(spectral_gradient(u)[:, :, :g.Nt] ** 2, axis=(0, 1))
    acc += 2 * grad2 * tau0 ** (1 - s) / (1 - s)
    first = _time_shift_hold(win, g, tau_hi)
    m0 = np.sum(first, axis=tuple(range(-g.n, 0)), keepdims=True) * g.h**g.n
    m2 = np.sum(first**2, axis=(0,) + tuple(range(-g.n, 0))) * g.h**g.n
    m2 = m2.reshape((-1,) + (1,) * g.n)
    c4 = (4 * np.pi) ** (-g.n / 2)
    acc += sq * tau_hi ** (-s) / s
    acc += (-2 * np.sum(win * m0, axis=0) + m2) * c4 * tau_hi ** (-s - g.n / 2) / (s + g.n / 2)
    out = np.zeros((1, g.Nt_total) + g.spatial_shape)
    out[0, :g.Nt] = norm * acc
    return SpaceTimeField(g, out)
