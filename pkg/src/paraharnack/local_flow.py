"""Harmonic-map type heat flow u_t - Delta u = u |Du|^2 on the periodic box."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core_fields import Field, Grid, dealias, laplacian, spectral_gradient, write_field

M_CAP = 0.99
BLOWUP = 10.0
SPHERE_TOL = 1e-12


class ConfigurationError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


def grad_sq(u: Field) -> np.ndarray:
    """|Du|^2 = sum over directions and components of (d_i u_l)^2."""
    return np.sum(spectral_gradient(u) ** 2, axis=(0, 1))


def harmonic_map_rhs(x, u: np.ndarray, du: np.ndarray) -> np.ndarray:
    """f(x, u, Du) = u |Du|^2 for u of shape (m, ...) and Du of shape (n, m, ...)."""
    return u * np.sum(du**2, axis=(0, 1))


@dataclass
class StructuredRHS:
    """Right-hand side f(x, u, Du) with |f| <= a_growth |Du|^2 and u.f <= l |Du|^2."""

    a_growth: float
    l: float
    rhs: Callable = harmonic_map_rhs

    def __call__(self, x, u, du):
        return self.rhs(x, u, du)

    def validate(self, samples) -> list[tuple[int, str, float]]:
        """Check both bounds on sampled (x, u, Du) triples; returns the violations."""
        bad = []
        for i, (x, u, du) in enumerate(samples):
            u = np.asarray(u, float)
            du = np.asarray(du, float)
            f = np.asarray(self.rhs(x, u, du), float)
            g2 = np.sum(du**2, axis=(0, 1))
            tol = 1e-12 * (1 + g2)
            gap = np.sqrt(np.sum(f**2, axis=0)) - self.a_growth * g2
            if np.any(gap > tol):
                bad.append((i, "growth", float(gap.max())))
            gap = np.sum(u * f, axis=0) - self.l * g2
            if np.any(gap > tol):
                bad.append((i, "aligned", float(gap.max())))
        return bad


def field_samples(u: Field):
    """(x, u, Du) arrays of a field, in the layout the validators expect."""
    return [(u.grid.mesh(), u.values, spectral_gradient(u))]


def local_rhs(u: Field, rhs: Callable | None = harmonic_map_rhs) -> Field:
    """Delta u + f(x, u, Du); with the default f this is Delta u + u|Du|^2."""
    out = laplacian(u).values
    if rhs is not None:
        out = out + rhs(u.grid.mesh(), u.values, spectral_gradient(u))
    return u.with_values(out)


def max_dt(grid: Grid, safety: float = 1.0) -> float:
    return min(grid.h**2 / 4, 1e-3) * safety


def step_local(u: Field, dt: float, rhs: Callable | None = harmonic_map_rhs,
               safety: float = 1.0) -> Field:
    """One IMEX Euler step: diffusion implicit, nonlinearity explicit and dealiased."""
    g = u.grid
    if not dt > 0 or dt > max_dt(g, safety) * (1 + 1e-12):
        raise ConfigurationError(f"dt = {dt} violates the stability bound {max_dt(g, safety):.3g}")
    vals = u.values
    if rhs is not None:
        vals = vals + dt * dealias(rhs(g.mesh(), u.values, spectral_gradient(u)), g)
    axes = tuple(range(-g.n, 0))
    sym = 1.0 / (1.0 + dt * (2 * np.pi * g.xi_abs()) ** 2)
    return u.with_values(np.fft.ifftn(sym * np.fft.fftn(vals, axes=axes), axes=axes).real)


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    def to_spacetime(self, t_origin: float, T_len: float, Nt: int):
        """Resample onto a space-time grid by linear interpolation in time."""
        from .core_fields import SpaceTimeField
        g0 = self.grid
        g = Grid(g0.n, g0.N, g0.L, Nt, T_len, t_origin)
        stack = np.stack([f.values for f in self.fields], axis=1)
        if g.t[0] < self.times[0] - 1e-12 or g.t[-1] > self.times[-1] + 1e-12:
            raise ValueError("space-time window leaves the trajectory")
        idx = np.clip(np.searchsorted(self.times, g.t) - 1, 0, len(self.times) - 2)
        w = (g.t - self.times[idx]) / (self.times[idx + 1] - self.times[idx])
        w = w.reshape((1, -1) + (1,) * g0.n)
        win = (1 - w) * stack[:, idx] + w * stack[:, idx + 1]
        return SpaceTimeField.from_slices(g, [win[:, j] for j in range(Nt)])

    def export(self, directory, extra_columns: dict | None = None) -> None:
        """One binary field file per sample plus manifest.csv."""
        os.makedirs(directory, exist_ok=True)
        extra = extra_columns or {}
        cols = ["index", "time", "sup_norm", "sphere_defect"] + list(extra)
        with open(os.path.join(directory, "manifest.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i, (t, f) in enumerate(zip(self.times, self.fields)):
                write_field(os.path.join(directory, f"field_{i:05d}.bin"), f)
                row = [i, repr(float(t)), repr(float(self.diagnostics["sup_norm"][i])),
                       repr(float(self.diagnostics["sphere_defect"][i]))]
                row += [repr(float(extra[k][i])) for k in extra]
                w.writerow(row)


def is_sphere_valued(u: Field, tol: float = SPHERE_TOL) -> bool:
    return bool(np.abs(u.norm() - 1).max() <= tol)


def check_sup_bound(u0: Field, cap: float = M_CAP) -> tuple[float, bool]:
    """Returns (M, sphere_valued); raises unless M <= cap or the data is sphere-valued."""
    M = u0.sup_norm()
    sphere = is_sphere_valued(u0)
    if not sphere and M > cap:
        raise ConfigurationError(f"||u0||_inf = {M:.4g} exceeds the cap {cap}")
    return M, sphere


def run_local(u0: Field, T: float, dt: float, rhs: Callable | None = harmonic_map_rhs,
              sample_every: int = 1, t0: float = 0.0, safety: float = 1.0) -> Trajectory:
    """Integrate to time T (relative to t0); samples every ``sample_every`` steps."""
    M, sphere = check_sup_bound(u0)
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1):
        raise ConfigurationError("T must be an integer multiple of dt")
    u = u0
    times, fields = [t0], [u0]
    sup_hist, defect = [M], [float(np.abs(u0.norm() ** 2 - 1).max())]
    worst = defect[0]
    for k in range(1, nsteps + 1):
        u = step_local(u, dt, rhs, safety)
        sup = u.sup_norm()
        if not np.isfinite(sup) or sup > BLOWUP:
            raise DivergenceError(f"sup norm {sup:.3g} at step {k}")
        d = float(np.abs(u.norm() ** 2 - 1).max())
        worst = max(worst, d)
        if k % sample_every == 0 or k == nsteps:
            times.append(t0 + k * dt)
            fields.append(u)
            sup_hist.append(sup)
            defect.append(d)
    diag = {"M": M, "sphere_valued": sphere, "sup_norm": np.array(sup_hist),
            "sphere_defect": np.array(defect),
            "max_sphere_defect": worst if sphere else float("nan"),
            "dt": dt}
    return Trajectory(np.array(times), fields, diag)


def dirichlet_energy(u: Field) -> float:
    return float(0.5 * grad_sq(u).sum() * u.grid.h**u.grid.n)
