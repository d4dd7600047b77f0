"""Fractional heat flow u_t + (-Delta)^s u = f(x, u, B(u, u)), by default f = u B(u, u)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core_fields import Field, Grid
from .fractional_ops import FracParams, bilinear_B, frac_symbol
from .local_flow import BLOWUP, ConfigurationError, DivergenceError, Trajectory, check_sup_bound


def nonlocal_rhs_default(x, u: np.ndarray, b: np.ndarray) -> np.ndarray:
    return u * b


@dataclass
class NonlocalRHS:
    """f(x, u, B) with |f| <= a_growth B and u.f <= l B on sampled inputs."""

    a_growth: float
    l: float
    rhs: Callable | None = nonlocal_rhs_default

    def __call__(self, x, u, b):
        if self.rhs is None:
            return np.zeros_like(u)
        return self.rhs(x, u, b)

    def violations(self, x, u: np.ndarray, b: np.ndarray) -> dict:
        """Number of sample points breaking the growth and aligned bounds."""
        f = np.asarray(self(x, u, b), float)
        tol = 1e-12 * (1 + np.abs(b))
        growth = np.sqrt(np.sum(f**2, axis=0)) - self.a_growth * b
        aligned = np.sum(u * f, axis=0) - self.l * b
        return {"growth": int(np.sum(growth > tol)), "aligned": int(np.sum(aligned > tol))}


def max_dt(grid: Grid, p: FracParams) -> float:
    return min(1e-3, grid.h ** (2 * p.s) / 4)


def _implicit(vals: np.ndarray, grid: Grid, dt: float, s: float) -> np.ndarray:
    sym = 1.0 / (1.0 + dt * frac_symbol(s)(*grid.freqs()))
    return np.fft.ifft(sym * np.fft.fft(vals, axis=-1), axis=-1).real


def step_fractional(u: Field, dt: float, p: FracParams,
                    rhs: NonlocalRHS | Callable | None = nonlocal_rhs_default,
                    return_b: bool = False):
    """IMEX Euler step: (-Delta)^s implicit, f(x, u, B(u, u)) explicit with the kernel-consistent B."""
    g = u.grid
    if not dt > 0 or dt > max_dt(g, p) * (1 + 1e-12):
        raise ConfigurationError(f"dt = {dt} violates the stability bound {max_dt(g, p):.3g}")
    vals = u.values
    b = None
    if rhs is not None:
        b = bilinear_B(u, u, p, "kernel").values[0]
        vals = vals + dt * rhs(g.mesh(), u.values, b)
    out = u.with_values(_implicit(vals, g, dt, p.s))
    return (out, b) if return_b else out


def run_fractional(u0: Field, T: float, dt: float, p: FracParams,
                   rhs: NonlocalRHS | None = None, sample_every: int = 1,
                   t0: float = 0.0) -> Trajectory:
    """Integrate from t0 to t0 + T.

    ``rhs=None`` means the default f = u B(u, u) with a_growth = M and
    l = M^2, M = ||u0||_inf; the hypothesis validators run on every step
    and their hit counts land in the diagnostics.
    """
    M, sphere = check_sup_bound(u0)
    if rhs is None:
        rhs = NonlocalRHS(a_growth=M, l=M**2)
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1):
        raise ConfigurationError("T must be an integer multiple of dt")
    u = u0
    times, fields = [t0], [u0]
    sup_hist = [M]
    defect = [float(np.abs(u0.norm() ** 2 - 1).max())]
    b_max, b_mean, hits = [], [], {"growth": 0, "aligned": 0}
    for k in range(1, nsteps + 1):
        u_new, b = step_fractional(u, dt, p, rhs, return_b=True)
        if b is not None:
            v = rhs.violations(u.grid.mesh(), u.values, b)
            hits = {key: hits[key] + v[key] for key in hits}
            b_max.append(float(b.max()))
            b_mean.append(float(b.mean()))
        u = u_new
        sup = u.sup_norm()
        if not np.isfinite(sup) or sup > BLOWUP:
            raise DivergenceError(f"sup norm {sup:.3g} at step {k}")
        if k % sample_every == 0 or k == nsteps:
            times.append(t0 + k * dt)
            fields.append(u)
            sup_hist.append(sup)
            defect.append(float(np.abs(u.norm() ** 2 - 1).max()))
    diag = {"M": M, "sphere_valued": sphere, "sup_norm": np.array(sup_hist),
            "sphere_defect": np.array(defect), "B_max_per_step": np.array(b_max),
            "B_mean_per_step": np.array(b_mean), "max_B": max(b_max, default=0.0),
            "validator_hits": hits, "a_growth": rhs.a_growth, "l": rhs.l, "dt": dt, "s": p.s}
    return Trajectory(np.array(times), fields, diag)


def b_statistics_columns(traj: Trajectory, sample_every: int) -> dict:
    """Per-sample B statistics for the trajectory manifest (step value preceding each sample)."""
    bm = traj.diagnostics.get("B_max_per_step", np.array([]))
    ba = traj.diagnostics.get("B_mean_per_step", np.array([]))
    nsteps = len(bm)
    idx = [0] + [min(k, nsteps) for k in range(sample_every, nsteps + 1, sample_every)]
    if nsteps and idx[-1] != nsteps:
        idx.append(nsteps)
    pick = lambda arr: [float(arr[max(i - 1, 0)]) if len(arr) else 0.0 for i in idx]
    return {"B_max": pick(bm), "B_mean": pick(ba)}
