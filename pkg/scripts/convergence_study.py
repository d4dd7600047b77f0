"""Convergence of the sphere defect, the extension trace and the mixed carre residual.

Usage: python3 scripts/convergence_study.py
"""

import warnings

import numpy as np

from paraharnack.core_fields import Field, Grid, SpaceTimeField, TruncationWarning
from paraharnack.fractional_ops import FracParams, carre_du_champ_residual
from paraharnack.local_flow import run_local
from paraharnack.master_operator import extension_build, measured_order, trace_errors

warnings.simplefilter("ignore", TruncationWarning)


def sphere_defect():
    g = Grid(1, 256, 2 * np.pi)
    u0 = Field.from_function(g, lambda x: np.stack([np.cos(0.5 * np.sin(x)), np.sin(0.5 * np.sin(x))]))
    dts = [1e-4, 5e-5, 2.5e-5, 1.25e-5]
    d = [run_local(u0, 0.1, dt).diagnostics["max_sphere_defect"] for dt in dts]
    print("sphere defect at T = 0.1")
    for dt, v in zip(dts, d):
        print(f"  dt={dt:.3g} defect={v:.4g}")
    print("  orders", np.round(np.log2(np.array(d[:-1]) / d[1:]), 4).tolist())


def trace_order():
    g = Grid(1, 256, 16.0, 128, 4.0, -2.0)
    v = SpaceTimeField.from_function(g, lambda t, x: np.exp(-x**2 / 2 - t**2 / 0.1))
    ys = np.geomspace(1e-4, 1e-2, 6)
    print("extension trace order (expected min(1, 2s))")
    for s in (0.25, 0.5, 0.75):
        err = trace_errors(extension_build(v, FracParams(s), ys))
        print(f"  s={s} order={measured_order(ys, err):.4f}")


def mixed_residual():
    print("spectral-L against continuum-B carre residual (periodic image effect)")
    for s in (0.25, 0.5, 0.75):
        row = []
        for L in (16.0, 32.0, 64.0):
            g = Grid(1, int(16 * L), L)
            u = Field.from_function(g, lambda x: np.exp(-x**2 / 2))
            row.append(carre_du_champ_residual(u, FracParams(s), "spectral", "continuum"))
        rates = np.log2(np.array(row[:-1]) / row[1:])
        print(f"  s={s} L=16,32,64: " + " ".join(f"{r:.3g}" for r in row)
              + f"  rates {np.round(rates, 3).tolist()} (expected {1 + 2 * s})")


if __name__ == "__main__":
    sphere_defect()
    trace_order()
    mixed_residual()
