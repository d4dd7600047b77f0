"""Oscillation-decay cascades on computed trajectories and Hölder-exponent fits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core_fields import ball_weights
from .harnack_lab import tail_weights

NOT_APPLICABLE = "n/a"
DEGENERATE = 1e-12
AL_SLACK = 0.05


class CascadeError(ValueError):
    pass


def interval_cascade(K: int) -> tuple[list[tuple[Fraction, Fraction]], Fraction]:
    """Intervals I_0..I_K of the halving-and-quartering recursion, and the limit point 1/3."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    a, b = Fraction(0), Fraction(1, 2)
    out = [(a, b)]
    for _ in range(K):
        mid = (a + b) / 2
        a, b = mid, mid + (b - a) / 4
        out.append((a, b))
    # a_k = sum_{j=1..k} 4^-j, so the left ends increase to 1/3
    return out, Fraction(1, 3)


@dataclass
class Level:
    k: int
    radius: float
    depth: float
    M_k: float
    rho: np.ndarray
    tail: float = 0.0
    t_lo: float = 0.0
    t_hi: float = 0.0


@dataclass
class CascadeReport:
    r: float
    s: float
    mode: str
    M: float
    anchor: tuple
    levels: list = field(default_factory=list)
    alpha_fit: object = NOT_APPLICABLE
    delta_witness: float = 0.0
    degenerate: bool = False
    max_level: int = -1
    C0: float = float("nan")
    tail_constant: float = float("nan")
    r_admissible: bool = False
    alpha_admissible: bool = False

    @property
    def M_k(self) -> np.ndarray:
        return np.array([lv.M_k for lv in self.levels])

    def check_invariants(self) -> dict:
        """Flags for the structural properties of the measured cascade."""
        radii = np.array([lv.radius for lv in self.levels])
        Mk = self.M_k
        ii = [float(np.linalg.norm(self.levels[k].rho)) + Mk[k - 1] <= self.M + 1e-9
              for k in range(1, len(Mk))]
        return {"radii_decreasing": bool(np.all(np.diff(radii) < 0)),
                "M_nonneg": bool(np.all(Mk >= 0)),
                "M_nonincreasing": bool(np.all(np.diff(Mk) <= 1e-15)),
                "center_bound": ii}

    def write_csv(self, path) -> None:
        m = len(self.levels[0].rho) if self.levels else 0
        cols = (["row", "k", "radius", "depth", "M_k"] + [f"rho_{i}" for i in range(m)]
                + ["tail_k", "alpha_fit", "delta_witness", "r", "s", "anchor"])
        anchor = " ".join(repr(float(a)) for a in np.ravel(self.anchor[0])) + f" {float(self.anchor[1])!r}"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for lv in self.levels:
                w.writerow(["level", lv.k, repr(lv.radius), repr(lv.depth), repr(lv.M_k)]
                           + [repr(float(x)) for x in lv.rho] + [repr(lv.tail), "", "", "", "", ""])
            alpha = self.alpha_fit if isinstance(self.alpha_fit, str) else repr(float(self.alpha_fit))
            w.writerow(["summary", "", "", "", ""] + [""] * m
                       + ["", alpha, repr(float(self.delta_witness)), repr(float(self.r)),
                          repr(float(self.s)), anchor])


def _stack(traj):
    return np.stack([f.values for f in traj.fields])  # (T, m, ...)


def _enclose(samples: np.ndarray, prev_rho, prev_M):
    """Range midpoint and enclosing radius; falls back to the previous
    centre when that gives the smaller ball, so M_k never increases."""
    lo, hi = samples.min(axis=0), samples.max(axis=0)
    rho = (lo + hi) / 2
    M = float(np.sqrt(((samples - rho) ** 2).sum(axis=1)).max())
    if prev_rho is not None:
        M_prev = float(np.sqrt(((samples - prev_rho) ** 2).sum(axis=1)).max())
        if M_prev < M:
            rho, M = prev_rho.copy(), M_prev
        M = min(M, prev_M)
    return rho, M


def _level_geometry(mode: str, k: int, r: float, s: float, t_anchor: float):
    if mode == "local":
        a, b = interval_cascade(k)[0][-1]
        return 0.5**k, float(b - a), t_anchor + float(a), t_anchor + float(b)
    depth = r ** (2 * s * k)
    return r**k, depth, t_anchor - depth, t_anchor


def oscillation_cascade(traj, r: float = 0.5, s: float = 0.5, mode: str = "fractional",
                        anchor=None, K: int = 12, l: float | None = None,
                        check_sup: bool = True) -> CascadeReport:
    """Measure M_k, rho_k over the nested cylinders of the cascade.

    Local mode: radii 2^-k around x0 and the intervals I_k shifted by the
    anchor time. Fractional mode: radii r^k and times (t0 - r^(2sk), t0].
    The anchor defaults to x0 = 0 and t0 = 0 (local) or the final time
    (fractional). Levels that no longer contain two grid points in space or
    two samples in time end the cascade.
    """
    if mode not in ("local", "fractional"):
        raise ValueError("mode must be 'local' or 'fractional'")
    if mode == "local":
        r, s = 0.5, 1.0  # radii 2^-k with time lengths ~ 4^-k: parabolic scaling
    if not 0 < r < 1:
        raise CascadeError("r must lie in (0, 1)")
    g = traj.grid
    U = _stack(traj)
    times = np.asarray(traj.times)
    M = float(np.sqrt((U**2).sum(axis=1)).max())
    sphere = bool(traj.diagnostics.get("sphere_valued", False)) if traj.diagnostics else False
    if check_sup and M > 0.99 + 1e-12 and not sphere:
        raise CascadeError(f"||u||_inf = {M:.4g} exceeds 0.99")
    if anchor is None:
        anchor = ((0.0,) * g.n, 0.0 if mode == "local" else float(times[-1]))
    x0 = tuple(np.atleast_1d(np.asarray(anchor[0], float)))
    t_anchor = float(anchor[1])
    l = M if l is None else l
    dist = g.radius(x0)
    rep = CascadeReport(r, s, mode, M, (x0, t_anchor))
    lo0, hi0 = _level_geometry(mode, 0, r, s, t_anchor)[2:]
    if lo0 < times[0] - 1e-9 or hi0 > times[-1] + 1e-9:
        raise CascadeError("trajectory does not cover the level-0 cylinder")
    prev_rho, prev_M = None, np.inf
    for k in range(K + 1):
        radius, depth, t_lo, t_hi = _level_geometry(mode, k, r, s, t_anchor)
        xs = dist <= radius + 1e-12
        ts = (times > t_lo + 1e-12) & (times <= t_hi + 1e-12)
        if mode == "local":
            ts = (times > t_lo - 1e-12) & (times < t_hi + 1e-12)
        if xs.sum() < 2 or ts.sum() < 2:
            break
        sub = U[ts][..., xs]  # (T, m, P)
        samples = np.moveaxis(sub, 1, -1).reshape(-1, U.shape[1])
        rho, Mk = _enclose(samples, prev_rho, prev_M)
        lv = Level(k, radius, depth, Mk, rho, 0.0, t_lo, t_hi)
        if mode == "fractional" and radius < g.L / 2:
            lv.tail = _level_tail(traj, U, times, rho, Mk, x0, radius, t_anchor, r, s, l)
        rep.levels.append(lv)
        prev_rho, prev_M = rho, Mk
    rep.max_level = len(rep.levels) - 1
    Mk = rep.M_k
    rep.degenerate = bool(np.all(Mk < DEGENERATE))
    ks = np.arange(1, len(Mk))
    if M > 0 and len(ks):
        rep.delta_witness = float(1 - np.max((Mk[1:] / M) ** (1.0 / ks)))
    a = _slope(rep)
    rep.alpha_fit = a
    if not isinstance(a, str):
        rhos = [lv.rho for lv in rep.levels]
        c = [np.linalg.norm(rhos[k] - rhos[i]) / (M * r ** (i * a))
             for k in range(len(rhos)) for i in range(k)]
        rep.C0 = float(max(c, default=0.0))
        if mode == "fractional":
            rep.tail_constant = float(max((lv.tail / (M * r ** (lv.k * a)) for lv in rep.levels),
                                          default=0.0))
    return rep


def _level_tail(traj, U, times, rho, Mk, x0, radius, t_anchor, r, s, l) -> float:
    """Tail of the negative part of h = M_k^2/2 + (1 - l) M_k - |u - rho_k|^2/2 outside B_{r^k}
    over (t0 - r^(2s(k+1)), t0]; in rescaled units this is Tail(h^-; 0, 1, -r^2s, 0)."""
    t_lo = t_anchor - r ** (2 * s) * radius ** (2 * s)
    sel = (times > t_lo - 1e-12) & (times <= t_anchor + 1e-12)
    d = U[sel] - rho.reshape((1, -1) + (1,) * (U.ndim - 2))
    h = 0.5 * Mk**2 + (1 - l) * Mk - 0.5 * (d**2).sum(axis=1)
    neg = np.maximum(-h, 0.0)
    if not neg.any():
        return 0.0
    w = tail_weights(traj.grid, x0, radius, s)
    return float(radius ** (2 * s) * np.tensordot(neg, w, axes=traj.grid.n).max())


def _slope(rep: CascadeReport):
    Mk = rep.M_k
    K = len(Mk) - 1
    idx = np.arange(2, K)
    if rep.degenerate or len(Mk) < 4 or np.any(Mk[idx] < DEGENERATE) or len(idx) < 2:
        return NOT_APPLICABLE
    x = idx * np.log(rep.r)
    return float(np.polyfit(x, np.log(Mk[idx]), 1)[0])


def holder_fit(report: CascadeReport, C: float | None = None, l: float | None = None):
    """(alpha, r_admissible). alpha is the log-linear slope over levels 2..K-1.

    r_admissible evaluates C r^(2s) < (1 - l)/2 with the battery constant C;
    report.alpha_admissible records alpha < min(2s, log_r(1 - delta)) + slack.
    """
    a = _slope(report)
    report.alpha_fit = a
    if isinstance(a, str):
        report.r_admissible = report.alpha_admissible = False
        return NOT_APPLICABLE, False
    l = report.M if l is None else l
    if C is not None:
        report.r_admissible = bool(C * report.r ** (2 * report.s) < (1 - l) / 2)
    d = report.delta_witness
    cap = 2 * report.s
    if 0 < d < 1:
        cap = min(cap, np.log(1 - d) / np.log(report.r))
    report.alpha_admissible = bool(0 < a < cap + AL_SLACK)
    return a, report.r_admissible


def fit_from_sequence(M_k, r: float, s: float = 0.5, M: float | None = None) -> CascadeReport:
    """Cascade report built from given M_k values (rho = 0), for testing fits."""
    M_k = np.asarray(M_k, float)
    rep = CascadeReport(r, s, "fractional", float(M if M is not None else M_k[0]), ((0.0,), 0.0))
    rep.levels = [Level(k, r**k, r ** (2 * s * k), float(m), np.zeros(1)) for k, m in enumerate(M_k)]
    rep.degenerate = bool(np.all(M_k < DEGENERATE))
    ks = np.arange(1, len(M_k))
    if rep.M > 0 and len(ks):
        rep.delta_witness = float(1 - np.max((M_k[1:] / rep.M) ** (1.0 / ks)))
    rep.max_level = len(M_k) - 1
    return rep


def update_law_audit(traj, report: CascadeReport, delta: float | None = None,
                     alpha: float | None = None) -> list[dict]:
    """Drive centres by rho_{k+1} = rho_k + delta * ubar_k and compare each
    increment with delta M r^(k alpha).

    ubar_k averages u - rho_k over B_{r^(k+1)} x (t0 - 2 r^(2s(k+1)), t0 - (5/4) r^(2s(k+1))),
    the rescaled region B_r x (-2 r^2s, -(5/4) r^2s) of level k.
    """
    delta = report.delta_witness if delta is None else delta
    alpha = report.alpha_fit if alpha is None else alpha
    if isinstance(alpha, str):
        raise CascadeError("no fitted alpha for the audit")
    g = traj.grid
    U = _stack(traj)
    times = np.asarray(traj.times)
    x0, t0 = report.anchor
    r, s, M = report.r, report.s, report.M
    rho = np.zeros(U.shape[1])
    out = []
    for k in range(report.max_level):
        rad = r ** (k + 1)
        dep = r ** (2 * s * (k + 1))
        lo, hi = t0 - 2 * dep, t0 - 1.25 * dep
        ts = (times > lo - 1e-12) & (times <= hi + 1e-12)
        w = ball_weights(g, x0, rad)
        if not ts.any() or w.sum() == 0 or lo < times[0] - 1e-9:
            break
        sub = U[ts] - rho.reshape((1, -1) + (1,) * g.n)
        ubar = (sub * w).sum(axis=tuple(range(2, sub.ndim))).mean(axis=0) / w.sum()
        inc = delta * float(np.linalg.norm(ubar))
        bound = delta * M * r ** (k * alpha)
        out.append({"k": k, "increment": inc, "bound": bound, "ok": inc <= bound + 1e-12})
        rho = rho + delta * ubar
    return out
