"""Empirical checks of the three weak Harnack inequalities and of the
Caffarelli-type supersolution h = M^2/2 + (1 - l) M - |u|^2/2 - xi.u."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core_fields import Cylinder, Grid, SpaceTimeField, apply_multiplier, check_cylinder, laplacian, \
    region_stats, time_derivative
from .fractional_ops import frac_symbol
from .master_operator import hs_apply, hs_solve

BATTERY_VERSION = "harnack-battery-v1"
AUDIT_TOL = 1e-3
NEG_TOL = 1e-10
REPORT_COLUMNS = ["battery_id", "theorem_id", "s", "r", "R", "N", "l1_avg", "inf_plus", "tail",
                  "ratio", "residual_audit", "truncation_bound"]


class HypothesisViolation(ValueError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass
class HarnackReport:
    l1_avg: float
    inf_plus: float
    tail: float
    ratio: float
    regions: tuple
    params: dict = field(default_factory=dict)
    residual_audit: float = 0.0
    truncation_bound: float = 0.0
    tail_term: float = 0.0
    wk_min: float = float("nan")

    def __post_init__(self):
        vals = [self.l1_avg, self.inf_plus, self.tail, self.ratio]
        if not all(np.isfinite(vals)) or self.ratio < 0:
            raise HypothesisViolation(f"non-finite or negative report entries {vals}")
        lo, hi = self.regions
        if not lo.t_hi <= hi.t_lo + 1e-12:
            raise ValueError("the minus-region must precede the plus-region")

    def row(self, battery_id: str, theorem_id: str, N: int) -> list:
        p = self.params
        return [battery_id, theorem_id, p.get("s", ""), p.get("r", ""), p.get("R", ""), N,
                self.l1_avg, self.inf_plus, self.tail, self.ratio, self.residual_audit,
                self.truncation_bound]


def write_reports_csv(path, rows) -> None:
    def fmt(v):
        return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# -- tail ----------------------------------------------------------------------

def _cell_kernel_1d(x: np.ndarray, h: float, L: float, x0: float, R: float, s: float) -> np.ndarray:
    """int over (cell of x) minus B_R(x0) of |z - x0|^(-1-2s), cells clipped to the box."""
    def prim(d):
        # int_R^d r^(-1-2s) dr for d >= R
        d = np.maximum(d, R)
        return (R ** (-2 * s) - d ** (-2 * s)) / (2 * s)

    def seg(a, b):
        a = np.maximum(a - x0, -np.inf)
        b = b - x0
        right = prim(np.maximum(b, 0)) - prim(np.maximum(a, 0))
        left = prim(np.maximum(-a, 0)) - prim(np.maximum(-b, 0))
        return right + left

    lo, hi = x - h / 2, x + h / 2
    out = seg(np.maximum(lo, -L / 2), np.minimum(hi, L / 2))
    # the node at -L/2 also owns the periodic sliver [L/2 - h/2, L/2]
    wrap = lo < -L / 2
    out[wrap] += seg(lo[wrap] + L, np.full(wrap.sum(), L / 2))
    return out


def tail_weights(grid: Grid, x0, R: float, s: float) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, float))
    if grid.n == 1:
        return _cell_kernel_1d(grid.x, grid.h, grid.L, x0[0], R, s)
    sub = (np.arange(4) + 0.5) / 4 - 0.5
    X, Y = grid.mesh()
    acc = np.zeros(grid.spatial_shape)
    for a in sub:
        for b in sub:
            d = np.hypot(X + a * grid.h - x0[0], Y + b * grid.h - x0[1])
            acc += np.where(d >= R, np.maximum(d, 1e-300) ** (-2 - 2 * s), 0.0)
    return acc * grid.h**2 / 16


def _exterior_bound(grid: Grid, x0, s: float) -> float:
    """int outside the box of |z - x0|^(-n-2s)."""
    x0 = np.atleast_1d(np.asarray(x0, float))
    if grid.n == 1:
        return float(((grid.L / 2 - x0[0]) ** (-2 * s) + (grid.L / 2 + x0[0]) ** (-2 * s)) / (2 * s))
    d = grid.L / 2 - np.abs(x0).max()
    return float(2 * np.pi * d ** (-2 * s) / (2 * s))


def tail_infty(v: SpaceTimeField, x0, R: float, t1: float, t2: float, s: float,
               return_bound: bool = False):
    """R^(2s) sup_{t1 < t < t2} int_{box minus B_R(x0)} |v| / |x - x0|^(n + 2s).

    |v| is taken constant on each grid cell. With ``return_bound`` also
    returns a bound on the part beyond the box, from the largest |v| on the
    outer shell.
    """
    g = v.grid
    check_cylinder(g, Cylinder(tuple(np.atleast_1d(x0).astype(float)), R, t1, t2))
    sel = (g.t > t1 + 1e-12) & (g.t < t2 + 1e-12)
    if not sel.any():
        raise PreconditionError("no grid time in (t1, t2)")
    w = tail_weights(g, x0, R, s)
    a = np.abs(v.window[:, sel]).sum(axis=0)
    val = float(R ** (2 * s) * np.max(np.tensordot(a, w, axes=g.n)))
    if not return_bound:
        return val
    shell = g.radius() >= 0.45 * g.L
    edge = float(a[:, shell].max()) if shell.any() else 0.0
    return val, float(R ** (2 * s) * edge * _exterior_bound(g, x0, s))


# -- audits --------------------------------------------------------------------

def _interior(grid: Grid) -> slice:
    k = max(2, grid.Nt // 32)
    return slice(k, grid.Nt - k)


def _min_ratio(res: np.ndarray, v: SpaceTimeField) -> float:
    scale = float(np.abs(v.window).max())
    if scale == 0:
        return 0.0
    return float(res[:, _interior(v.grid)].min() / scale)


def heat_residual(v: SpaceTimeField) -> np.ndarray:
    """d_t v - Delta v on the window (time by central differences)."""
    lap = laplacian(v).values[:, :v.grid.Nt]
    return time_derivative(v) - lap


def _spatial_multiplier(v: SpaceTimeField, symbol) -> np.ndarray:
    g = v.grid
    axes = tuple(range(-g.n, 0))
    sym = symbol(*g.freqs())
    return np.fft.ifftn(sym * np.fft.fftn(v.window, axes=axes), axes=axes).real


def _master_audit_mask(grid: Grid) -> np.ndarray:
    """Interior window times up to t = 0, crossed with B_2: where the
    supersolution property is assumed."""
    sel = np.zeros(grid.Nt, bool)
    sel[_interior(grid)] = True
    sel &= grid.t <= 1e-12
    return sel.reshape((-1,) + (1,) * grid.n) & (grid.radius() < 2.0)[None]


def _check_nonneg(v: SpaceTimeField, Q: Cylinder | None = None) -> None:
    g = v.grid
    w = v.window[0]
    if Q is not None:
        inside = ((g.t > Q.t_lo - 1e-12) & (g.t <= Q.t_hi + 1e-12)).reshape((-1,) + (1,) * g.n) \
            & (g.radius(Q.x0) <= Q.r + 1e-12)[None]
        w = w[inside]
    if w.size and w.min() < -NEG_TOL * max(1.0, float(np.abs(v.window).max())):
        raise HypothesisViolation(f"v takes the negative value {w.min():.3g}")


def _audit(value: float, what: str, audit: bool) -> None:
    if audit and value < -AUDIT_TOL:
        raise HypothesisViolation(f"{what} residual {value:.3g} below -{AUDIT_TOL} x scale")


# -- reports -------------------------------------------------------------------

def harnack_report_local(v: SpaceTimeField, audit: bool = True) -> HarnackReport:
    """Average over B_1 x (-1, -1/3) against the minimum over B_1 x (0, 1/2)."""
    if v.m != 1:
        raise ValueError("scalar field required")
    origin = (0.0,) * v.grid.n
    minus, plus = Cylinder(origin, 1.0, -1.0, -1 / 3), Cylinder(origin, 1.0, 0.0, 0.5)
    _check_nonneg(v, Cylinder(origin, 1.0, -1.0, 0.5))
    res = _min_ratio(heat_residual(v), v)
    _audit(res, "heat", audit)
    avg = region_stats(v, minus)[0]
    inf = region_stats(v, plus)[1]
    ratio = avg / inf if inf > 0 else np.inf
    return HarnackReport(avg, inf, 0.0, ratio, (minus, plus), {"r": 1.0}, res)


def harnack_report_fractional(v: SpaceTimeField, x0, t0: float, r: float, R: float, s: float,
                              audit: bool = True) -> HarnackReport:
    """U- = B_r x (t0 - 2 r^2s, t0 - r^2s], U+ = B_r x (t0 - r^2s / 2, t0]; tail of v^- outside B_R."""
    if not 0 < r < R / 2:
        raise PreconditionError(f"need 0 < r < R/2, got r = {r}, R = {R}")
    if v.m != 1:
        raise ValueError("scalar field required")
    x0 = tuple(np.atleast_1d(np.asarray(x0, float)))
    rs = r ** (2 * s)
    minus = Cylinder(x0, r, t0 - 2 * rs, t0 - rs)
    plus = Cylinder(x0, r, t0 - rs / 2, t0)
    _check_nonneg(v, Cylinder(x0, R, t0 - 2 * rs, t0))
    res = _min_ratio(time_derivative(v) + _spatial_multiplier(v, frac_symbol(s)), v)
    _audit(res, "fractional heat", audit)
    neg = v.with_values(np.maximum(-v.values, 0.0))
    tail, bound = tail_infty(neg, x0, R, t0 - 2 * rs, t0, s, return_bound=True)
    term = (r / R) ** (2 * s) * tail
    avg = region_stats(v, minus)[0]
    inf = region_stats(v, plus)[1]
    den = inf + term
    ratio = avg / den if den > 0 else np.inf
    return HarnackReport(avg, inf, tail, ratio, (minus, plus), {"s": s, "r": r, "R": R}, res,
                         (r / R) ** (2 * s) * bound, term)


def wk_ratios(v: SpaceTimeField, probes) -> np.ndarray:
    """v(p) / int over {|x - xi| < 1/2, 1/4 < t_p - t < 1/2} of v, for probe points (xi, t_p)."""
    out = []
    g = v.grid
    for xi, tp in probes:
        Q = Cylinder(tuple(np.atleast_1d(xi).astype(float)), 0.5, tp - 0.5, tp - 0.25)
        integral = region_stats(v, Q)[0] * Q.volume
        it = int(np.argmin(np.abs(g.t - tp)))
        ix = np.unravel_index(np.argmin(g.radius(Q.x0)), g.spatial_shape)
        val = v.window[(0, it) + ix]
        out.append(val / integral if integral > 0 else np.inf)
    return np.array(out)


def default_wk_probes(grid: Grid, stride_x: int = 4, stride_t: int = 2):
    """Grid points of B_1/2 x (-1/4, 0]."""
    t = grid.t[(grid.t > -0.25) & (grid.t <= 0.0)][::stride_t]
    inside = grid.radius() < 0.5
    pts = np.stack([a[inside] for a in grid.mesh()], axis=1)[::stride_x]
    return [(np.array(p), float(tp)) for p in pts for tp in t]


def harnack_report_master(v: SpaceTimeField, s: float, audit: bool = True, probes=None) -> HarnackReport:
    """L1 norm over B_1/2 x (-1, -1/2) against the infimum over B_1/2 x (-1/4, 0)."""
    if v.m != 1:
        raise ValueError("scalar field required")
    origin = (0.0,) * v.grid.n
    minus, plus = Cylinder(origin, 0.5, -1.0, -0.5), Cylinder(origin, 0.5, -0.25, 0.0)
    _check_nonneg(v)
    hv = hs_apply(v, s).values[0, :v.grid.Nt]
    scale = float(np.abs(v.window).max())
    res = float(hv[_master_audit_mask(v.grid)].min() / scale) if scale > 0 else 0.0
    _audit(res, "master operator", audit)
    l1 = region_stats(v, minus)[0] * minus.volume
    inf = region_stats(v, plus)[1]
    ratio = l1 / inf if inf > 0 else np.inf
    wk = wk_ratios(v, default_wk_probes(v.grid) if probes is None else probes)
    return HarnackReport(l1, inf, 0.0, ratio, (minus, plus), {"s": s, "r": 0.5}, res,
                         wk_min=float(wk.min()))


# -- Caffarelli-type supersolution ----------------------------------------------

def caffarelli_h(u: SpaceTimeField, xi, M: float, l: float) -> SpaceTimeField:
    xi = np.asarray(xi, float).reshape((-1,) + (1,) * (u.grid.n + 1))
    if xi.shape[0] != u.m:
        raise ValueError("xi must have one entry per component")
    if np.linalg.norm(xi) > 1 - l + 1e-12:
        raise PreconditionError(f"|xi| = {np.linalg.norm(xi):.4g} exceeds 1 - l = {1 - l:.4g}")
    if np.sqrt(np.sum(u.window**2, axis=0)).max() > M + 1e-12:
        raise PreconditionError("||u||_inf exceeds M")
    h = 0.5 * M**2 + (1 - l) * M - 0.5 * np.sum(u.values**2, axis=0) - np.sum(xi * u.values, axis=0)
    h[u.grid.Nt:] = 0.0
    return SpaceTimeField(u.grid, h[None])


def supersolution_audit(h: SpaceTimeField, s: float | None = None) -> float:
    """Smallest interior residual of h over its scale; s = None selects the heat operator."""
    if s is None:
        res = time_derivative(h) - _spatial_multiplier(h, lambda *xi: -(2 * np.pi) ** 2 * sum(x**2 for x in xi))
    else:
        res = time_derivative(h) + _spatial_multiplier(h, frac_symbol(s))
    return _min_ratio(res, h)


# -- battery ---------------------------------------------------------------------

def battery_grid(N: int = 256, Nt: int = 128, L: float = 16.0) -> Grid:
    return Grid(1, N, L, Nt, 2.0, -1.25)


BATTERY = {
    "version": BATTERY_VERSION,
    "members": [
        {"id": "const-1", "kind": "constant", "c": 1.0},
        {"id": "const-2.5", "kind": "constant", "c": 2.5},
        {"id": "heat-a0-w0.5-ts-1.5", "kind": "heat", "a": 0.0, "width": 0.5, "t_start": -1.5},
        {"id": "heat-a0.4-w0.3-ts-2", "kind": "heat", "a": 0.4, "width": 0.3, "t_start": -2.0},
        {"id": "heat-a-0.3-w0.8-ts-2", "kind": "heat", "a": -0.3, "width": 0.8, "t_start": -2.0},
        {"id": "frac-a0-w0.5-ts-1.5", "kind": "frac", "a": 0.0, "width": 0.5, "t_start": -1.5},
        {"id": "frac-a0.3-w0.3-ts-1.4", "kind": "frac", "a": 0.3, "width": 0.3, "t_start": -1.4},
        {"id": "frac-signed-far", "kind": "frac_signed", "a": 0.0, "width": 0.5, "t_start": -1.5,
         "far": 5.0, "far_amp": 0.2},
        {"id": "hsolve-a0-w0.4", "kind": "hs_solve", "a": 0.0, "width": 0.4, "t_c": -0.6, "t_w": 0.15},
        {"id": "hsolve-a0.5-w0.6", "kind": "hs_solve", "a": 0.5, "width": 0.6, "t_c": -0.9, "t_w": 0.2},
    ],
    "theorems": {
        "local": ["const-1", "const-2.5", "heat-a0-w0.5-ts-1.5", "heat-a0.4-w0.3-ts-2",
                  "heat-a-0.3-w0.8-ts-2"],
        "fractional": ["const-1", "const-2.5", "frac-a0-w0.5-ts-1.5", "frac-a0.3-w0.3-ts-1.4",
                       "frac-signed-far"],
        "master": ["const-1", "const-2.5", "heat-a0-w0.5-ts-1.5", "heat-a0.4-w0.3-ts-2",
                   "heat-a-0.3-w0.8-ts-2", "hsolve-a0-w0.4", "hsolve-a0.5-w0.6"],
    },
    "fractional_params": {"x0": 0.0, "t0": 0.0, "r": 0.5, "R": 2.0},
}


def _evolved(grid: Grid, a: float, width: float, t_start: float, symbol) -> SpaceTimeField:
    """e^{-(t - t_start) symbol} applied to a Gaussian bump, on the window; zero margin."""
    sg = grid.spatial_only()
    bump = np.exp(-((sg.x - a) ** 2) / (2 * width**2))
    bh = np.fft.fft(bump)
    lam = symbol(*sg.freqs())
    vals = np.zeros((1, grid.Nt_total, grid.N))
    vals[0, :grid.Nt] = np.fft.ifft(np.exp(-np.outer(grid.t - t_start, lam)) * bh, axis=-1).real
    return SpaceTimeField(grid, vals)


def _margin_compensated_bump(grid: Grid, member: dict) -> SpaceTimeField:
    """Nonnegative Gaussian bump on the window, minus a smooth bump of equal
    mass placed in the margin, so the padded field has zero mean."""
    tp = grid.t_origin + grid.dt * (np.arange(grid.Nt_total) + 0.5)
    x = grid.x
    bump = np.exp(-((x - member["a"]) ** 2) / (2 * member["width"] ** 2))
    on = np.exp(-((tp - member["t_c"]) ** 2) / (2 * member["t_w"] ** 2))
    on[grid.Nt:] = 0.0
    mid = tp[grid.Nt + grid.pad // 2]
    off = np.exp(-((tp - mid) ** 2) / (2 * (grid.pad * grid.dt / 8) ** 2))
    off[:grid.Nt] = 0.0
    off *= on.sum() / off.sum()
    return SpaceTimeField(grid, ((on - off)[:, None] * bump[None])[None])


def build_member(member: dict, grid: Grid, s: float = 0.5) -> SpaceTimeField:
    kind = member["kind"]
    if kind == "constant":
        return SpaceTimeField.constant(grid, member["c"])
    if kind == "heat":
        return _evolved(grid, member["a"], member["width"], member["t_start"], frac_symbol(1.0))
    if kind == "frac":
        return _evolved(grid, member["a"], member["width"], member["t_start"], frac_symbol(s))
    if kind == "frac_signed":
        near = _evolved(grid, member["a"], member["width"], member["t_start"], frac_symbol(s))
        far = _evolved(grid, member["a"] + member["far"], member["width"], member["t_start"], frac_symbol(s))
        return near - far * member["far_amp"]
    if kind == "hs_solve":
        v = hs_solve(_margin_compensated_bump(grid, member), s)
        # lift by a constant (invisible to hs_apply) so the member is nonnegative
        lift = max(0.0, -float(v.window.min())) * 1.05
        return v.with_values(v.values + lift)
    raise ValueError(f"unknown battery member kind {kind!r}")


def run_battery(theorem: str, N: int = 256, Nt: int = 128, s: float = 0.5, audit: bool = True) -> dict:
    """Reports for every member attached to a theorem, plus the battery-wide ratio cap."""
    grid = battery_grid(N, Nt)
    members = {m["id"]: m for m in BATTERY["members"]}
    fp = BATTERY["fractional_params"]
    reports = {}
    for mid in BATTERY["theorems"][theorem]:
        v = build_member(members[mid], grid, s)
        if theorem == "local":
            reports[mid] = harnack_report_local(v, audit)
        elif theorem == "fractional":
            reports[mid] = harnack_report_fractional(v, fp["x0"], fp["t0"], fp["r"], fp["R"], s, audit)
        else:
            reports[mid] = harnack_report_master(v, s, audit)
    cap = max(r.ratio for r in reports.values())
    out = {"reports": reports, "ratio_cap": cap, "grid": grid}
    if theorem == "master":
        out["wk_floor"] = min(r.wk_min for r in reports.values())
    return out


def battery_rows(theorem: str, result: dict) -> list:
    N = result["grid"].N
    return [rep.row(f"{BATTERY_VERSION}:{mid}", theorem, N) for mid, rep in result["reports"].items()]
