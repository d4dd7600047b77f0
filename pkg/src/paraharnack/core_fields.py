"""Periodic grids, sampled vector fields and Fourier multipliers.

Space is the torus [-L/2, L/2)^n sampled at x_i = -L/2 + i*h. A space-time
field additionally carries a time window of Nt cells of width dt tiling
[t_origin, t_origin + T_len), sampled at the cell centres, followed by a
margin of Nt // 4 samples. The margin belongs to the field data: constructors fill it with zeros (or the constant, for constant
fields) and multipliers act on the whole periodic time axis, so multiplier
compositions stay exact.

Frequencies are in cycles per unit length, so the Laplacian has symbol
(2*pi*|xi|)^2.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

EPS_BOX = 1e-8
_HEADER = struct.Struct("<qqdqdqd")


class EmptyRegionError(ValueError):
    pass


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    n: int
    N: int
    L: float
    Nt: int = 0
    T_len: float = 0.0
    t_origin: float = 0.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"dimension n must be 1 or 2, got {self.n}")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"N must be even and >= 8, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.Nt:
            if self.Nt < 4:
                raise ValueError(f"Nt must be >= 4, got {self.Nt}")
            if not self.T_len > 0:
                raise ValueError("a time axis needs T_len > 0")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def has_time(self) -> bool:
        return self.Nt > 0

    @property
    def dt(self) -> float:
        return self.T_len / self.Nt

    @property
    def pad(self) -> int:
        return self.Nt // 4

    @property
    def Nt_total(self) -> int:
        return self.Nt + self.pad

    @property
    def x(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.N)

    @property
    def t(self) -> np.ndarray:
        """Cell-centre sample times of the window (margin excluded)."""
        return self.t_origin + self.dt * (np.arange(self.Nt) + 0.5)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    def mesh(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*([self.x] * self.n), indexing="ij")

    def radius(self, x0=None) -> np.ndarray:
        """Minimum-image distance of every grid point to x0."""
        x0 = np.zeros(self.n) if x0 is None else np.atleast_1d(np.asarray(x0, float))
        sq = 0.0
        for ax, c in zip(self.mesh(), x0):
            d = (ax - c + self.L / 2) % self.L - self.L / 2
            sq = sq + d**2
        return np.sqrt(sq)

    def freqs(self) -> tuple[np.ndarray, ...]:
        """Broadcastable spatial frequencies (cycles per unit length)."""
        f = np.fft.fftfreq(self.N, d=self.h)
        out = []
        for ax in range(self.n):
            shape = [1] * self.n
            shape[ax] = self.N
            out.append(f.reshape(shape))
        return tuple(out)

    def xi_abs(self) -> np.ndarray:
        return np.sqrt(sum(f**2 for f in self.freqs()))

    def time_freqs(self) -> np.ndarray:
        """Time frequencies of the padded periodic axis, shape (Nt_total, 1, ...)."""
        sig = np.fft.fftfreq(self.Nt_total, d=self.dt)
        return sig.reshape((-1,) + (1,) * self.n)

    def spatial_only(self) -> "Grid":
        return Grid(self.n, self.N, self.L)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.n, self.N * factor, self.L, self.Nt * factor if self.Nt else 0,
                    self.T_len, self.t_origin)


@dataclass(frozen=True, eq=False)
class Field:
    """m-component field on a spatial grid, values of shape (m, N[, N])."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == self.grid.n:
            v = v[None]
        if v.shape[1:] != self.grid.spatial_shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.spatial_shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_function(cls, grid: Grid, f: Callable) -> "Field":
        """Sample f(*coords) -> array of shape (m, ...) or (...)."""
        return cls(grid, np.asarray(f(*grid.mesh()), dtype=float))

    @classmethod
    def constant(cls, grid: Grid, c) -> "Field":
        c = np.atleast_1d(np.asarray(c, float))
        return cls(grid, c.reshape((-1,) + (1,) * grid.n) * np.ones(grid.spatial_shape))

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def norm(self) -> np.ndarray:
        """Pointwise Euclidean norm |u(x)|."""
        return np.sqrt(np.sum(self.values**2, axis=0))

    def sup_norm(self) -> float:
        return float(self.norm().max())

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * _vals(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpaceTimeField(Field):
    """Field over the padded time axis, values of shape (m, Nt_total, N[, N])."""

    def __post_init__(self):
        g = self.grid
        if not g.has_time:
            raise ValueError("SpaceTimeField needs a grid with a time axis")
        v = np.asarray(self.values, dtype=float)
        shape = (g.Nt_total,) + g.spatial_shape
        if v.shape == shape:
            v = v[None]
        if v.shape[1:] != shape:
            raise ValueError(f"values shape {v.shape} does not match {shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, margin: str = "zero") -> "SpaceTimeField":
        """Sample f(t, *coords) on the window.

        ``margin="zero"`` pads with zeros; ``margin="extend"`` samples f on
        the margin times too (for fields periodic on the padded axis).
        """
        nt = grid.Nt if margin == "zero" else grid.Nt_total
        t = (grid.t_origin + grid.dt * (np.arange(nt) + 0.5)).reshape((-1,) + (1,) * grid.n)
        win = np.asarray(f(t, *[c[None] for c in grid.mesh()]), dtype=float)
        win = np.broadcast_to(win, win.shape[:-grid.n - 1] + (nt,) + grid.spatial_shape)
        if win.ndim == grid.n + 1:
            win = win[None]
        out = np.zeros((win.shape[0], grid.Nt_total) + grid.spatial_shape)
        out[:, :nt] = win
        return cls(grid, out)

    @classmethod
    def from_slices(cls, grid: Grid, slices) -> "SpaceTimeField":
        """Stack Nt spatial Fields (or arrays) into the window; zero margin."""
        parts = [np.asarray(_vals(s), float) for s in slices]
        parts = [p[None] if p.ndim == grid.n else p for p in parts]
        arr = np.stack(parts, axis=1)
        if arr.shape[1] != grid.Nt:
            raise ValueError(f"expected {grid.Nt} slices, got {arr.shape[1]}")
        out = np.zeros((arr.shape[0], grid.Nt_total) + grid.spatial_shape)
        out[:, :grid.Nt] = arr
        return cls(grid, out)

    @classmethod
    def constant(cls, grid: Grid, c) -> "SpaceTimeField":
        c = np.atleast_1d(np.asarray(c, float))
        shape = (grid.Nt_total,) + grid.spatial_shape
        return cls(grid, c.reshape((-1,) + (1,) * (grid.n + 1)) * np.ones(shape))

    def with_values(self, values) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, values)

    @property
    def window(self) -> np.ndarray:
        return self.values[:, :self.grid.Nt]

    def slice(self, j: int) -> Field:
        return Field(self.grid.spatial_only(), self.values[:, j])


def _vals(x):
    return x.values if isinstance(x, Field) else x


# -- multipliers --------------------------------------------------------------

def _spatial_axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(-grid.n, 0))


def apply_multiplier(F: Field, symbol: Callable) -> Field:
    """Apply the Fourier multiplier ``symbol`` component-wise.

    For a spatial field ``symbol(xi_1[, xi_2])`` receives broadcastable
    frequency arrays; for a space-time field it is called as
    ``symbol(sigma, xi_1[, xi_2])``. Real input with a conjugate-symmetric
    symbol gives real output; otherwise the real part is returned.
    """
    g = F.grid
    if isinstance(F, SpaceTimeField):
        args = (g.time_freqs(),) + tuple(f[None] for f in g.freqs())
        axes = (-g.n - 1,) + _spatial_axes(g)
    else:
        args = g.freqs()
        axes = _spatial_axes(g)
    sym = np.asarray(symbol(*args))
    sym = np.broadcast_to(sym, np.broadcast_shapes(*(a.shape for a in args)))
    if not np.all(np.isfinite(sym)):
        raise ValueError("multiplier symbol is not finite on every grid mode")
    out = np.fft.ifftn(sym * np.fft.fftn(F.values, axes=axes), axes=axes)
    return F.with_values(out.real)


def spectral_gradient(F: Field) -> np.ndarray:
    """Spatial gradient, shape (n, m, ...); works for space-time fields too."""
    g = F.grid
    axes = _spatial_axes(g)
    Fh = np.fft.fftn(F.values, axes=axes)
    return np.stack([np.fft.ifftn(2j * np.pi * f * Fh, axes=axes).real for f in g.freqs()])


def laplacian(F: Field) -> Field:
    """Spectral Laplacian in space only (slice by slice for space-time fields)."""
    g = F.grid
    axes = _spatial_axes(g)
    sym = -(2 * np.pi * g.xi_abs()) ** 2
    return F.with_values(np.fft.ifftn(sym * np.fft.fftn(F.values, axes=axes), axes=axes).real)


def dealias(values: np.ndarray, grid: Grid) -> np.ndarray:
    """2/3-rule: zero every mode above two thirds of the Nyquist index."""
    axes = _spatial_axes(grid)
    k = np.abs(np.fft.fftfreq(grid.N) * grid.N)
    mask = 1.0
    for ax in range(grid.n):
        shape = [1] * grid.n
        shape[ax] = grid.N
        mask = mask * (k <= grid.N / 3).reshape(shape)
    return np.fft.ifftn(mask * np.fft.fftn(values, axes=axes), axes=axes).real


def time_derivative(F: SpaceTimeField) -> np.ndarray:
    """Second-order finite-difference d/dt over the window, shape (m, Nt, ...)."""
    return np.gradient(F.window, F.grid.dt, axis=1)


# -- regions ----------------------------------------------------------------

@dataclass(frozen=True)
class Cylinder:
    """Ball B_r(x0) times the time interval (t_lo, t_hi]."""

    x0: tuple
    r: float
    t_lo: float
    t_hi: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("cylinder radius must be positive")
        if not self.t_lo < self.t_hi:
            raise ValueError("cylinder needs t_lo < t_hi")
        object.__setattr__(self, "x0", tuple(np.atleast_1d(np.asarray(self.x0, float))))

    @property
    def volume_space(self) -> float:
        return 2 * self.r if len(self.x0) == 1 else np.pi * self.r**2

    @property
    def volume(self) -> float:
        return self.volume_space * (self.t_hi - self.t_lo)


def _interval_fraction(c: np.ndarray, w: float, lo: float, hi: float) -> np.ndarray:
    """Length fraction of the cells [c - w/2, c + w/2] inside [lo, hi]."""
    return np.clip((np.minimum(c + w / 2, hi) - np.maximum(c - w / 2, lo)) / w, 0.0, 1.0)


def ball_weights(grid: Grid, x0, r: float) -> np.ndarray:
    """Fraction of each spatial cell lying in B_r(x0) (exact in 1-D, 4x4 subcells in 2-D)."""
    x0 = np.atleast_1d(np.asarray(x0, float))
    if grid.n == 1:
        d = (grid.x - x0[0] + grid.L / 2) % grid.L - grid.L / 2
        return _interval_fraction(d, grid.h, -r, r)
    sub = (np.arange(4) + 0.5) / 4 - 0.5
    X, Y = grid.mesh()
    dx = (X - x0[0] + grid.L / 2) % grid.L - grid.L / 2
    dy = (Y - x0[1] + grid.L / 2) % grid.L - grid.L / 2
    acc = np.zeros(grid.spatial_shape)
    for a in sub:
        for b in sub:
            acc += (dx + a * grid.h) ** 2 + (dy + b * grid.h) ** 2 <= r**2
    return acc / 16


def time_weights(grid: Grid, t_lo: float, t_hi: float) -> np.ndarray:
    return _interval_fraction(grid.t, grid.dt, t_lo, t_hi)


def check_cylinder(grid: Grid, Q: Cylinder) -> None:
    if Q.t_lo < grid.t_origin - 1e-12 or Q.t_hi > grid.t_origin + grid.T_len + 1e-12:
        raise EmptyRegionError(f"cylinder times ({Q.t_lo}, {Q.t_hi}] leave the time window")
    if any(abs(c) + Q.r > grid.L / 2 for c in Q.x0):
        raise EmptyRegionError("cylinder leaves the spatial box")


def region_stats(F: SpaceTimeField, Q: Cylinder) -> tuple[float, float, float]:
    """(average, inf, sup) of a scalar field over the cylinder Q.

    The average uses cell-fraction midpoint weights; inf and sup are taken
    over grid samples whose cell centre lies in Q.
    """
    if F.m != 1:
        raise ValueError("region_stats needs a scalar field")
    g = F.grid
    check_cylinder(g, Q)
    ws = ball_weights(g, Q.x0, Q.r)
    wt = time_weights(g, Q.t_lo, Q.t_hi)
    w = wt.reshape((-1,) + (1,) * g.n) * ws[None]
    inside_x = g.radius(Q.x0) <= Q.r + 1e-12
    inside_t = (g.t > Q.t_lo + 1e-12) & (g.t <= Q.t_hi + 1e-12)
    mask = inside_t.reshape((-1,) + (1,) * g.n) & inside_x[None]
    if w.sum() == 0 or not mask.any():
        raise EmptyRegionError("cylinder contains no grid point")
    v = F.window[0]
    return float((w * v).sum() / w.sum()), float(v[mask].min()), float(v[mask].max())


def decay_gate(values: np.ndarray, grid: Grid, eps: float = EPS_BOX, warn: bool = True) -> bool:
    """True when sup |values| on the outer 10% shell of the box is below eps."""
    shell = np.zeros(grid.spatial_shape, bool)
    for ax in grid.mesh():
        shell |= np.abs(ax) >= 0.4 * grid.L
    v = np.abs(np.asarray(values))
    peak = float(v[..., shell].max()) if v.size else 0.0
    ok = peak < eps
    if not ok and warn:
        warnings.warn(f"field reaches {peak:.3g} on the outer shell (gate {eps:g})",
                      TruncationWarning, stacklevel=2)
    return ok


# -- serialization --------------------------------------------------------------

def write_field(path, F: Field) -> None:
    """Binary layout: little-endian header (n, N, L, Nt, T_len, m, t_origin), then float64 values."""
    g = F.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.n, g.N, float(g.L), g.Nt, float(g.T_len), F.m, float(g.t_origin)))
        fh.write(np.ascontiguousarray(F.values, dtype="<f8").tobytes())


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        n, N, L, Nt, T_len, m, t0 = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    g = Grid(n, N, L, Nt, T_len, t0)
    if Nt:
        return SpaceTimeField(g, data.reshape((m, g.Nt_total) + g.spatial_shape).copy())
    return Field(g, data.reshape((m,) + g.spatial_shape).copy())


def write_csv(path, F: Field) -> None:
    """One row per grid point: coordinates (t first for space-time), then components."""
    g = F.grid
    coords = [c.ravel() for c in g.mesh()]
    lines = []
    if isinstance(F, SpaceTimeField):
        head = ["t"] + [f"x{i}" for i in range(g.n)] + [f"u{k}" for k in range(F.m)]
        for j, t in enumerate(g.t):
            comps = [F.values[k, j].ravel() for k in range(F.m)]
            for p in range(coords[0].size):
                lines.append([t] + [c[p] for c in coords] + [c[p] for c in comps])
    else:
        head = [f"x{i}" for i in range(g.n)] + [f"u{k}" for k in range(F.m)]
        comps = [F.values[k].ravel() for k in range(F.m)]
        for p in range(coords[0].size):
            lines.append([c[p] for c in coords] + [c[p] for c in comps])
    with open(path, "w") as fh:
        fh.write(",".join(head) + "\n")
        for row in lines:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
