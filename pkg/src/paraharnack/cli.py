"""Command-line experiment runner. Exit codes: 0 pass, 1 verification failure, 2 configuration error."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import shutil
import sys
import warnings
from dataclasses import dataclass, fields

import numpy as np

SCHEMA_VERSION = 1
FLOWS = ("local", "fractional", "master")
THEOREMS = {"local": "local", "fractional": "fractional", "master": "master", "f2": "master"}
PASSES = ("carre", "scaling", "semigroup", "normalization", "trace", "residual", "neumann")
INITS = ("sphere-wave", "gaussian")


class ConfigError(ValueError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


@dataclass
class ExperimentConfig:
    schema: int = SCHEMA_VERSION
    n: int = 1
    N: int = 256
    L: float = 16.0
    Nt: int = 128
    T_len: float = 2.0
    flow: str = "fractional"
    s: float = 0.5
    M: float = 0.5
    dt: float = 1e-3
    T: float = 0.1
    init: str = "gaussian"
    battery: str = "harnack-battery-v1"
    theorem: str = "master"
    passes: tuple = PASSES
    r: float = 0.5
    R: float = 2.0
    K: int = 12
    x0: float = 0.0
    t1: float = -1.0
    t2: float = 0.0
    member: str = "frac-signed-far"
    out: str = "out"

    # -- textual form -----------------------------------------------------------
    def to_strings(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                out[f.name] = ",".join(v)
            elif isinstance(v, float):
                out[f.name] = repr(v)
            else:
                out[f.name] = str(v)
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_strings().items())

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        kv = {}
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError([f"line {ln}: expected key = value"])
            k, v = (p.strip() for p in line.split("=", 1))
            kv[k] = v
        return cls.from_strings(kv)

    @classmethod
    def from_strings(cls, kv: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        problems = [f"unknown key {k!r}" for k in kv if k not in known]
        vals = {}
        for k, v in kv.items():
            if k not in known:
                continue
            try:
                vals[k] = _parse(known[k], v)
            except ValueError as exc:
                problems.append(f"{k}: {exc}")
        if problems:
            raise ConfigError(problems)
        return cls(**vals)

    # -- validation ---------------------------------------------------------------
    def problems(self, command: str | None = None) -> list[str]:
        out = []
        if self.schema != SCHEMA_VERSION:
            out.append(f"schema: unsupported version {self.schema}")
        if self.n not in (1, 2):
            out.append("n: must be 1 or 2")
        if self.N < 8 or self.N % 2:
            out.append("N: must be even and >= 8")
        if not self.L > 0:
            out.append("L: must be positive")
        if self.Nt < 4:
            out.append("Nt: must be >= 4")
        if not self.T_len > 0:
            out.append("T_len: must be positive")
        if self.flow not in FLOWS:
            out.append(f"flow: must be one of {FLOWS}")
        if not 0 < self.s < 1:
            out.append("s: must lie in (0, 1)")
        if not 0 < self.M <= 0.99 and not (self.init == "sphere-wave" and self.M == 1.0):
            out.append("M: must lie in (0, 0.99] (or equal 1 for sphere-valued data)")
        if self.init not in INITS:
            out.append(f"init: must be one of {INITS}")
        if self.theorem not in THEOREMS:
            out.append(f"theorem: must be one of {tuple(THEOREMS)}")
        bad = [p for p in self.passes if p not in PASSES]
        if bad:
            out.append(f"passes: unknown {bad}")
        if not 0 < self.r < 1:
            out.append("r: must lie in (0, 1)")
        if not self.R > 0:
            out.append("R: must be positive")
        if self.K < 4:
            out.append("K: must be >= 4")
        if not self.t1 < self.t2:
            out.append("t1: must be < t2")
        if not self.dt > 0:
            out.append("dt: must be positive")
        if not self.T > 0:
            out.append("T: must be positive")
        elif self.dt > 0 and abs(round(self.T / self.dt) * self.dt - self.T) > 1e-9 * max(self.T, 1):
            out.append("T: must be an integer multiple of dt")
        if command in ("run-local", "run-fractional", "cascade") and not out:
            from .core_fields import Grid
            from .fractional_flow import max_dt as frac_dt
            from .fractional_ops import FracParams
            from .local_flow import max_dt as local_dt
            g = Grid(self.n, self.N, self.L)
            local = command == "run-local" or (command == "cascade" and self.flow == "local")
            bound = local_dt(g) if local else frac_dt(g, FracParams(self.s, self.n))
            if self.dt > bound * (1 + 1e-12):
                out.append(f"dt: exceeds the stability bound {bound:.4g}")
            if command == "cascade" and self.flow == "master":
                out.append("flow: cascades need flow = local or fractional")
            if self.n != 1 and not local:
                out.append("n: the fractional flow is one-dimensional")
        if command == "harnack" and THEOREMS.get(self.theorem) == "fractional" and not self.r < self.R / 2:
            out.append("r: the fractional theorem needs r < R/2")
        if command in ("harnack", "tail", "verify-extension") and self.n != 1:
            out.append("n: batteries and extension checks are one-dimensional")
        return out


def _parse(f: dataclasses.Field, v: str):
    t = f.type if isinstance(f.type, str) else f.type.__name__
    if t == "int":
        return int(v)
    if t == "float":
        return float(v)
    if t == "tuple":
        return tuple(p.strip() for p in v.split(",") if p.strip())
    return v


# -- helpers ---------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _initial_field(cfg: ExperimentConfig):
    from .core_fields import Field, Grid
    g = Grid(cfg.n, cfg.N, cfg.L)
    if cfg.init == "sphere-wave":
        k = 2 * np.pi / cfg.L

        def f(*xs):
            phase = 0.5 * np.sin(k * xs[0])
            amp = cfg.M
            return amp * np.stack([np.cos(phase), np.sin(phase)])
        return Field.from_function(g, f)

    def f(*xs):
        r2 = sum(x**2 for x in xs)
        return cfg.M * np.exp(-r2 / 2) * np.stack([np.cos(xs[0]), np.sin(xs[0])])
    return Field.from_function(g, f)


def _run_flow(cfg: ExperimentConfig, which: str, t0: float = 0.0, T: float | None = None):
    from .fractional_flow import run_fractional
    from .fractional_ops import FracParams
    from .local_flow import run_local
    u0 = _initial_field(cfg)
    T = cfg.T if T is None else T
    if which == "local":
        return run_local(u0, T, cfg.dt, t0=t0)
    return run_fractional(u0, T, cfg.dt, FracParams(cfg.s, cfg.n), t0=t0)


# -- subcommands -------------------------------------------------------------------

def cmd_run_local(cfg, out) -> int:
    traj = _run_flow(cfg, "local")
    traj.export(os.path.join(out, "trajectory"))
    d = traj.diagnostics
    _write_rows(os.path.join(out, "summary.csv"), ["key", "value"],
                [("M", d["M"]), ("sphere_valued", d["sphere_valued"]),
                 ("max_sphere_defect", d["max_sphere_defect"]), ("final_sup_norm", d["sup_norm"][-1])])
    return 0


def cmd_run_fractional(cfg, out) -> int:
    from .fractional_flow import b_statistics_columns
    traj = _run_flow(cfg, "fractional")
    traj.export(os.path.join(out, "trajectory"), b_statistics_columns(traj, 1))
    d = traj.diagnostics
    hits = d["validator_hits"]
    _write_rows(os.path.join(out, "summary.csv"), ["key", "value"],
                [("M", d["M"]), ("max_B", d["max_B"]), ("growth_hits", hits["growth"]),
                 ("aligned_hits", hits["aligned"]), ("final_sup_norm", d["sup_norm"][-1])])
    return 0 if hits["growth"] == 0 and hits["aligned"] == 0 else 1


def identity_checks(cfg) -> list[tuple]:
    """(name, value, tolerance) for the operator identity passes."""
    from .core_fields import Field, Grid, SpaceTimeField
    from .fractional_ops import FracParams, carre_du_champ_residual, scaling_check
    from .master_operator import extension_build, hs_apply
    rows = []
    g = Grid(1, cfg.N, cfg.L)
    u = Field.from_function(g, lambda x: np.exp(-2 * x**2) * (1 + 0.3 * np.sin(x)))
    for s in (0.25, 0.5, 0.75):
        p = FracParams(s)
        if "carre" in cfg.passes:
            rows.append((f"carre_du_champ s={s}", carre_du_champ_residual(u, p), 1e-12))
        if "scaling" in cfg.passes:
            rows.append((f"scaling lambda=1/2 s={s}", scaling_check(u, 0.5, p), 1e-3))
    gt = Grid(1, 64, cfg.L, 64, 4.0, -2.0)
    bump = SpaceTimeField.from_function(gt, lambda t, x: np.exp(-x**2 / 2 - t**2 / 0.1))
    if "semigroup" in cfg.passes:
        a = hs_apply(hs_apply(bump, 0.3), 0.45).values
        b = hs_apply(bump, 0.75).values
        rows.append(("semigroup 0.3+0.45", float(np.abs(a - b).max() / np.abs(b).max()), 1e-12))
        one = hs_apply(bump, 1.0).values
        from .master_operator import heat_operator
        ref = heat_operator(bump).values
        rows.append(("s=1 heat operator", float(np.abs(one - ref).max() / np.abs(ref).max()), 1e-12))
    if "normalization" in cfg.passes:
        c = SpaceTimeField.constant(gt, 1.0)
        for s in (0.25, 0.5, 0.75):
            st = extension_build(c, FracParams(s), [1e-3, 1e-2, 0.1, 1.0])
            err = max(float(np.abs(sl.values - 1).max()) for sl in st.slices)
            rows.append((f"extension of 1 s={s}", err, 1e-10))
    return rows


def extension_checks(cfg) -> list[tuple]:
    """(name, value, tolerance, passed) for the extension passes."""
    from .core_fields import Grid, SpaceTimeField
    from .fractional_ops import FracParams
    from .master_operator import extension_build, measured_order, neumann_trace_estimate, \
        trace_errors, weighted_residual
    gt = Grid(1, 64, cfg.L, 64, 4.0, -2.0)
    bump = SpaceTimeField.from_function(gt, lambda t, x: np.exp(-x**2 / 2 - t**2 / 0.1))
    rows = []
    ys = np.geomspace(1e-4, 1e-2, 6)
    for s in (0.25, 0.5, 0.75):
        p = FracParams(s)
        st = extension_build(bump, p, ys)
        if "trace" in cfg.passes:
            order = measured_order(ys, trace_errors(st))
            target = min(1.0, 2 * s) - 0.1
            rows.append((f"trace order s={s}", order, target, order >= target))
        if "neumann" in cfg.passes:
            C, spread = neumann_trace_estimate(bump, p, stack=st)
            rows.append((f"neumann spread s={s}", spread, 0.02, spread <= 0.02 and C > 0))
            rows.append((f"neumann C s={s}", C, 0.0, C > 0))
    if "residual" in cfg.passes:
        p = FracParams(0.5)
        res = []
        for dy in (0.05, 0.025):
            st = extension_build(bump, p, np.arange(0.2, 0.6 + 1e-9, dy), check_first=False)
            r, scale = weighted_residual(st)
            res.append(float(np.abs(r).max() / scale))
        rows.append(("weighted residual coarse", res[0], 1e-2, res[0] <= 1e-2))
        rows.append(("weighted residual refined", res[1], res[0] / 2, res[1] <= res[0] / 2))
    return rows


def cmd_verify_identities(cfg, out) -> int:
    rows = [(n, v, tol, v <= tol) for n, v, tol in identity_checks(cfg)]
    _write_rows(os.path.join(out, "identities.csv"), ["check", "value", "tolerance", "pass"], rows)
    return 0 if all(r[3] for r in rows) else 1


def cmd_verify_extension(cfg, out) -> int:
    rows = extension_checks(cfg)
    _write_rows(os.path.join(out, "extension.csv"), ["check", "value", "target", "pass"], rows)
    return 0 if all(r[3] for r in rows) else 1


def cmd_harnack(cfg, out) -> int:
    from .harnack_lab import HypothesisViolation, battery_rows, run_battery, write_reports_csv
    if cfg.battery != "harnack-battery-v1":
        raise ConfigError([f"battery: unknown manifest {cfg.battery!r}"])
    theorem = THEOREMS[cfg.theorem]
    try:
        res = run_battery(theorem, N=cfg.N, Nt=cfg.Nt, s=cfg.s)
    except HypothesisViolation as exc:
        print(f"hypothesis audit failed: {exc}", file=sys.stderr)
        return 1
    write_reports_csv(os.path.join(out, f"harnack_{theorem}.csv"), battery_rows(theorem, res))
    return 0


def cmd_cascade(cfg, out) -> int:
    from .harnack_lab import run_battery
    from .oscillation_lab import holder_fit, oscillation_cascade
    if cfg.flow == "local":
        traj = _run_flow(cfg, "local", t0=-1.0, T=1.5)
        rep = oscillation_cascade(traj, mode="local", K=cfg.K, anchor=((cfg.x0,), 0.0))
        C = None
    else:
        traj = _run_flow(cfg, "fractional", t0=-1.0, T=1.0)
        rep = oscillation_cascade(traj, cfg.r, cfg.s, "fractional", K=cfg.K, anchor=((cfg.x0,), 0.0))
        C = run_battery("fractional", N=256, Nt=128, s=cfg.s)["ratio_cap"]
    holder_fit(rep, C=C)
    rep.write_csv(os.path.join(out, "cascade.csv"))
    return 0 if rep.delta_witness > 0 else 1


def cmd_tail(cfg, out) -> int:
    from .harnack_lab import BATTERY, battery_grid, build_member, tail_infty
    members = {m["id"]: m for m in BATTERY["members"]}
    if cfg.member not in members:
        raise ConfigError([f"member: unknown battery member {cfg.member!r}"])
    v = build_member(members[cfg.member], battery_grid(cfg.N, cfg.Nt), cfg.s)
    neg = v.with_values(np.maximum(-v.values, 0.0))
    rows = []
    for name, field in (("abs", v), ("negative_part", neg)):
        val, bound = tail_infty(field, (cfg.x0,), cfg.R, cfg.t1, cfg.t2, cfg.s, return_bound=True)
        rows.append((cfg.member, name, cfg.x0, cfg.R, cfg.t1, cfg.t2, cfg.s, val, bound))
    _write_rows(os.path.join(out, "tail.csv"),
                ["member", "part", "x0", "R", "t1", "t2", "s", "tail", "truncation_bound"], rows)
    return 0


COMMANDS = {
    "run-local": cmd_run_local,
    "run-fractional": cmd_run_fractional,
    "verify-identities": cmd_verify_identities,
    "verify-extension": cmd_verify_extension,
    "harnack": cmd_harnack,
    "cascade": cmd_cascade,
    "tail": cmd_tail,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="paraharnack")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value configuration file")
        for f in fields(ExperimentConfig):
            sp.add_argument(f"--{f.name}", dest=f"opt_{f.name}", default=None)
    return ap


def load_config(args) -> ExperimentConfig:
    kv = {}
    if args.config:
        with open(args.config) as fh:
            base = ExperimentConfig.from_text(fh.read())
        kv = base.to_strings()
    for f in fields(ExperimentConfig):
        v = getattr(args, f"opt_{f.name}")
        if v is not None:
            kv[f.name] = v
    return ExperimentConfig.from_strings(kv)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        problems = cfg.problems(args.command)
        if problems:
            raise ConfigError(problems)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    os.makedirs(cfg.out, exist_ok=True)
    stage = os.path.join(cfg.out, f".staging-{args.command}")
    shutil.rmtree(stage, ignore_errors=True)
    os.makedirs(stage)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with open(os.path.join(stage, "config.txt"), "w") as fh:
                fh.write(cfg.to_text())
            code = COMMANDS[args.command](cfg, stage)
    except ConfigError as exc:
        shutil.rmtree(stage, ignore_errors=True)
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    except Exception as exc:
        shutil.rmtree(stage, ignore_errors=True)
        from .local_flow import ConfigurationError
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigurationError) else 1
    for name in os.listdir(stage):
        dst = os.path.join(cfg.out, name)
        if os.path.isdir(dst):
            shutil.rmtree(dst)
        os.replace(os.path.join(stage, name), dst)
    os.rmdir(stage)
    print(f"{args.command}: {'pass' if code == 0 else 'verification failure'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
