"""Ensemble experiments: configuration, realization loop, averaging, fitting
and file output.

A run draws ``realizations`` disorder samples with sub-seeds derived from
``master_seed``, evolves each one, and sums the traces in realization-index
order so that results do not depend on the number of workers.  Sweeps reuse
the same sub-seeds for every drive amplitude.
"""
from __future__ import annotations

import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import BlochDisorder, bloch_ensemble
from .engine import (EvolutionPlan, Trace, check_size, evolve_and_record,
                     evolve_independent_spins, init_product_state)
from .fitting import FitResult, RateSweep, fit, linear_rate_fit
from .geometry import LorentzianSpec, draw_realization, subseed
from .hamiltonian import FR_MHZ, ModelParams, build_couplings
from . import oracles

MODES = ("rabi", "t2", "oracle", "bloch")
ORACLE_KINDS = ("auto", "ideal", "mw", "gxy", "gz")


class ConfigError(ValueError):
    pass


class OracleInapplicableError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    def parse(text):
        return None if text.strip().lower() in ("none", "") else conv(text)
    return parse


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


_PARSERS = {
    "mode": str.strip, "L": int, "n": float, "Gamma": float, "gamma": float,
    "Gamma_xy": _optional(float), "Gamma_z": _optional(float),
    "xi0": _optional(float), "zeta0": _optional(float), "h_p_list": _optional(_float_list),
    "dipolar_enabled": _parse_bool, "realizations": _optional(int), "master_seed": int,
    "t_max": _optional(float), "dt": float, "sample_stride": float, "output_dir": str.strip,
    "start": _optional(str.strip), "oracle_kind": str.strip, "T1": float, "T2": float,
    "dt_check_tol": float, "dt_halvings": int, "workers": int, "allow_large": _parse_bool,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run.

    ``None`` entries take mode-dependent defaults in :meth:`resolved`:
    ``h_p_list`` (0,) for t2 and (1,) otherwise, ``realizations`` 100 (10
    above 24 spins), ``t_max`` 2 us for t2 and 0.5 us otherwise, ``start`` x+ for t2 and z+ otherwise, cutoffs ten
    widths.  ``Gamma_xy`` / ``Gamma_z`` override ``Gamma`` per component.
    """

    mode: str = "rabi"
    L: int = 12
    n: float = 1e-4
    Gamma: float = 0.0
    gamma: float = 0.0
    Gamma_xy: float | None = None
    Gamma_z: float | None = None
    xi0: float | None = None
    zeta0: float | None = None
    h_p_list: tuple[float, ...] | None = None
    dipolar_enabled: bool = True
    realizations: int | None = None
    master_seed: int = 0
    t_max: float | None = None
    dt: float = 1e-5
    sample_stride: float = 1e-3
    output_dir: str = "out"
    start: str | None = None
    oracle_kind: str = "auto"
    T1: float = math.inf
    T2: float = math.inf
    dt_check_tol: float = 1e-6
    dt_halvings: int = 0
    workers: int = 1
    allow_large: bool = False

    def __post_init__(self):
        if self.h_p_list is not None:
            object.__setattr__(self, "h_p_list", tuple(float(h) for h in self.h_p_list))

    # ------------------------------------------------------------ text form
    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _PARSERS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                values[key] = _PARSERS[key](val)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "h_p_list" and v is not None:
                v = ", ".join(repr(h) for h in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"

    # ---------------------------------------------------------- validation
    def resolved(self) -> "ExperimentConfig":
        """Validated copy with every default filled in."""
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.oracle_kind not in ORACLE_KINDS:
            raise ConfigError(f"oracle_kind must be one of {ORACLE_KINDS}")
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        if not self.n > 0:
            raise ConfigError("n must be > 0")
        widths = [self.Gamma, self.gamma, self.Gamma_xy or 0.0, self.Gamma_z or 0.0]
        if min(widths) < 0:
            raise ConfigError("disorder widths must be >= 0")
        for name in ("xi0", "zeta0"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be > 0")
        if not (self.dt > 0 and self.sample_stride >= self.dt):
            raise ConfigError("need dt > 0 and sample_stride >= dt")
        if abs(self.sample_stride / self.dt - round(self.sample_stride / self.dt)) > 1e-6:
            raise ConfigError("sample_stride must be a multiple of dt")
        hps = self.h_p_list
        if hps is None:
            hps = (0.0,) if self.mode == "t2" else (1.0,)
        if not hps or min(hps) < 0:
            raise ConfigError("h_p_list must hold nonnegative amplitudes")
        if self.workers < 1 or self.dt_halvings < 0:
            raise ConfigError("workers >= 1 and dt_halvings >= 0 required")
        if not (self.T1 > 0 and self.T2 > 0):
            raise ConfigError("T1 and T2 must be > 0")
        R = self.realizations
        if R is None:
            R = 10 if self.L > 24 else 100
        if R < 1:
            raise ConfigError("realizations must be >= 1")
        start = self.start or ("x+" if self.mode == "t2" else "z+")
        if start not in ("z+", "x+"):
            raise ConfigError("start must be z+ or x+")
        if self.mode == "t2":
            if any(h != 0 for h in hps):
                raise ConfigError("t2 mode runs at h_p = 0")
            if start != "x+":
                raise ConfigError("t2 mode starts from x+")
        if self.mode == "rabi":
            if min(hps) <= 0:
                raise ConfigError("rabi mode needs h_p > 0")
            if start != "z+":
                raise ConfigError("rabi mode starts from z+")
        if self.mode == "oracle" and self.dipolar_enabled:
            raise OracleInapplicableError("oracle comparisons need dipolar_enabled = false")
        t_max = self.t_max if self.t_max is not None else (2.0 if self.mode == "t2" else 0.5)
        if not t_max > 0:
            raise ConfigError("t_max must be > 0")
        if self.mode != "bloch":
            check_size(self.L if self.dipolar_enabled else 1, self.allow_large)
        return replace(self, realizations=R, t_max=t_max, start=start, h_p_list=hps)

    # ----------------------------------------------------- derived objects
    def width_xy(self) -> float:
        return self.Gamma if self.Gamma_xy is None else self.Gamma_xy

    def width_z(self) -> float:
        return self.Gamma if self.Gamma_z is None else self.Gamma_z

    def g_specs(self) -> tuple[LorentzianSpec, LorentzianSpec, LorentzianSpec]:
        xy = LorentzianSpec(self.width_xy(), self.xi0)
        return (xy, xy, LorentzianSpec(self.width_z(), self.xi0))

    def mw_spec(self) -> LorentzianSpec:
        return LorentzianSpec(self.gamma, self.zeta0)

    def plan(self, dt: float | None = None) -> EvolutionPlan:
        return EvolutionPlan.from_times(self.t_max, self.dt if dt is None else dt, self.sample_stride)


@dataclass
class RunMetadata:
    config: ExperimentConfig
    h_p: float
    subseeds: list[int]
    path: str
    dt_report: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    version: str = __version__

    def to_text(self) -> str:
        lines = ["[config]", self.config.to_text().rstrip(), "[run]",
                 f"h_p = {self.h_p!r}", f"path = {self.path}",
                 f"version = {self.version}", f"python = {platform.python_version()}",
                 f"numpy = {np.__version__}", f"wall_time_s = {self.wall_time_s:.3f}"]
        for k, v in self.dt_report.items():
            lines.append(f"dt_check.{k} = {v!r}" if not isinstance(v, str) else f"dt_check.{k} = {v}")
        lines.append("[subseeds]")
        lines += [f"{i} {s}" for i, s in enumerate(self.subseeds)]
        return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    """Averaged trace (total magnetization), its fit and the run record.

    ``sem`` holds the standard error of the per-spin realization mean at each
    sample.  Unpacks as ``trace, fit, meta``.
    """

    trace: Trace
    fit: FitResult | None
    meta: RunMetadata
    sem: Trace | None = None

    def __iter__(self):
        return iter((self.trace, self.fit, self.meta))


# ---------------------------------------------------------------- workers

def _uses_product_formula(cfg: ExperimentConfig) -> bool:
    return cfg.dipolar_enabled and cfg.L > 1


def _realization(cfg: ExperimentConfig, h_p: float, index: int, dt: float) -> np.ndarray:
    """Total (mx, my, mz, energy) samples of one realization, shape (n_rec+1, 4)."""
    real = draw_realization(cfg.L, cfg.n, cfg.g_specs(), cfg.mw_spec(),
                            subseed(cfg.master_seed, index))
    table = build_couplings(real, ModelParams(h_p=h_p, dipolar_enabled=cfg.dipolar_enabled))
    plan = cfg.plan(dt)
    if len(table.pairs) == 0:
        n_rec = plan.n_steps // plan.record_every
        # exact rotations: one step per sample
        fast = EvolutionPlan(plan.dt * plan.record_every, n_rec, 1)
        tr = evolve_independent_spins(table.local_z, table.drive_x, fast, cfg.start)
    else:
        tr = evolve_and_record(init_product_state(cfg.L, cfg.start), table, plan)
    return np.stack([tr.mx, tr.my, tr.mz, tr.energy], axis=1)


def _realization_job(args):
    return _realization(*args)


def _dt_check(cfg: ExperimentConfig, h_p: float) -> tuple[float, dict, np.ndarray | None]:
    """Halving check on realization 0; returns the accepted dt, a report and
    the realization-0 samples at that dt."""
    if not _uses_product_formula(cfg):
        return cfg.dt, {"status": "exact"}, None
    dt = cfg.dt
    coarse = _realization(cfg, h_p, 0, dt)
    checks = []
    for attempt in range(cfg.dt_halvings + 1):
        fine = _realization(cfg, h_p, 0, dt / 2)
        change = float(np.max(np.abs(fine[:, :3] - coarse[:, :3]))) / cfg.L
        checks.append((dt, change))
        if change < cfg.dt_check_tol:
            break
        if attempt < cfg.dt_halvings:
            dt, coarse = dt / 2, fine
    ok = checks[-1][1] < cfg.dt_check_tol
    report = {"status": "converged" if ok else "not-converged", "tolerance": cfg.dt_check_tol,
              "dt_used": dt, "checks": checks}
    return dt, report, coarse


def _reduce(cfg, h_p, dt, first):
    """Sum realizations in index order; returns mean totals and per-spin SEM."""
    R, L = cfg.realizations, cfg.L
    jobs = [(cfg, h_p, i, dt) for i in range(1 if first is not None else 0, R)]
    total = None
    sq = None

    def add(x):
        nonlocal total, sq
        per_spin = x[:, :3] / L
        if total is None:
            total = x.copy()
            sq = per_spin**2
        else:
            total += x
            sq += per_spin**2

    if first is not None:
        add(first)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            for x in pool.map(_realization_job, jobs):
                add(x)
    else:
        for job in jobs:
            add(_realization_job(job))
    mean = total / R
    if R > 1:
        var = np.clip(sq / R - (mean[:, :3] / L) ** 2, 0.0, None) * R / (R - 1)
        sem = np.sqrt(var / R)
    else:
        sem = np.full_like(sq, np.nan)
    return mean, sem


def _fit_for(cfg: ExperimentConfig, trace: Trace, h_p: float, n_spins: int) -> FitResult | None:
    if cfg.start == "x+":
        return fit(trace.times, trace.mx / n_spins, "exponential")
    if h_p == 0:
        return None
    return fit(trace.times, trace.mz / n_spins, "damped-cosine", f_hint=h_p * FR_MHZ)


# ---------------------------------------------------------------- public

def run(config: ExperimentConfig, h_p: float | None = None, out_dir=None,
        write: bool = True) -> RunResult:
    """One ensemble at a single drive amplitude (the first of ``h_p_list`` by default)."""
    cfg = config.resolved()
    h_p = cfg.h_p_list[0] if h_p is None else float(h_p)
    t0 = time.perf_counter()
    seeds = [subseed(cfg.master_seed, i) for i in range(cfg.realizations)]
    if cfg.mode == "bloch":
        dist = BlochDisorder(cfg.g_specs(), cfg.mw_spec(), cfg.T1, cfg.T2, h_p)
        plan = cfg.plan()
        trace = bloch_ensemble(dist, cfg.realizations, plan.times, cfg.master_seed,
                               cfg.start, cfg.dt)
        trace.times = plan.times
        meta = RunMetadata(cfg, h_p, [cfg.master_seed], "bloch")
        result = RunResult(trace, _fit_for(cfg, trace, h_p, 1), meta)
    else:
        dt, report, first = _dt_check(cfg, h_p)
        mean, sem = _reduce(cfg, h_p, dt, first)
        times = cfg.plan(dt).times
        trace = Trace(times, mean[:, 0], mean[:, 1], mean[:, 2], mean[:, 3])
        sem_tr = Trace(times, sem[:, 0], sem[:, 1], sem[:, 2], np.zeros(len(times)))
        path = "product-formula" if _uses_product_formula(cfg) else "independent-spins"
        meta = RunMetadata(cfg, h_p, seeds, path, report)
        result = RunResult(trace, _fit_for(cfg, trace, h_p, cfg.L), meta, sem_tr)
    meta.wall_time_s = time.perf_counter() - t0
    if write:
        write_run(result, Path(out_dir if out_dir is not None else cfg.output_dir))
    return result


_PLOT_TRACE = '''"""Plot trace.csv next to this file (needs matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
rows = list(csv.DictReader(open(here / "trace.csv")))
t = [float(r["t_us"]) for r in rows]
for key in ("mx", "my", "mz"):
    plt.plot(t, [float(r[key]) for r in rows], label=key)
plt.xlabel("t (us)")
plt.legend()
plt.savefig(here / "trace.png", dpi=150)
'''

_PLOT_RATES = '''"""Plot rates.csv next to this file (needs matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
rows = list(csv.DictReader(open(here / "rates.csv")))
hp = [float(r["hp"]) for r in rows]
plt.errorbar(hp, [float(r["c_R"]) for r in rows], yerr=[float(r["stderr"]) for r in rows], fmt="o")
plt.xlabel("h_p")
plt.ylabel("c_R (1/us)")
plt.savefig(here / "rates.png", dpi=150)
'''


def write_run(result: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    result.trace.to_csv(out / "trace.csv")
    if result.fit is not None:
        (out / "fit.txt").write_text(result.fit.to_record())
    (out / "meta.txt").write_text(result.meta.to_text())
    (out / "plot_trace.py").write_text(_PLOT_TRACE)


@dataclass
class SweepResult:
    runs: dict[float, RunResult]
    rates: RateSweep


def sweep(config: ExperimentConfig, out_dir=None, write: bool = True) -> SweepResult:
    """One run per amplitude in ``h_p_list`` with shared realizations, then a
    weighted straight-line fit of the damped-cosine rates."""
    cfg = config.resolved()
    if len(cfg.h_p_list) < 2:
        raise ConfigError("a sweep needs at least two h_p values")
    if cfg.start != "z+":
        raise ConfigError("rate sweeps fit the z+ Rabi signal")
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    runs = {}
    for h in sorted(cfg.h_p_list):
        runs[h] = run(cfg, h, out / f"hp_{h:g}", write=write)
    hps = np.array(sorted(runs))
    fits = [runs[h].fit for h in hps]
    rates = np.array([f.rate for f in fits])
    errs = np.array([f.rate_stderr for f in fits])
    slope, icpt, s_se, i_se, r2 = linear_rate_fit(hps, rates, errs)
    rs = RateSweep(hps, rates, errs, fits, slope, icpt, s_se, i_se, r2)
    if write:
        write_rates(rs, out)
    return SweepResult(runs, rs)


def write_rates(rs: RateSweep, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = ["hp,c_R,stderr,f,a,b"]
    for h, f in zip(rs.h_p, rs.fits):
        p = f.params
        lines.append(",".join(f"{float(v):.17g}" for v in (h, p["c"], f.stderr["c"], p["f"], p["a"], p["b"])))
    (out / "rates.csv").write_text("\n".join(lines) + "\n")
    (out / "sweep.txt").write_text(
        f"slope {rs.slope!r} {rs.slope_stderr!r}\nintercept {rs.intercept!r} {rs.intercept_stderr!r}\n"
        f"r_squared {rs.r_squared!r}\n")
    (out / "plot_rates.py").write_text(_PLOT_RATES)


# ---------------------------------------------------------------- oracles

@dataclass
class OracleComparison:
    kind: str
    component: str
    times: np.ndarray
    engine: np.ndarray
    oracle: np.ndarray
    sem: np.ndarray
    run: RunResult = field(repr=False)

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.engine - self.oracle)))

    @property
    def frac_outside_3sigma(self) -> float:
        return float(np.mean(np.abs(self.engine - self.oracle) > 3.0 * self.sem))

    def to_text(self) -> str:
        return (f"kind {self.kind}\ncomponent {self.component}\nlinf {self.linf!r}\n"
                f"max_3sigma {float(np.max(3.0 * self.sem))!r}\n"
                f"frac_outside_3sigma {self.frac_outside_3sigma!r}\n")


def _oracle_kind(cfg: ExperimentConfig) -> str:
    active = {k for k, w in (("mw", cfg.gamma), ("gxy", cfg.width_xy()), ("gz", cfg.width_z())) if w > 0}
    if cfg.oracle_kind != "auto":
        if active - {cfg.oracle_kind} or (cfg.oracle_kind == "ideal" and active):
            raise OracleInapplicableError(f"{cfg.oracle_kind} oracle cannot describe disorder {sorted(active)}")
        return cfg.oracle_kind
    if not active:
        return "ideal"
    if len(active) > 1:
        raise OracleInapplicableError(f"no closed form for combined disorder {sorted(active)}")
    return active.pop()


def oracle_curve(kind: str, cfg: ExperimentConfig, t, h_p: float) -> np.ndarray:
    """Per-spin oracle for the component measured from ``cfg.start``."""
    t = np.asarray(t, float)
    if cfg.start == "x+":
        if kind != "gz":
            raise OracleInapplicableError("the x+ start is covered only by the g_z oracle")
        return oracles.sx_gz_disorder(t, cfg.width_z(), h_p, cfg.g_specs()[2].cutoff)
    if kind == "ideal":
        return oracles.rabi_ideal(t, h_p)
    if kind == "mw":
        return oracles.rabi_mw_disorder(t, cfg.gamma, h_p, cfg.mw_spec().cutoff)
    if kind == "gxy":
        return oracles.rabi_gxy_disorder(t, cfg.width_xy(), h_p, cfg.g_specs()[0].cutoff)
    return oracles.sz_gz_disorder(t, cfg.width_z(), h_p, cfg.g_specs()[2].cutoff)


def compare_oracle(config: ExperimentConfig, h_p: float | None = None, out_dir=None,
                   write: bool = True) -> OracleComparison:
    """Ensemble average of uncoupled spins against the matching closed form."""
    if config.dipolar_enabled:
        raise OracleInapplicableError("oracle comparisons need dipolar_enabled = false")
    cfg = replace(config, mode="oracle").resolved()
    h_p = cfg.h_p_list[0] if h_p is None else float(h_p)
    kind = _oracle_kind(cfg)
    res = run(cfg, h_p, write=False)
    comp = "mx" if cfg.start == "x+" else "mz"
    t = res.trace.times
    eng = res.trace.component(comp) / cfg.L
    orc = oracle_curve(kind, cfg, t, h_p)
    cmp_ = OracleComparison(kind, comp, t, eng, orc, res.sem.component(comp), res)
    if write:
        out = Path(out_dir if out_dir is not None else cfg.output_dir)
        write_run(res, out)
        lines = ["t_us,engine,oracle,sem,lower_3sigma,upper_3sigma"]
        for row in zip(t, eng, orc, cmp_.sem, orc - 3 * cmp_.sem, orc + 3 * cmp_.sem):
            lines.append(",".join(f"{float(v):.17g}" for v in row))
        (out / "overlay.csv").write_text("\n".join(lines) + "\n")
        (out / "oracle.txt").write_text(cmp_.to_text())
    return cmp_
