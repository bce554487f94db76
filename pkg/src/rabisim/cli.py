"""Command line entry point: ``rabisim {run,sweep,oracle,bloch,fit}``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .engine import Trace
from .ensemble import (ConfigError, ExperimentConfig, OracleInapplicableError, compare_oracle,
                       run, sweep)
from .fitting import KINDS, fit_trace

# flag -> ExperimentConfig field
_FLAG_FIELDS = {
    "mode": "mode", "spins": "L", "concentration": "n", "gamma_g": "Gamma",
    "gamma_mw": "gamma", "gamma_xy": "Gamma_xy", "gamma_z": "Gamma_z", "xi0": "xi0",
    "zeta0": "zeta0", "hp": "h_p_list", "realizations": "realizations", "seed": "master_seed",
    "tmax": "t_max", "dt": "dt", "stride": "sample_stride", "out": "output_dir",
    "start": "start", "oracle_kind": "oracle_kind", "T1": "T1", "T2": "T2",
    "workers": "workers", "dt_tol": "dt_check_tol", "dt_halvings": "dt_halvings",
}


def _add_config_flags(p: argparse.ArgumentParser, with_mode: bool) -> None:
    p.add_argument("--config", type=Path, help="key = value file; flags override it")
    if with_mode:
        p.add_argument("--mode", choices=("rabi", "t2", "oracle", "bloch"))
    p.add_argument("--spins", type=int, help="number of spins L")
    p.add_argument("--concentration", type=float, help="spins per cubic Angstrom")
    p.add_argument("--gamma-g", type=float, help="g-factor disorder width Gamma")
    p.add_argument("--gamma-mw", type=float, help="microwave amplitude disorder width")
    p.add_argument("--gamma-xy", type=float, help="override Gamma for g_x and g_y")
    p.add_argument("--gamma-z", type=float, help="override Gamma for g_z")
    p.add_argument("--xi0", type=float, help="g-factor cutoff (default 10 widths; inf allowed)")
    p.add_argument("--zeta0", type=float, help="microwave cutoff (default 10 widths)")
    p.add_argument("--hp", type=float, nargs="+", help="microwave amplitude(s) h_p")
    p.add_argument("--realizations", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--tmax", type=float, help="duration in us")
    p.add_argument("--dt", type=float, help="time step in us")
    p.add_argument("--stride", type=float, help="sampling interval in us")
    p.add_argument("--out", help="output directory")
    p.add_argument("--start", choices=("z+", "x+"))
    p.add_argument("--oracle-kind", choices=("auto", "ideal", "mw", "gxy", "gz"))
    p.add_argument("--T1", type=float)
    p.add_argument("--T2", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--dt-tol", type=float, help="tolerance of the dt halving check")
    p.add_argument("--dt-halvings", type=int, help="how often the dt check may halve dt")
    p.add_argument("--no-dipolar", action="store_true", help="drop the dipolar couplings")
    p.add_argument("--allow-large", action="store_true", help="permit more than 24 spins")


def build_config(args: argparse.Namespace, mode: str | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    updates = {}
    for flag, name in _FLAG_FIELDS.items():
        val = getattr(args, flag, None)
        if val is not None:
            updates[name] = tuple(val) if name == "h_p_list" else val
    if args.no_dipolar:
        updates["dipolar_enabled"] = False
    if args.allow_large:
        updates["allow_large"] = True
    if mode is not None:
        updates["mode"] = mode
    return replace(cfg, **updates)


def _print_fit(fit) -> None:
    if fit is None:
        print("no fit (undriven z+ signal)")
        return
    parts = [f"{k}={v:.6g}+-{fit.stderr[k]:.2g}" for k, v in fit.params.items()]
    flag = "" if fit.converged else " (not converged)"
    print(f"{fit.kind}: " + " ".join(parts) + flag)


def cmd_run(args, mode=None) -> int:
    cfg = build_config(args, mode)
    res = run(cfg)
    _print_fit(res.fit)
    if res.meta.dt_report.get("status") == "not-converged":
        print(f"warning: dt check not converged: {res.meta.dt_report['checks']}", file=sys.stderr)
    print(f"wrote {res.meta.config.output_dir}")
    return 0


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    if cfg.mode == "t2":
        raise ConfigError("sweeps need a driven mode")
    res = sweep(cfg)
    rs = res.rates
    for h, c, e in zip(rs.h_p, rs.rates, rs.stderr):
        print(f"h_p={h:g}  c_R={c:.6g} +- {e:.2g}")
    print(f"c_R = ({rs.slope:.4g} +- {rs.slope_stderr:.2g}) h_p + ({rs.intercept:.4g} +- "
          f"{rs.intercept_stderr:.2g}),  R^2 = {rs.r_squared:.4f}")
    return 0


def cmd_oracle(args) -> int:
    cfg = build_config(args, "oracle")
    if args.config is None:
        # closed forms exist only for uncoupled spins
        cfg = replace(cfg, dipolar_enabled=False)
    cmp_ = compare_oracle(cfg)
    print(cmp_.to_text(), end="")
    return 0


def cmd_fit(args) -> int:
    trace = Trace.from_csv(args.trace)
    window = tuple(args.window) if args.window else None
    kw = {"t_window": window}
    if args.f_hint is not None:
        kw["f_hint"] = args.f_hint
    res = fit_trace(trace, args.kind, args.component, args.spins, **kw)
    _print_fit(res)
    if args.out:
        Path(args.out).write_text(res.to_record())
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rabisim", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="single ensemble run")
    _add_config_flags(p, with_mode=True)
    p = sub.add_parser("sweep", help="rate sweep over several --hp values")
    _add_config_flags(p, with_mode=True)
    p = sub.add_parser("oracle", help="uncoupled ensemble against its closed form")
    _add_config_flags(p, with_mode=False)
    p = sub.add_parser("bloch", help="disorder-averaged phenomenological Bloch model")
    _add_config_flags(p, with_mode=False)
    p = sub.add_parser("fit", help="fit a trace.csv")
    p.add_argument("trace", type=Path)
    p.add_argument("--kind", choices=KINDS, default="damped-cosine")
    p.add_argument("--component", choices=("mx", "my", "mz"))
    p.add_argument("--spins", type=int, default=1, help="divide the trace by this many spins")
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--f-hint", type=float, help="expected frequency in MHz")
    p.add_argument("--out", help="write the fit record here")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "oracle":
            return cmd_oracle(args)
        if args.command == "bloch":
            return cmd_run(args, "bloch")
        return cmd_fit(args)
    except (ConfigError, OracleInapplicableError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
