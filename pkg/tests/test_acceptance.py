"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criterion 8 reuses results/headline/ written by scripts/headline_sweep.py when
its recorded configuration matches; otherwise it runs the sweep (hours).
"""
import importlib.util
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import ACCEPTANCE_LINES
from rabisim import oracles
from rabisim.bloch import BlochParams, bloch_solve, free_solution
from rabisim.engine import (EvolutionPlan, Propagator, evolve_and_record, evolve_independent_spins,
                            init_product_state)
from rabisim.ensemble import ExperimentConfig, run, sweep
from rabisim.fitting import FitResult, fit, linear_rate_fit, model
from rabisim.geometry import LorentzianSpec, draw_realization, make_rng, sample_lorentzian
from rabisim.hamiltonian import ModelParams, build_couplings, dense_hamiltonian

FR, F0 = 55.96, 9700.0
ROOT = Path(__file__).resolve().parents[1]

pytestmark = pytest.mark.slow


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


def _table(L, n, seed, h_p, Gamma=0.001, gamma=0.01):
    r = draw_realization(L, n, LorentzianSpec(Gamma), LorentzianSpec(gamma), seed)
    return build_couplings(r, ModelParams(h_p=h_p))


def test_c01_unitarity_and_energy():
    # 1e5 steps at dt = 1e-7 us; the splitting's energy error is O(dt^2)
    worst_e = worst_n = 0.0
    for axis in ("z+", "x+"):
        tab = _table(12, 1e-4, 7, 1.0)
        prop = Propagator(tab, 1e-7)
        psi = init_product_state(12, axis)
        e0 = prop.observables(psi)[3]
        for _ in range(100):
            prop.advance(psi, 1000)
            worst_e = max(worst_e, abs(prop.observables(psi)[3] - e0) / abs(e0))
            worst_n = max(worst_n, abs(np.vdot(psi, psi).real - 1.0))
    verdict(1, worst_n <= 1e-10 and worst_e <= 1e-8,
            f"L=12, 1e5 steps, dt=1e-7: norm drift {worst_n:.1e} (<=1e-10), relative energy drift "
            f"{worst_e:.1e} (<=1e-8)")


def test_c02_ideal_rabi():
    tab = build_couplings(draw_realization(1, 1e-4, LorentzianSpec(0.0), LorentzianSpec(0.0), 0),
                          ModelParams(h_p=1.0))
    tr = evolve_and_record(init_product_state(1), tab, EvolutionPlan.from_times(0.5, 1e-5, 1e-3))
    err = float(np.max(np.abs(tr.mz - np.cos(2 * math.pi * FR * tr.times) / 2)))
    verdict(2, err <= 1e-6, f"max |Sz - cos(2 pi 55.96 t)/2| over 0.5 us = {err:.1e} (<=1e-6)")


def test_c03_mz_conserved():
    worst = 0.0
    for seed in (1, 2):
        tab = _table(12, 1e-4, seed, 0.0)
        tr = evolve_and_record(init_product_state(12), tab, EvolutionPlan.from_times(0.5, 1e-5, 1e-3))
        worst = max(worst, float(np.max(np.abs(tr.mz - 6.0))))
    verdict(3, worst <= 1e-10, f"L=12 dipolar, h_p=0: max |Mz - 6| over 0.5 us = {worst:.1e} (<=1e-10)")


def test_c04_microwave_disorder_law():
    gamma, n_mc, n_batch = 0.01, 10_000, 20
    t = np.arange(501) * 1e-3
    zeta = sample_lorentzian(make_rng(4).random(n_mc), LorentzianSpec(gamma, math.inf))
    rows, ok = [], True
    for h in (0.5, 1.0, 2.0):
        target = gamma * 2 * math.pi * h * FR
        # route A: closed-form average
        c_cf = fit(t, oracles.rabi_mw_disorder(t, gamma, h), f_hint=h * FR).rate
        # route B: Monte-Carlo spins, sigma from batch means
        plan = EvolutionPlan(1e-3, 500, 1)

        def mc_rate(z):
            tr = evolve_independent_spins(np.zeros(len(z)), -h * FR * (1 + z), plan)
            return fit(t, tr.mz / len(z), f_hint=h * FR).rate

        c_mc = mc_rate(zeta)
        batch = [mc_rate(b) for b in np.split(zeta, n_batch)]
        sigma = float(np.std(batch, ddof=1) / math.sqrt(n_batch))
        ok_a = abs(c_cf / target - 1) <= 0.02
        ok_b = abs(c_mc - target) <= 3 * sigma
        ok = ok and ok_a and ok_b
        rows.append(f"h_p={h:g}: target {target:.4f}, closed form {c_cf:.4f}, MC {c_mc:.4f} "
                    f"({(c_mc - target) / sigma:+.1f} sigma)")
    verdict(4, ok, "; ".join(rows))


def test_c05_t2_from_gz():
    cfg = ExperimentConfig(mode="t2", L=100, dipolar_enabled=False, Gamma=0.001, realizations=200,
                           t_max=0.2, master_seed=5)
    c2 = run(cfg, write=False).fit.rate
    target = 2 * math.pi * 0.001 * F0
    verdict(5, abs(c2 / target - 1) <= 0.02, f"c2 = {c2:.3f}, expected {target:.3f} (60.95) within 2%")


def test_c06_longtime_offset():
    base = ExperimentConfig(mode="rabi", L=100, dipolar_enabled=False, h_p_list=(0.5,), realizations=100,
                            t_max=5.0, master_seed=6)
    # cutoff at 1000 widths so the ensemble samples the untruncated law the offset derives from
    tr = run(replace(base, Gamma=0.001, xi0=1.0), write=False).trace
    tail = tr.times >= 2.5
    off = float(np.mean(tr.mz[tail] / base.L))
    tr0 = run(replace(base, L=1, realizations=1), write=False).trace
    off0 = float(np.mean(tr0.mz[tail]))
    ref = oracles.longtime_averages(0.001, 0.5)[2]
    verdict(6, abs(off - 0.1287) <= 0.01 and abs(off0) <= 0.01,
            f"offset {off:.4f} (0.1287 +- 0.01, closed form {ref:.5f}); Gamma=0 offset {off0:.1e}")


def test_c07_monotonicity():
    base = ExperimentConfig(mode="rabi", L=100, dipolar_enabled=False, realizations=100, t_max=0.5,
                            h_p_list=(0.5, 1.0, 2.0, 5.0, 10.0), master_seed=7)
    gz = sweep(replace(base, Gamma_z=0.001), write=False).rates
    mw = sweep(replace(base, gamma=0.01), write=False).rates
    gxy = sweep(replace(base, Gamma_xy=0.01), write=False).rates
    dec = bool(np.all(np.diff(gz.rates) < 0))
    inc = [bool(np.all(np.diff(s.rates) > 0)) and s.r_squared >= 0.99 for s in (mw, gxy)]
    verdict(7, dec and all(inc),
            f"g_z rates {np.round(gz.rates, 3).tolist()} decreasing={dec}; mw R^2 {mw.r_squared:.4f}, "
            f"g_xy R^2 {gxy.r_squared:.4f}, increasing={inc}")


def _headline_config():
    path = ROOT / "scripts" / "headline_sweep.py"
    spec = importlib.util.spec_from_file_location("headline_sweep", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod.HEADLINE


def _cached_rates(cfg, out):
    """Rates from a finished headline run whose recorded configuration equals ``cfg``."""
    want = replace(cfg.resolved(), output_dir="", workers=1)
    rates = []
    for h in cfg.h_p_list:
        meta = out / f"hp_{h:g}" / "meta.txt"
        fitf = out / f"hp_{h:g}" / "fit.txt"
        if not (meta.exists() and fitf.exists()):
            return None
        text = meta.read_text()
        saved = ExperimentConfig.from_text(text.split("[config]\n", 1)[1].split("[run]", 1)[0])
        if replace(saved, output_dir="", workers=1) != want:
            return None
        rec = FitResult.from_record(fitf.read_text())
        rates.append((rec.rate, rec.rate_stderr))
    return rates


@pytest.mark.headline
def test_c08_dipolar_headline():
    cfg = _headline_config()
    out = ROOT / "results" / "headline"
    rates = _cached_rates(cfg, out)
    source = "cached results/headline"
    if rates is None:
        res = sweep(replace(cfg, output_dir=str(out)))
        rates = list(zip(res.rates.rates, res.rates.stderr))
        source = "fresh run"
    c, e = np.array(rates).T
    slope, icpt, _, _, r2 = linear_rate_fit(cfg.h_p_list, c, e)
    ok = abs(slope / 3.69 - 1) <= 0.25 and abs(icpt / 1.82 - 1) <= 0.25 and r2 >= 0.98
    verdict(8, ok, f"{source}: c_R = {np.round(c, 3).tolist()}, slope {slope:.3f} (3.69 +- 25%), "
                   f"intercept {icpt:.3f} (1.82 +- 25%), R^2 {r2:.4f} (>=0.98)")


def test_c09_rate_additivity():
    dip = ExperimentConfig(mode="t2", L=12, n=1e-4, realizations=20, t_max=1.0, dt=2e-5, master_seed=9)
    c_dip = run(dip, write=False).fit.rate
    tot = replace(dip, Gamma=0.001, t_max=0.2, dt=1e-5)
    c_tot = run(tot, write=False).fit.rate
    pred = c_dip + 2 * math.pi * 0.001 * F0
    verdict(9, abs(c_tot / pred - 1) <= 0.10,
            f"c2 dipolar {c_dip:.3f}, total {c_tot:.3f}, sum rule {pred:.3f}, deviation "
            f"{c_tot / pred - 1:+.2%} (<=10%)")


def test_c10_bloch_closed_form():
    t = np.arange(2001) * 1e-3
    T2 = 3.0
    p = BlochParams(T2=T2, h_p=1.0)
    dev = 0.0
    for init in ("z+", "x+"):
        tr = bloch_solve(p, t, init, tau=1e-5)
        ref = free_solution(t, T2, 1.0, init=init)
        dev = max(dev, *(float(np.max(np.abs(g - r))) for g, r in zip((tr.mx, tr.my, tr.mz), ref)))
    # relaxation rates: Sz envelope from the z+ start, Sx from the x+ start
    sz = bloch_solve(p, t, "z+", tau=1e-5).mz
    sx = bloch_solve(p, t, "x+", tau=1e-5).mx
    c_r = fit(t, sz, "sine-offset", f_hint=FR).rate
    c_2 = fit(t, sx, "exponential").rate
    ratio = c_2 / c_r
    verdict(10, dev <= 1e-8 and abs(ratio - 2) <= 1e-6,
            f"max deviation from closed form {dev:.1e} (<=1e-8); T_R/T2 = {ratio:.10f} (2 +- 1e-6)")


def test_c11_small_system_oracle():
    horizon = 0.01  # us
    worst, ratios = 0.0, []
    for L in (2, 3):
        for seed in (0, 1, 2):
            tab = _table(L, 1e-4, seed, 1.0)
            H = 2 * math.pi * dense_hamiltonian(tab)
            psi0 = init_product_state(L, "z+")
            exact = expm(-1j * horizon * H) @ psi0
            errs = []
            for dt in (1e-5, 5e-6):
                psi = psi0.copy()
                Propagator(tab, dt).advance(psi, int(round(horizon / dt)))
                errs.append(float(np.linalg.norm(psi - exact)))
            worst = max(worst, errs[0])
            ratios.append(errs[0] / errs[1])
    ok_ratio = all(abs(r / 4 - 1) <= 0.10 for r in ratios)
    verdict(11, worst <= 1e-8 and ok_ratio,
            f"L in (2,3), 3 realizations each, endpoint {horizon} us: max state error at dt=1e-5 "
            f"{worst:.1e} (<=1e-8); halving ratios {min(ratios):.4f}..{max(ratios):.4f} (4 +- 10%)")


def test_c12_fit_recovery():
    t = np.arange(201) * 1e-3
    clean = model("damped-cosine", t, np.array([0.2, 0.8, 2.0, FR]))
    rates = np.array([fit(t, clean + np.random.default_rng(s).normal(0, 0.005, len(t))).rate
                      for s in range(100)])
    worst = float(np.max(np.abs(rates / 2.0 - 1)))
    verdict(12, worst <= 0.05, f"c = 2.0 recovered on all 100 noise seeds, worst error {worst:.2%} (<=5%)")
