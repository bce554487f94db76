import math
from dataclasses import replace

import numpy as np
import pytest

from rabisim.engine import ResourceExceededError, Trace
from rabisim.ensemble import (ConfigError, ExperimentConfig, OracleInapplicableError, compare_oracle,
                              run, sweep)
from rabisim.fitting import FitResult, fit
from rabisim.geometry import subseed

SMALL = ExperimentConfig(mode="rabi", L=4, n=1e-3, gamma=0.01, realizations=4, master_seed=11,
                         t_max=0.05, dt=1e-4, sample_stride=1e-3)


def test_config_text_round_trip():
    cfg = replace(SMALL, h_p_list=(0.5, 2.0), xi0=math.inf, T2=3.0)
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg


def test_config_parse_comments_and_errors():
    cfg = ExperimentConfig.from_text("# run\nmode = t2\nL = 6\n\ndipolar_enabled = false\n")
    assert (cfg.mode, cfg.L, cfg.dipolar_enabled) == ("t2", 6, False)
    with pytest.raises(ConfigError, match="unknown key"):
        ExperimentConfig.from_text("spins = 4\n")
    with pytest.raises(ConfigError, match="duplicate"):
        ExperimentConfig.from_text("L = 4\nL = 5\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("L = four\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("L 4\n")


def test_resolved_defaults():
    r = ExperimentConfig().resolved()
    assert (r.h_p_list, r.realizations, r.t_max, r.start) == ((1.0,), 100, 0.5, "z+")
    t2 = ExperimentConfig(mode="t2").resolved()
    assert (t2.h_p_list, t2.t_max, t2.start) == ((0.0,), 2.0, "x+")
    big = ExperimentConfig(L=26, allow_large=True).resolved()
    assert big.realizations == 10


@pytest.mark.parametrize("bad", [dict(mode="t2", h_p_list=(1.0,)), dict(h_p_list=(0.0,)),
                                 dict(L=0), dict(n=0.0), dict(Gamma=-1.0), dict(dt=0.0),
                                 dict(sample_stride=1.5e-5), dict(mode="nope"),
                                 dict(realizations=0), dict(start="y+")])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        replace(SMALL, **bad).resolved()


def test_size_cap():
    with pytest.raises(ResourceExceededError):
        replace(SMALL, L=26).resolved()
    replace(SMALL, L=100, dipolar_enabled=False).resolved()


def test_oracle_requires_no_dipolar():
    with pytest.raises(OracleInapplicableError):
        compare_oracle(SMALL, write=False)
    with pytest.raises(OracleInapplicableError):
        replace(SMALL, mode="oracle").resolved()


def test_oracle_rejects_combined_disorder():
    cfg = replace(SMALL, dipolar_enabled=False, Gamma=0.001)
    with pytest.raises(OracleInapplicableError):
        compare_oracle(cfg, write=False)


def test_rerun_byte_identical(tmp_path):
    run(SMALL, out_dir=tmp_path / "a")
    run(SMALL, out_dir=tmp_path / "b")
    for name in ("trace.csv", "fit.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_does_not_change_result():
    a = run(SMALL, write=False)
    b = run(replace(SMALL, workers=2), write=False)
    assert np.array_equal(a.trace.mz, b.trace.mz)
    assert np.array_equal(a.trace.energy, b.trace.energy)


def test_csv_refit_reproduces_stored_fit(tmp_path):
    res = run(SMALL, out_dir=tmp_path)
    tr = Trace.from_csv(tmp_path / "trace.csv")
    refit = fit(tr.times, tr.mz / SMALL.L, "damped-cosine", f_hint=55.96)
    assert refit == res.fit
    assert FitResult.from_record((tmp_path / "fit.txt").read_text()) == res.fit


def test_metadata_records_subseeds(tmp_path):
    res = run(SMALL, out_dir=tmp_path)
    assert res.meta.subseeds == [subseed(11, i) for i in range(4)]
    text = (tmp_path / "meta.txt").read_text()
    assert "[config]" in text and "dt_check.status" in text
    assert f"3 {subseed(11, 3)}" in text
    assert (tmp_path / "plot_trace.py").exists()


def test_single_free_spin_rabi():
    cfg = ExperimentConfig(L=1, realizations=1, t_max=0.5)
    res = run(cfg, write=False)
    assert res.fit.params["f"] == pytest.approx(55.96, abs=1e-4)
    assert abs(res.fit.rate) < 1e-6
    assert res.meta.path == "independent-spins"


def test_sweep_shares_realizations(tmp_path):
    cfg = replace(SMALL, h_p_list=(0.5, 1.0, 2.0))
    res = sweep(cfg, out_dir=tmp_path)
    seeds = {h: r.meta.subseeds for h, r in res.runs.items()}
    assert seeds[0.5] == seeds[1.0] == seeds[2.0]
    assert (tmp_path / "rates.csv").read_text().count("\n") == 4
    assert (tmp_path / "hp_0.5" / "trace.csv").exists()
    assert len(res.rates.rates) == 3


def test_sweep_needs_two_points():
    with pytest.raises(ConfigError):
        sweep(SMALL, write=False)


def test_t2_mode_exponential_fit():
    cfg = ExperimentConfig(mode="t2", L=4, n=1e-3, realizations=2, t_max=0.05, dt=1e-4)
    res = run(cfg, write=False)
    assert res.fit.kind == "exponential"
    assert res.trace.mx[0] == pytest.approx(2.0)


def test_dt_check_reports():
    res = run(replace(SMALL, dt_halvings=1), write=False)
    rep = res.meta.dt_report
    assert rep["status"] in ("converged", "not-converged")
    assert 1 <= len(rep["checks"]) <= 2
    free = run(replace(SMALL, dipolar_enabled=False), write=False)
    assert free.meta.dt_report["status"] == "exact"


def test_ideal_oracle_exact():
    cfg = ExperimentConfig(L=3, dipolar_enabled=False, realizations=2, t_max=0.2)
    assert compare_oracle(cfg, write=False).linf <= 1e-6


def test_mw_oracle_within_band(tmp_path):
    cfg = ExperimentConfig(L=50, dipolar_enabled=False, gamma=0.01, realizations=40, t_max=0.3)
    cmp_ = compare_oracle(cfg, out_dir=tmp_path)
    assert cmp_.kind == "mw"
    assert cmp_.frac_outside_3sigma <= 0.01
    lines = (tmp_path / "overlay.csv").read_text().splitlines()
    assert lines[0].startswith("t_us,engine,oracle")
    assert len(lines) == 302


def test_bloch_mode_run():
    cfg = ExperimentConfig(mode="bloch", gamma=0.01, realizations=200, t_max=0.2, T2=5.0)
    res = run(cfg, write=False)
    assert res.fit.params["f"] == pytest.approx(55.96, rel=1e-3)
    assert res.meta.path == "bloch"
