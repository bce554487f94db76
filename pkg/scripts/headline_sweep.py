"""Dipolar ensemble with microwave disorder: c_R against h_p.

Twelve spins at n = 1e-4 per cubic Angstrom, gamma = 0.01, 100 shared
realizations, h_p in {0.5, 1, 2, 3}.  Takes one to three hours on one core.
Results land in results/headline/ and are reused by the acceptance suite.

    python scripts/headline_sweep.py [--out DIR] [--workers N]
"""
import argparse
import time
from pathlib import Path

from rabisim.ensemble import ExperimentConfig, sweep

HEADLINE = ExperimentConfig(mode="rabi", L=12, n=1e-4, gamma=0.01, h_p_list=(0.5, 1.0, 2.0, 3.0),
                            realizations=100, master_seed=2024, t_max=0.5)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "results" / "headline"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = ExperimentConfig(**{**HEADLINE.__dict__, "workers": args.workers, "output_dir": args.out})
    t0 = time.time()
    res = sweep(cfg)
    rs = res.rates
    for h, c, e in zip(rs.h_p, rs.rates, rs.stderr):
        print(f"h_p={h:g}  c_R={c:.4f} +- {e:.4f}")
    print(f"slope {rs.slope:.4f} +- {rs.slope_stderr:.4f}, intercept {rs.intercept:.4f} "
          f"+- {rs.intercept_stderr:.4f}, R^2 {rs.r_squared:.4f}  ({time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()
