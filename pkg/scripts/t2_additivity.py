"""Free-induction decay of twelve dipolar spins with and without g_z disorder.

Compares the total decay rate with the dipolar-only rate plus 2 pi Gamma F0.
Tens of minutes on one core.

    python scripts/t2_additivity.py [--realizations R] [--out DIR]
"""
import argparse
import math
from dataclasses import replace
from pathlib import Path

from rabisim.ensemble import ExperimentConfig, run
from rabisim.hamiltonian import F0_MHZ

DIPOLAR = ExperimentConfig(mode="t2", L=12, n=1e-4, realizations=20, t_max=1.0, dt=2e-5, master_seed=9)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--realizations", type=int, default=DIPOLAR.realizations)
    ap.add_argument("--Gamma", type=float, default=0.001)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "results" / "t2_additivity"))
    args = ap.parse_args()
    dip = replace(DIPOLAR, realizations=args.realizations, output_dir=str(Path(args.out) / "dipolar"))
    tot = replace(dip, Gamma=args.Gamma, t_max=0.2, dt=1e-5, output_dir=str(Path(args.out) / "total"))
    c_dip = run(dip).fit.rate
    c_tot = run(tot).fit.rate
    pred = c_dip + 2 * math.pi * args.Gamma * F0_MHZ
    print(f"c2 dipolar {c_dip:.3f}  total {c_tot:.3f}  dipolar + 2 pi Gamma F0 = {pred:.3f}")


if __name__ == "__main__":
    main()
