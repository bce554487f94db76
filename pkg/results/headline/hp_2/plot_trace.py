"""Plot trace.csv next to this file (needs matplotlib)."""
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
