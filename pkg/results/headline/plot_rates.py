"""Plot rates.csv next to this file (needs matplotlib)."""
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
