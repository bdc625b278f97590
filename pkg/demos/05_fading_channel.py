"""Fading channels: per-slot capacity redraws (demonstration mode).

Every slot resamples the link capacities and the routing step optimizes
over the instantaneous region.  There is no fixed optimum to converge to;
the point of the demo is that rates track the moving region while the
physical backlog stays bounded.
"""

import tempfile
from pathlib import Path

from netnum.harness import read_metrics_csv, run_experiment

workdir = Path(tempfile.mkdtemp(prefix="netnum_fading_"))
config = {
    "instance": {"generator": {"nodes": 10, "p": 0.33, "flows": 3, "seed": 1}},
    "algorithm": "admm",
    "params": {"rho": 0.7, "max_slots": 800},
    "reference": "none",
    "channel": {"mode": "fading", "seed": 7},
    "outputs": {"metrics": str(workdir / "fading.csv")},
}
outcome = run_experiment(config)
assert outcome.exit_code == 0

cols = read_metrics_csv(workdir / "fading.csv")
totals = cols["phys_queue"]
resid = cols["residual"]
print("slot window   | mean residual | mean backlog | peak backlog")
print("-" * 60)
for lo in range(0, 800, 200):
    window = slice(lo, lo + 200)
    print(
        f"{lo:>4} - {lo + 199:<5} | {resid[window].mean():>13.3f} "
        f"| {totals[window].mean():>12.2f} | {totals[window].max():>12.2f}"
    )
print(f"\nbacklog stays bounded under per-slot capacity redraws "
      f"(peak {totals.max():.2f}); metrics in {workdir}")
