"""Dual step extrapolation: backlog shrinks roughly like 1/tau.

Sweeps the dual step parameter tau over {1.0, 1.2, 1.6} on a 20-node
instance via the experiment harness and reads the steady-state backlog
out of the metrics CSVs.  Values of tau at or above the golden ratio
(~1.618) void the convergence guarantee; 1.618 is the recommended
setting.
"""

import tempfile
from pathlib import Path

from netnum.harness import read_metrics_csv, run_sweep

workdir = Path(tempfile.mkdtemp(prefix="netnum_sweep_"))
config = {
    "instance": {"generator": {"nodes": 20, "p": 0.158, "flows": 8, "seed": 5}},
    "algorithm": "admm",
    "params": {"rho": 0.7, "max_slots": 8000, "tol_residual": 1e-6, "tol_step": 1e-6},
    "reference": "none",
    "outputs": {"metrics": str(workdir / "metrics.csv")},
}

print("tau   | converged slots | steady backlog | backlog * tau")
print("-" * 56)
for value, outcome in run_sweep(config, "tau", [1.0, 1.2, 1.6]):
    cols = read_metrics_csv(workdir / f"metrics_tau{value:g}.csv")
    totals = cols["phys_queue"]
    steady = totals[int(0.75 * len(totals)):].mean()
    print(
        f"{value:<5} | {len(cols['slot']):>15} | {steady:>14.1f} | {steady * value:>13.1f}"
    )
print(f"\nmetrics files in {workdir}")
