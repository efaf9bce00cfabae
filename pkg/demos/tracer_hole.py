"""Linear tracer around an impermeable disc, with and without entropy viscosity.

Prints the 0.1-0.9 interface width along y = 0.5 at a few steps and writes
VTK snapshots to ``out/tracer_<lambda_E>/``.

    python demos/tracer_hole.py [level]
"""

import sys

from dsflow import Simulation, preset_config
from dsflow.impes import interface_width

level = int(sys.argv[1]) if len(sys.argv) > 1 else 3
report_at = (100, 200, 300)

for lam in ("0.5", "inf"):
    cfg = preset_config("tracer_hole", refinement=level, dt="0.00105998", steps=max(report_at),
                        lambda_E=lam, cadence=100)
    sim = Simulation(cfg)
    widths = {}

    def watch(s, diag):
        if diag["step"] in report_at:
            widths[diag["step"]] = (interface_width(s), diag["S_min"], diag["S_max"])

    sim.run(out_dir=f"out/tracer_{lam}", callback=watch)
    print(f"lambda_E = {lam}: {sim.mesh.n_cells} cells, dt {sim.dt:.6g}")
    for m, (w, lo, hi) in widths.items():
        print(f"  step {m:4d}  width {w:.4f}  S in [{lo:+.3f}, {hi:.3f}]")
