"""Water flood of a layered medium, with and without capillary pressure.

Desk-scale version of the layered preset (50 x 35 cells, dt = 0.002). Prints
the breakthrough step and the front width for both capillary models.

    python demos/layered_capillarity.py [max_steps]
"""

import sys

from dsflow import Simulation, preset_config
from dsflow.impes import front_width

max_steps = int(sys.argv[1]) if len(sys.argv) > 1 else 450

for model in ("zero", "heterogeneous_reg"):
    cfg = preset_config("layered_capillarity", nx=50, ny=35, dt="0.002", steps=max_steps,
                        capillary_model=model)
    sim = Simulation(cfg)
    bt = None
    while sim.state.step < max_steps:
        d = sim.step()
        if d["step"] % 50 == 0:
            print(f"{model:>18} step {d['step']:4d}  front width {front_width(sim):.3f}  "
                  f"outflow S {d['outflow_S']:.4f}  cell balance {d['cell_balance']:.1e}")
        if bt is None and d["outflow_S"] > 0.01:
            bt = d["step"]
            print(f"{model:>18} breakthrough at step {bt}, front width {front_width(sim):.3f}")
            break
