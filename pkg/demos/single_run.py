"""One nonlocal trajectory on a coarse grid and its energy ledger.

The body load ramps up a shear profile; plastic strain appears once the
driving force passes the yield threshold.  The upper gap column must stay
nonnegative: stored energy plus dissipation never exceeds the initial
energy plus the work done by the load.
"""
import numpy as np

from pdplast import tensors
from pdplast.config import from_dict
from pdplast.quasistatic import energy_ledger, run_quasistatic
from pdplast.studies import make_load, make_table

cfg = from_dict({"grid": {"cells": [32, 32], "collar": {"kind": "frame", "width": 5}},
                 "kernel": {"families": ["constant"], "deltas": [0.15]},
                 "steps": 10})
grid = cfg.build_grid()
params = cfg.material_params()
table = make_table(cfg, grid, "constant", 0.15)
load = make_load(cfg, grid)

P0 = np.zeros((grid.n_cells, tensors.dev_dim(grid.n)))
traj = run_quasistatic(P0, load, cfg.steps, table, params, cfg.solver_config())
print("flagged:", traj.flagged)

led = energy_ledger(traj, load, table, params)
print(f"{'step':>4} {'t':>5} {'F':>11} {'Diss':>11} {'work':>11} {'upper_gap':>11}")
for r in led.rows():
    print(f"{r['step']:4d} {r['t']:5.2f} {r['F']:11.3e} {r['Diss']:11.3e} "
          f"{r['work']:11.3e} {r['upper_gap']:11.3e}")

# plastic strain is not constrained in the collar, so count every cell
P_end = traj.states[-1].P
active = np.linalg.norm(P_end, axis=1) > 1e-12
print("plastic cells:", int(active.sum()), "of", grid.n_cells)
print("worst step certificate:",
      max(max(c.eq_residual, c.flow_residual) for c in traj.certificates))
