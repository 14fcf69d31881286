"""Nonlocal trajectories approach the local one as the horizon shrinks.

Small version of ``pdplast sweep-delta``: 48x48 cells, two families.  The
block-averaged plastic error is the robust measure; pointwise plastic
errors carry lattice noise.
"""
from pdplast.config import from_dict
from pdplast.studies import delta_sweep_study

cfg = from_dict({"grid": {"cells": [48, 48], "collar": {"kind": "frame", "width": 10}},
                 "kernel": {"families": ["constant", "quadratic"], "deltas": [0.2, 0.14, 0.1]},
                 "steps": 10})
rep = delta_sweep_study(cfg)
print(f"{'family':>10} {'delta':>6} {'e_u':>10} {'e_P':>10} {'e_P_block':>10}")
for r in rep.rows:
    print(f"{r['family']:>10} {r['delta']:6.2f} {r['e_u']:10.3e} {r['e_P']:10.3e} {r['e_P_block']:10.3e}")
print("monotone:", rep.monotone)
