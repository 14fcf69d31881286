"""Nonlocal (peridynamic-type) linearized elastoplasticity with kinematic hardening.

Cell-grid discretization, incremental energy minimization by block
coordinate descent, a local reference model and horizon studies.
"""
__version__ = "0.1.0"

from .config import ConfigError, StudyConfig, default_config, load_config, parse_config
from .energy import (LoadProgram, MaterialParams, bilinear_B, dissipation_H, energy_F, energy_terms,
                     lame_convert, local_energy_F0, quadratic_energy)
from .grid import Collar, Grid, apply_constraint, build_grid, is_admissible
from .kernel import FAMILIES, Kernel, NeighborTable, build_neighbor_table, make_kernel
from .local_reference import run_local_quasistatic
from .nonlocal_ops import (State, nonlocal_divergence, nonlocal_divergence_plastic, pair_strain,
                           pair_strain_plastic, plastic_moment, seminorms)
from .quasistatic import Trajectory, energy_ledger, run_quasistatic, stability_spot_check
from .solver import (Certificate, SolverConfig, SolverError, prox_plastic_point, solve_equilibrium_u,
                     solve_increment)
from .studies import (delta_sweep_study, korn_constant_study, pointwise_energy_convergence_study,
                      verify_suite)
