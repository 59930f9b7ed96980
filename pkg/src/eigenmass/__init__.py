"""Small-scale mass of Laplace eigenfunctions: grids, modes, solvers, mass analysis and identity checks."""

from .geometry import (
    SPHERE_S2, UNIT_BALL3, UNIT_DISK, UNIT_SQUARE, Domain, DomainKind, Grid, ball_region, build_grid,
    get_domain,
)
from .closed_form import (
    BoundaryCondition, EigenMode, ball3_mode, disk_mode, rectangle_mode, sphere_highest_weight,
)
from .discrete_solver import EigenpairBatch, assemble, solve_near, weyl_check
from .mass_analysis import ball_mass, mass_profile, nonconcentration_sweep, sup_norm, thm2_ratio
from .identity_checks import (
    build_cutoffs, green_identity_residual, mean_value_reconstruction, rellich_commutator_report,
)

__version__ = "0.1.0"
