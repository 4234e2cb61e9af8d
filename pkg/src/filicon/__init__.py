"""Set-valued vector fields, delta-solutions and isolation certificates on grids."""

from .geometry import Box, Interval, ValueEnclosure, contains, distance, hull, inflate
from .field import FilippovFamily, PiecewiseSpec, convexify, eval_box, eval_value, bound, usc_falsify
from .systems import SystemSpec, builtin, load_system
from .solver import Trajectory, integrate, lipschitz_check, convergence_study
from .multiflow import CellSet, CombinatorialMultiflow, Grid, build_outer_approx, image, transpose
from .conley import IsolationReport, check_isolation, invariant_part, omega_limit
from .perturb import RobustnessReport, check_pertappx, isolation_sweep, verify_eps_solution

__version__ = "0.1.0"
