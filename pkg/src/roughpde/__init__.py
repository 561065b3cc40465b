"""Mild solutions of semilinear parabolic rough PDEs on the torus."""
from .calculus import Coefficients, linear_coefficients, rough_convolution, sewing_error_probe
from .controlled import ControlledPath, gubinelli_norm
from .rough_path import RoughPath, TimeGrid, fbm_lift, refine, shift
from .solver import SolverConfig, apriori_monitor, cocycle_check, global_solve, mild_residual
from .spectral import SpaceScale, SpectralField

__version__ = "0.1.0"
