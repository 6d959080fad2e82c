"""Spectral laboratory for the three-body p-wave resonance problem in two dimensions:
pair tuning, the infrared weight, reduced three-body operators and
double-logarithmic eigenvalue counting."""
from .numerics import (InvalidArgument, LogScalar, RadialGrid, gauss_legendre, log_grid,
                       loglog_grid, symmetric_eigen, uniform_grid)
from .potential import PotentialModel, omega, psi0
from .two_body import (TwoBodySolution, WeightSpec, load_solution, make_weight_spec, mu_of_z,
                       save_solution, tune_resonance, two_body_grid, weight_g, xi)
from .three_body import (BlockOperator, SpectrumReport, assemble_comparison, d_norm_check,
                         operator_grid, remainder_ops, script_t_matrix, t_pm_matrix)
from .counting import (CountingScan, InsufficientData, count_above, double_log_fit,
                       singular_count, weyl_property_suite)

__version__ = "0.1.0"
