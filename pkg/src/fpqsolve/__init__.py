"""Fokker-Planck master equations and emulated quantum integrators."""

from ._exceptions import (
    AliasingWarning,
    ConfigError,
    InvalidGeneratorError,
    MeshBoundWarning,
    NumericalError,
    PostSelectionError,
    StepSizeError,
    ValidationError,
)
from .classical import Trajectory, euler_propagate, expm_propagate, sde_monte_carlo, sde_trajectory, steady_state_1d
from .generator import (
    BoundaryCondition,
    GeneratorMatrix,
    ProbVector,
    assemble,
    assemble_1d_finite_difference,
    assemble_1d_rates,
    assemble_multidim,
    validate_generator,
)
from .grid import Axis, CoefficientField, DriftDiffusionModel, Grid, build_grid, double_well_1d, eval_coefficients, mesh_bound, spiral_2d
from .observables import MomentRecord, mean, trace_distance, variance

__version__ = "0.1.0"
