"""Bound-preserving DG solver for two-component miscible displacement."""

from .field import DGField, cell_averages, concentration_from_r, interpolate_corners
from .limiter import LimiterConfig, LimiterInvariantError, limit_field
from .mesh import Mesh1D, Mesh2D, build_mesh_1d, build_mesh_2d, gauss2
from .physics import Preset, ProblemSpec, Well, example_preset
from .scheme import (
    Derived1D,
    Derived2D,
    FluxVariant,
    Scheme1D,
    Scheme2D,
    SolverBreakdownError,
    make_scheme,
    numerical_flux_uc,
)
from .stepper import (
    BlowUpError,
    State,
    Stepper,
    StepParams,
    compute_dt_bound,
    compute_penalties,
)

__version__ = "0.1.0"

__all__ = [
    "DGField",
    "cell_averages",
    "concentration_from_r",
    "interpolate_corners",
    "LimiterConfig",
    "LimiterInvariantError",
    "limit_field",
    "Mesh1D",
    "Mesh2D",
    "build_mesh_1d",
    "build_mesh_2d",
    "gauss2",
    "Preset",
    "ProblemSpec",
    "Well",
    "example_preset",
    "Derived1D",
    "Derived2D",
    "FluxVariant",
    "Scheme1D",
    "Scheme2D",
    "SolverBreakdownError",
    "make_scheme",
    "numerical_flux_uc",
    "BlowUpError",
    "State",
    "Stepper",
    "StepParams",
    "compute_dt_bound",
    "compute_penalties",
    "__version__",
]
