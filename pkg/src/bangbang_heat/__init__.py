"""Time-optimal and null control of the 1D semilinear heat equation.

Modules
-------
mesh           grids, Dirichlet Laplacian, norms, region and time-set masks
nonlinearity   semilinear terms, Lipschitz bounds, linearized potentials
pde            backward Euler solvers and the exact discrete adjoint
control        minimal-norm null controls, Picard fixed point, admissible controls
timeopt        N(T), bisection for the minimal time, saturation, improvement
observability  empirical observability constants
cli            config-driven batch runs and replay verification
"""

__version__ = "0.1.0"

from .mesh import Grid1D, RegionMask, TimeGrid, TimeSet, first_eigenvalue, inner_product, laplacian_apply, lq_norm
from .nonlinearity import Nonlinearity, TruncatedNonlinearity
from .pde import (
    PotentialField,
    SourceField,
    Trajectory,
    adjoint_backward,
    control_to_state,
    solve_adjoint,
    solve_linear,
    solve_semilinear,
)
from .control import (
    ControlFailure,
    ControlSignal,
    NullControlCertificate,
    construct_admissible,
    min_norm_control_linear,
    probe_smallness_radius,
    semilinear_null_control,
)
from .timeopt import (
    ImprovementReport,
    NotImprovable,
    TimeOptResult,
    bang_bang_profile,
    improve_control,
    minimal_norm,
    optimal_time,
)
from .observability import ObservabilityEstimate, estimate_constant, observed_mass, scaling_study

__all__ = [
    "Grid1D", "TimeGrid", "RegionMask", "TimeSet", "laplacian_apply", "lq_norm", "inner_product",
    "first_eigenvalue", "Nonlinearity", "TruncatedNonlinearity", "PotentialField", "SourceField",
    "Trajectory", "solve_linear", "solve_semilinear", "solve_adjoint", "adjoint_backward",
    "control_to_state", "ControlSignal", "NullControlCertificate", "ControlFailure",
    "min_norm_control_linear", "semilinear_null_control", "probe_smallness_radius",
    "construct_admissible", "TimeOptResult", "ImprovementReport", "NotImprovable", "minimal_norm",
    "optimal_time", "bang_bang_profile", "improve_control", "ObservabilityEstimate",
    "observed_mass", "estimate_constant", "scaling_study",
]
