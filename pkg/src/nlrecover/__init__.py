"""Signal recovery from nonlinear transformations via common fixed points."""
from .core import Problem, gaussian_unit_vector, make_rng, tensor_new
from .operators import (
    ConvexFunctionOracle,
    FixedPointOp,
    InfeasibleProblemError,
    box_projector,
    certify_firmly_nonexpansive,
    data_operator,
    energy_bound_oracle,
    fourier_phase_projector,
    subgradient_projector,
    tv_oracle,
)
from .scenarios import Scenario, build, relative_error
from .solver import (
    ControlPolicy,
    RelaxationPolicy,
    SolverConfig,
    Trace,
    emopsp_lambda,
    solve,
    solve_relaxed,
    validate_control,
)

__version__ = "0.1.0"
