"""Ground states of a Kirchhoff-type fractional p-Laplacian Dirichlet problem.

The energy is discretised with Grünwald-Letnikov operators and minimised over
the Nehari manifold via the fibering-map projection.
"""

from .energy import EnergyBreakdown, ProblemConfig, g_curvature, g_value, gradient
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    GroundStateError,
    HypothesisScanError,
    ProjectionError,
    StagnationError,
)
from .fractional_ops import FracOperator, Grid, GridFunction, Side, apply, build_operator, gl_weights, rl_integral
from .function_space import (
    SpaceParams,
    embedding_constant_cinf,
    embedding_constant_cp,
    lp_norm,
    space_norm,
    sup_norm,
    verify_embeddings,
)
from .nehari import (
    FiberRoot,
    SolveReport,
    compute_sigma,
    fiber_derivative,
    fiber_value,
    ground_state,
    minimize,
    project,
)
from .nonlinearity import Nonlinearity, check_hypotheses, preset_power

__all__ = [name for name in dir() if not name.startswith("_")]
