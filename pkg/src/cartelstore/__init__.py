"""
cartelstore: stationary equilibrium of a cartel / competitive-fringe commodity
market with constrained speculative storage.

Solves the coupled system for the cartel value function and the arbitrage-free
price field on the storage x fringe-production rectangle with a monotone
upwind/Godunov scheme and state-constraint boundary closures, then analyzes
the solved fields: discontinuous optimal policy and its shock line, square-root
boundary layers, the equilibrium limit cycle and the invariant measure.
"""

__version__ = "0.1.0"

from .model import (            # noqa: F401
    FieldPair,
    Grid1D,
    Grid2D,
    ModelParams,
    PolicyFields,
    appendix_params,
    b_tilde,
    baseline_params,
    demand,
    drift_b,
    f_storage,
    make_grid,
    make_grid_1d,
    sigma_vol,
    storage_cost,
)
from .hamiltonians import (     # noqa: F401
    HamiltonianEval,
    godunov_flux,
    h_down,
    h_full,
    h_min,
    h_up,
)
from .scheme import (           # noqa: F401
    BRANCH_INTERIOR,
    BRANCH_PRICE,
    BoundaryDiagnostics,
    ResidualPair,
    SchemeOperator,
    assemble_residual,
    boundary_price_max_kmax,
    boundary_price_max_kmin,
    chi_root,
    chi_value,
    residual_boundary_kmax,
    residual_boundary_kmin,
    residual_interior,
)
from .solver import (           # noqa: F401
    SolveReport,
    SolveSettings,
    SolverDivergence,
    default_init,
    solve_1d,
    solve_stationary,
)
from .analysis import (         # noqa: F401
    AsymptoticData,
    MeasureHistogram,
    SmoothAnsatzReport,
    Trajectory,
    boundary_asymptotics,
    detect_cycle,
    extract_policy,
    fit_boundary_exponent,
    invariant_measure,
    segment_phases,
    simulate_trajectory,
    smooth_ansatz_inconsistency,
)
from .config import ConfigError, format_config, parse_config  # noqa: F401
