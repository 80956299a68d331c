"""Numerical laboratory for constrained matrix Harnack estimates.

Heat-type solution pairs are evolved on model Kahler manifolds (flat torus,
Fubini-Study CP^1) coupled to a homothetic Ricci-type metric flow; the
package certifies positivity of the constrained Harnack quadratic and
verifies the supporting evolution identities by finite differencing in time.
"""

from .config import (
    ExperimentConfig,
    build_model,
    config_from_dict,
    describe_config,
    load_config,
)
from .fields import (
    HermitianField,
    ScalarField,
    SymmetricField,
    fd_time_derivative,
    holomorphic_hessian,
    integrate,
    laplacian,
    mixed_hessian,
)
from .flow import (
    FlowTrajectory,
    Schedule,
    evolve_pair,
    mass,
    ordering_margin,
    write_trajectory,
)
from .geometry import (
    ExtinctionError,
    ManifoldModel,
    ModelKind,
    curvature_at,
    einstein_constant,
    extinction_time,
    flat_torus,
    fubini_study_cp1,
    krf_scale,
    metric_state,
)
from .grids import CP1Grid, TorusGrid, make_grid
from .harnack import (
    LYHReport,
    LYHSnapshot,
    ReportOptions,
    build_snapshot,
    compute_Q,
    compute_Y,
    dominance_defect,
    log_density,
    min_eigenvalue,
    quotient,
    report,
    report_to_csv,
)
from .identities import (
    IdentityResidual,
    convergence_order,
    residuals_to_csv,
    run_identity_suite,
)
from .initial import GENERATORS, make_field, make_initial_pair

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ExperimentConfig", "build_model", "config_from_dict", "describe_config",
    "load_config",
    "HermitianField", "ScalarField", "SymmetricField", "fd_time_derivative",
    "holomorphic_hessian", "integrate", "laplacian", "mixed_hessian",
    "FlowTrajectory", "Schedule", "evolve_pair", "mass", "ordering_margin",
    "write_trajectory",
    "ExtinctionError", "ManifoldModel", "ModelKind", "curvature_at",
    "einstein_constant", "extinction_time", "flat_torus", "fubini_study_cp1",
    "krf_scale", "metric_state",
    "CP1Grid", "TorusGrid", "make_grid",
    "LYHReport", "LYHSnapshot", "ReportOptions", "build_snapshot",
    "compute_Q", "compute_Y", "dominance_defect", "log_density",
    "min_eigenvalue", "quotient", "report", "report_to_csv",
    "IdentityResidual", "convergence_order", "residuals_to_csv",
    "run_identity_suite",
    "GENERATORS", "make_field", "make_initial_pair",
]
