"""hp finite element solver for elliptic optimal control with Robin boundary.

The package solves

    min J(y, u) = lam_omega/2 |y - y_omega|^2_{L2(O)}
                + lam_gamma/2 |y - y_gamma|^2_{L2(G)}
                + lam/2 |u|^2_{L2(O)}

subject to  -Lap y = beta*u in O = (0,1)^2,  dn y + alpha*y = 0 on G,
and the pointwise bound u >= u_a, discretized with variable-degree
Lagrange elements on structured triangle/quad meshes.  It provides the
projected fixed-point optimizer, a seven-part residual error indicator,
and convergence/reliability studies against a fine reference solution.
"""

from .meshkit import Mesh, build_uniform_quad_mesh, build_uniform_tri_mesh, shape_regularity
from .elements import ShapeBasis, QuadratureRule, basis_eval, make_quadrature, edge_trace
from .spaces import (
    StateSpace,
    ControlSpace,
    Field,
    build_state_space,
    build_control_space,
    evaluate,
    evaluate_gradient,
    evaluate_batch,
    interpolate_state,
    interpolate_control,
    l2_project_control,
    l2_norm,
    h1_norm,
)
from .assembly import (
    ProblemData,
    assemble_robin_stiffness,
    assemble_domain_mass,
    assemble_boundary_mass,
    assemble_adjoint_rhs,
    evaluate_J,
)
from .linsolve import solve_spd, SolveReport, SpdSolver
from .optimizer import OptimizerConfig, Triple, IterationLog, ControlProblem, run
from .estimator import EstimatorBreakdown, estimate, local_indicator, all_local_indicators
from .verify import (
    ReferenceConfig,
    ErrorReport,
    ConvergenceTable,
    compute_reference,
    error_norms,
    convergence_study,
    manufactured_check,
    reliability_ratio,
    reliability_report,
)
from .config import RunConfig, example_preset

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
