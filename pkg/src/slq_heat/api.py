"""Public low-level API re-exports for the discretisation and solver building blocks."""

from slq_heat._backward import (
    step_backward_exact as step_backward_exact,
    tracking_problem as tracking_problem,
)
from slq_heat._control import (
    CostEstimate as CostEstimate,
    OptimalSolution as OptimalSolution,
    adjoint_pairing as adjoint_pairing,
    brute_force_tree_control as brute_force_tree_control,
    control_inner as control_inner,
    control_norm as control_norm,
    optimality_residual as optimality_residual,
    optimality_system_residuals as optimality_system_residuals,
    quadratic_expansion_check as quadratic_expansion_check,
)
from slq_heat._crosscheck import (
    CheckResult as CheckResult,
    CrosscheckReport as CrosscheckReport,
    run_crosscheck as run_crosscheck,
)
from slq_heat._forward import (
    march_forward as march_forward,
    step_forward as step_forward,
)
from slq_heat._gradient import (
    GdStep as GdStep,
    gd_step as gd_step,
    gradient as gradient,
)
from slq_heat._mesh import (
    Norms as Norms,
    apply_discrete_laplacian as apply_discrete_laplacian,
    apply_resolvent as apply_resolvent,
    h1_seminorm as h1_seminorm,
    norms as norms,
    project_p0 as project_p0,
    project_p1 as project_p1,
    prolongate as prolongate,
    prolongate_p0 as prolongate_p0,
    prolongation_matrix as prolongation_matrix,
)
from slq_heat._noise import (
    coarsen as coarsen,
)
from slq_heat._problem import (
    Discretisation as Discretisation,
    discretise as discretise,
)
from slq_heat._profiles import (
    Profile as Profile,
)
from slq_heat._rates import (
    MetricFit as MetricFit,
    fit_metric as fit_metric,
    run_rate_experiment as run_rate_experiment,
)
from slq_heat._renderer import (
    _build_html_string as _build_html_string,
    render_report as render_report,
)
from slq_heat._runner import (
    run_gd_experiment as run_gd_experiment,
)
