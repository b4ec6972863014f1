import importlib.metadata

from slq_heat._backward import (
    BackwardProblem as BackwardProblem,
    BackwardSolution as BackwardSolution,
    BasisSpec as BasisSpec,
    DriverTiming as DriverTiming,
    solve_backward_exact as solve_backward_exact,
    solve_backward_regression as solve_backward_regression,
    solve_backward_tree as solve_backward_tree,
)
from slq_heat._config import (
    ExperimentSpec as ExperimentSpec,
    config_from_dict as config_from_dict,
    load_config as load_config,
)
from slq_heat._control import (
    ControlProblem as ControlProblem,
    FeedbackLaw as FeedbackLaw,
    RiccatiSolution as RiccatiSolution,
    evaluate_cost as evaluate_cost,
    optimal_chaos as optimal_chaos,
    simulate_optimal as simulate_optimal,
    solve_optimality as solve_optimality,
)
from slq_heat._errors import (
    ConfigError as ConfigError,
    InternalError as InternalError,
    InvalidArgumentError as InvalidArgumentError,
    InvalidStateError as InvalidStateError,
    ResourceLimitError as ResourceLimitError,
    SlqHeatError as SlqHeatError,
)
from slq_heat._forward import (
    ForwardProblem as ForwardProblem,
    solve_forward_chaos as solve_forward_chaos,
    solve_forward_paths as solve_forward_paths,
)
from slq_heat._gradient import (
    GdConfig as GdConfig,
    GdReport as GdReport,
    kappa_bound as kappa_bound,
    run_gd as run_gd,
)
from slq_heat._mesh import (
    FemOperators as FemOperators,
    Mesh1D as Mesh1D,
    assemble as assemble,
    build_mesh as build_mesh,
)
from slq_heat._noise import (
    BernoulliTree as BernoulliTree,
    NoiseEnsemble as NoiseEnsemble,
    TimeGrid as TimeGrid,
    build_grid as build_grid,
    enumerate_tree as enumerate_tree,
    sample_ensemble as sample_ensemble,
)
from slq_heat._processes import (
    ChaosAffineProcess as ChaosAffineProcess,
    ChaosValue as ChaosValue,
    PathProcess as PathProcess,
)
from slq_heat._rates import RateReport as RateReport, observed_order as observed_order
from slq_heat._renderer import render_report as render_report
from slq_heat._runner import run_experiment as run_experiment

try:
    __version__ = importlib.metadata.version("slq-heat")
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0"  # Fallback for development mode
