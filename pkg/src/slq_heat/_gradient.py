"""Gradient descent on the reduced cost, one forward and one backward solve per step."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from slq_heat._backward import DriverTiming, solve_backward_exact, tracking_problem
from slq_heat._constants import (
    CONTRACTION_SLACK,
    DEFAULT_GD_MAX_ITERS,
    DEFAULT_GD_TOL,
    DISTANCE_FLOOR,
    STEP_RATIO_SLACK,
)
from slq_heat._control import (
    ControlProblem,
    RiccatiSolution,
    control_inner,
    control_norm,
    evaluate_cost,
    optimal_chaos,
)
from slq_heat._errors import InternalError, InvalidArgumentError
from slq_heat._forward import solve_forward_chaos
from slq_heat._processes import ChaosAffineProcess
from slq_heat._types import ReportRow

logger = logging.getLogger("slq_heat")


def kappa_bound(alpha: float, T: float) -> float:
    """Lipschitz bound K = 1 + alpha T + T^2 of the reduced gradient."""
    if alpha < 0 or not T > 0:
        raise InvalidArgumentError(
            f"need alpha >= 0 and T > 0, got alpha={alpha}, T={T}"
        )
    return 1.0 + alpha * T + T**2


@dataclass(frozen=True, eq=False)
class GdConfig:
    kappa: float | None = None
    max_iters: int = DEFAULT_GD_MAX_ITERS
    tol: float = DEFAULT_GD_TOL
    u0: ChaosAffineProcess | None = None

    def __post_init__(self) -> None:
        if self.kappa is not None and not self.kappa > 0:
            raise InvalidArgumentError(f"kappa must be positive, got {self.kappa}")
        if self.max_iters < 1:
            raise InvalidArgumentError(
                f"max_iters must be at least 1, got {self.max_iters}"
            )
        if self.tol < 0:
            raise InvalidArgumentError(f"tol must be non-negative, got {self.tol}")


@dataclass(frozen=True, eq=False)
class GdStep:
    control: ChaosAffineProcess
    gradient: ChaosAffineProcess
    gradient_norm: float
    state: ChaosAffineProcess
    adjoint: ChaosAffineProcess


def gradient(problem: ControlProblem, control: ChaosAffineProcess) -> GdStep:
    """Reduced gradient U - Pi_h^0 Y from one forward and one backward solve.

    The returned step has ``control`` equal to the input; :func:`gd_step` moves it.
    """
    ops, grid = problem.ops, problem.grid
    state = solve_forward_chaos(problem.forward(control))
    backward = tracking_problem(
        ops, grid, state, problem.target, problem.alpha, DriverTiming.NEXT
    )
    adjoint = solve_backward_exact(backward).Y
    if not isinstance(adjoint, ChaosAffineProcess):
        raise InternalError("exact backward solve returned pathwise values")
    direction = control.head(grid.N) - adjoint.head(grid.N).map_linear(ops.p1_to_p0)
    return GdStep(control, direction, control_norm(problem, direction), state, adjoint)


def gd_step(
    problem: ControlProblem, control: ChaosAffineProcess, kappa: float
) -> GdStep:
    """U^{l+1} = U^l - (U^l - Pi_h^0 Y^l) / kappa."""
    if not kappa > 0:
        raise InvalidArgumentError(f"kappa must be positive, got {kappa}")
    current = gradient(problem, control)
    moved = control.head(problem.grid.N) - current.gradient.scale(1.0 / kappa)
    return replace(current, control=moved)


@dataclass
class GdReport:
    """Iteration history; entry l of each list refers to U^l."""

    kappa: float
    kappa_bound: float
    h: float
    tau: float
    costs: list[float] = field(default_factory=list)
    gradient_norms: list[float] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)
    optimal_cost: float | None = None
    converged: bool = False
    flags: list[str] = field(default_factory=list)
    control: ChaosAffineProcess | None = None

    @property
    def iterations(self) -> int:
        return len(self.costs)

    @property
    def contraction_factor(self) -> float:
        return 1.0 - 1.0 / self.kappa

    def contraction_holds(self) -> list[bool]:
        """Per iteration: ||U^l - U*||^2 <= (1 - 1/kappa)^l ||U^0 - U*||^2."""
        if not self.distances:
            return []
        start = self.distances[0]
        return [
            d <= self.contraction_factor**level * start * (1 + CONTRACTION_SLACK)
            + DISTANCE_FLOOR
            for level, d in enumerate(self.distances)
        ]

    def step_ratios(self) -> list[float]:
        """d_l / d_{l-1} for l >= 1; zero once the previous distance vanished."""
        return [
            current / previous if previous > 0 else 0.0
            for previous, current in zip(self.distances, self.distances[1:])
        ]

    def step_ratio_holds(self) -> list[bool]:
        """Per iteration: ||U^l - U*||^2 <= (1 - 1/kappa) ||U^{l-1} - U*||^2."""
        if not self.distances:
            return []
        factor = self.contraction_factor + STEP_RATIO_SLACK
        return [True] + [
            current <= factor * previous + DISTANCE_FLOOR
            for previous, current in zip(self.distances, self.distances[1:])
        ]

    def cost_gap_holds(self) -> list[bool]:
        """Per iteration l >= 1: J(U^l) - J(U*) <= 2 kappa ||U^0 - U*||^2 / l."""
        if self.optimal_cost is None or not self.distances:
            return []
        start = self.distances[0]
        checks = [True]
        for level in range(1, len(self.costs)):
            gap = self.costs[level] - self.optimal_cost
            bound = 2 * self.kappa * start / level
            checks.append(gap <= bound * (1 + CONTRACTION_SLACK))
        return checks

    @property
    def passed(self) -> bool:
        if "kappa_below_bound" in self.flags:
            return False
        return (
            all(self.contraction_holds())
            and all(self.step_ratio_holds())
            and all(self.cost_gap_holds())
        )

    def rows(self) -> list[ReportRow]:
        contraction = self.contraction_holds() or [None] * self.iterations
        steps = self.step_ratio_holds()
        ratios = [0.0, *self.step_ratios()]
        gaps = self.cost_gap_holds() or [None] * self.iterations
        rows: list[ReportRow] = []
        for level in range(self.iterations):
            values: list[tuple[str, float, bool | None]] = [
                ("gradient_norm", self.gradient_norms[level], None),
                ("cost", self.costs[level], None),
            ]
            if self.distances:
                distance = self.distances[level]
                values.append(("distance_sq", distance, contraction[level]))
                if level > 0:
                    values.append(("contraction_ratio", ratios[level], steps[level]))
            if self.optimal_cost is not None:
                gap = self.costs[level] - self.optimal_cost
                values.append(("cost_gap", gap, gaps[level]))
            for metric, value, ok in values:
                rows.append(
                    ReportRow(
                        level=level,
                        h=self.h,
                        tau=self.tau,
                        n_paths=0,
                        metric=metric,
                        squared_error=value,
                        std_err=0.0,
                        fitted_order=None,
                        passed=ok,
                    )
                )
        return rows


def run_gd(
    problem: ControlProblem,
    config: GdConfig,
    reference: RiccatiSolution | None = None,
) -> GdReport:
    """Iterate :func:`gd_step` from ``config.u0`` (zero by default).

    Stops once the gradient norm drops to ``config.tol`` or after ``max_iters``
    gradient evaluations. With a Riccati ``reference`` the distance to the
    optimal control and the cost gap are recorded as well.
    """
    grid, ops = problem.grid, problem.ops
    bound = kappa_bound(problem.alpha, grid.T)
    kappa = bound if config.kappa is None else config.kappa
    report = GdReport(kappa=kappa, kappa_bound=bound, h=ops.mesh.h, tau=grid.tau)
    if kappa < bound:
        report.flags.append("kappa_below_bound")
        logger.warning(
            "kappa=%g is below the bound K=%g; contraction is not guaranteed",
            kappa,
            bound,
        )
    optimal = None
    if reference is not None:
        optimal = optimal_chaos(problem, reference).U
        if not isinstance(optimal, ChaosAffineProcess):
            raise InternalError("optimal control must be chaos-affine")
        report.optimal_cost = evaluate_cost(problem, optimal).value
    control = config.u0
    if control is None:
        control = ChaosAffineProcess.zeros(grid, grid.N, ops.n_cells)
    for _ in range(config.max_iters):
        step = gd_step(problem, control, kappa)
        report.costs.append(evaluate_cost(problem, control).value)
        report.gradient_norms.append(step.gradient_norm)
        if optimal is not None:
            gap = control - optimal
            report.distances.append(control_inner(problem, gap, gap))
        if step.gradient_norm <= config.tol:
            report.converged = True
            break
        control = step.control
    report.control = control
    costs = report.costs
    if any(b > a + CONTRACTION_SLACK * abs(a) for a, b in zip(costs, costs[1:])):
        report.flags.append("non_monotone_cost")
    if not report.converged:
        report.flags.append("max_iters_reached")
        logger.info("Gradient descent stopped after %d iterations", config.max_iters)
    logger.debug(
        "Gradient descent: %d iterations, final gradient norm %.3e",
        report.iterations,
        report.gradient_norms[-1],
    )
    return report
