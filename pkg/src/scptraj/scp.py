"""Trust-region outer loop over the convex subproblems.

Each step linearizes about the last accepted trajectory, solves the
subproblem, and applies the acceptance logic: a hard check that the new
states stayed inside the trust region, then the model-accuracy ratio
comparing the nonlinear and convexified cost/dynamics at the new solution.
Good agreement grows the trust region (capped at its initial value), poor
agreement rejects and shrinks it, and a hard-check failure rejects while
escalating the penalty weight.  The penalty weight resets whenever an
accepted iterate satisfies the state constraints and escalates otherwise.

Termination is classified into four mutually exclusive cases: the penalty
weight exceeding its cap, an exact fixed point of the iteration, sup-norm
convergence of consecutive accepted solutions with satisfied constraints,
or the iteration limit.

When shooting is enabled, every accepted iterate hands its initial-state
dual (sign-calibrated) to the indirect accelerator; a converged extremal
that also satisfies the state constraints ends the run early with the
resampled extremal as the answer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import shooting as shooting_mod
from .backend import SolverConfig, SolveStatus, solve
from .environment import max_violation
from .ocp import (DiscreteTrajectory, FixedFinalTime, FreeFinalTime,
                  OCProblem, PointGoal, goal_distance, trajectory_cost)
from .shooting import ShootingConfig, ShootingResult
from .transcription import (LocpSpec, build_locp, convexified_cost,
                            convexified_dynamics_deviation,
                            trajectory_from_solution)

logger = logging.getLogger(__name__)

Array = np.ndarray


class SubproblemError(RuntimeError):
    """A convex subproblem failed to solve; the loop state is preserved."""

    def __init__(self, status: SolveStatus, stats: dict):
        super().__init__(f"subproblem solve failed: {status.name} ({stats})")
        self.status = status
        self.stats = stats


@dataclass(frozen=True)
class SCPParams:
    """Outer-loop parameters; None fields resolve from the problem scale."""

    num_nodes: int = 40
    max_iters: int = 100
    trust_init: Optional[float] = None     # default (2 dist(x0, goal))^2
    penalty_init: float = 1.0
    penalty_max: float = 1e8
    penalty_escalate: float = 5.0
    violation_tol: float = 1e-3
    trust_shrink: float = 0.5
    trust_grow: float = 2.0
    ratio_good: float = 0.05
    ratio_max: float = 0.25
    conv_tol: Optional[float] = None       # default 1e-3 * problem scale
    slack_weight: Optional[float] = None   # default 1e4 * max(1, penalty)
    time_trust: Optional[float] = None     # free-time step bound on t_f
    fixed_point_tol: float = 1e-12
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ValueError("need at least two grid nodes")
        if self.max_iters < 1:
            raise ValueError("need at least one iteration")
        if self.trust_init is not None and self.trust_init <= 0:
            raise ValueError("initial trust region must be positive")
        if self.penalty_init < 1.0:
            raise ValueError("initial penalty weight must be >= 1")
        if self.penalty_max < self.penalty_init:
            raise ValueError("penalty cap below its initial value")
        if self.penalty_escalate <= 1.0:
            raise ValueError("penalty escalation factor must exceed 1")
        if self.violation_tol < 0.0:
            raise ValueError("violation tolerance must be nonnegative")
        if not 0.0 < self.trust_shrink < 1.0:
            raise ValueError("trust shrink factor must lie in (0, 1)")
        if self.trust_grow <= 1.0:
            raise ValueError("trust growth factor must exceed 1")
        if not 0.0 < self.ratio_good < self.ratio_max < 1.0:
            raise ValueError("need 0 < ratio_good < ratio_max < 1")
        if self.conv_tol is not None and self.conv_tol <= 0:
            raise ValueError("convergence tolerance must be positive")
        if self.slack_weight is not None and self.slack_weight <= 0:
            raise ValueError("slack weight must be positive")
        if self.time_trust is not None and self.time_trust <= 0:
            raise ValueError("final-time trust bound must be positive")
        if self.fixed_point_tol <= 0:
            raise ValueError("fixed point tolerance must be positive")

    def resolved_trust_init(self, problem: OCProblem) -> float:
        if self.trust_init is not None:
            return self.trust_init
        return (2.0 * goal_distance(problem.goal, problem.x0)) ** 2

    def resolved_conv_tol(self, problem: OCProblem) -> float:
        if self.conv_tol is not None:
            return self.conv_tol
        return 1e-3 * max(1.0, goal_distance(problem.goal, problem.x0))

    def resolved_slack_weight(self, penalty: float) -> float:
        if self.slack_weight is not None:
            return self.slack_weight
        return 1e4 * max(1.0, penalty)

    def resolved_time_trust(self, problem: OCProblem) -> Optional[float]:
        if not isinstance(problem.time, FreeFinalTime):
            return None
        if self.time_trust is not None:
            return self.time_trust
        return 0.5 * (problem.time.t_max - problem.time.t_min) + 1e-9


class TerminationCase(Enum):
    MAX_WEIGHT_EXCEEDED = "MaxWeightExceeded"
    EXACT_FIXED_POINT = "ExactFixedPoint"
    CONVERGED = "Converged"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class IterateRecord:
    """One outer-loop step: what was solved, measured, and decided."""

    k: int
    trust: float                 # trust region in force for this step
    penalty: float               # penalty weight the subproblem used
    trust_gap: float             # measured max_i ||x_new_i - x_prev_i||^2
    trust_ok: bool               # hard check outcome
    ratio: Optional[float]       # absent when the hard check failed
    accepted: bool
    cost: float                  # penalized nonlinear cost of the new solution
    violation: float             # max state-constraint penalty along it
    trajectory: DiscreteTrajectory
    initial_dual: Array
    solve_stats: dict

    def __post_init__(self):
        if self.accepted and self.ratio is None:
            raise ValueError("accepted step must carry a ratio")


@dataclass(frozen=True)
class SolveOutcome:
    case: TerminationCase
    trajectory: DiscreteTrajectory
    history: Tuple[IterateRecord, ...]
    initial_dual: Optional[Array]    # dual of the last accepted iterate
    final_trust: float
    final_penalty: float
    shooting: Optional[ShootingResult] = None
    accelerated: bool = False
    solver_error: Optional[str] = None

    @property
    def iterations(self) -> int:
        return len(self.history)


@dataclass
class ScpState:
    """Mutable loop state between steps."""

    problem: OCProblem
    prev: DiscreteTrajectory         # last accepted trajectory
    trust: float
    penalty: float
    k: int = 0
    last_dual: Optional[Array] = None


def trajectory_violation(problem: OCProblem, traj: DiscreteTrajectory) -> float:
    if problem.state_penalty is None:
        return 0.0
    return max_violation(problem.state_penalty, traj.X)


def model_accuracy_ratio(problem: OCProblem, prev: DiscreteTrajectory,
                         new: DiscreteTrajectory, omega: float) -> float:
    """Relative disagreement between the nonlinear and convexified models.

    Numerator: |cost gap| plus the quadrature of the dynamics gap along the
    new solution; denominator: |convexified cost| plus the quadrature of the
    convexified dynamics magnitude.  Zero when new coincides with the
    linearization point (tangency), so the step is then always accepted.
    """
    if prev.N != new.N:
        raise ValueError("trajectories live on different grids")
    j_nl = trajectory_cost(problem, new, omega)
    j_cv = convexified_cost(problem, prev, omega, new)
    mismatch, magnitude = convexified_dynamics_deviation(problem, prev, new)
    numer = abs(j_nl - j_cv) + mismatch
    denom = abs(j_cv) + magnitude
    if denom == 0.0:
        return 0.0 if numer == 0.0 else np.inf
    return float(numer / denom)


def convergence_check(prev: DiscreteTrajectory, new: DiscreteTrajectory,
                      conv_tol: float):
    """Sup-norm closeness of consecutive solutions (states plus final time)."""
    if prev.N != new.N:
        raise ValueError("trajectories live on different grids")
    sup_diff = prev.state_sup_distance(new) + abs(prev.t_f - new.t_f)
    return sup_diff <= conv_tol, sup_diff


def scp_step(state: ScpState, params: SCPParams,
             solution_override: Optional[DiscreteTrajectory] = None) -> IterateRecord:
    """One solve / check / accept-or-reject step; mutates state.

    solution_override substitutes the subproblem solution (test hook for
    decision-logic checks); the dual is then zero.
    """
    problem = state.problem
    spec = LocpSpec(problem=problem, prev=state.prev, delta=state.trust,
                    omega=state.penalty,
                    slack_weight=params.resolved_slack_weight(state.penalty),
                    sigma_trust=params.resolved_time_trust(problem),
                    cone_support=params.solver.cone_support)

    if solution_override is None:
        program, layout = build_locp(spec)
        solution = solve(program, params.solver)
        if solution.status != SolveStatus.OPTIMAL:
            raise SubproblemError(solution.status, solution.stats)
        new = trajectory_from_solution(solution.z, layout, spec)
        dual = solution.dual("initial-state").copy()
        stats = dict(solution.stats)
    else:
        new = solution_override
        dual = np.zeros(problem.n)
        stats = {"solver": "override"}

    trust_gap = float(np.max(np.sum((new.X - state.prev.X) ** 2, axis=1)))
    # tiny grace absorbs solver-tolerance overshoot of an active bound
    trust_ok = trust_gap <= state.trust + 1e-9 * max(1.0, state.trust)

    ratio: Optional[float] = None
    if trust_ok:
        ratio = model_accuracy_ratio(problem, state.prev, new, state.penalty)
        accepted = bool(ratio <= params.ratio_max)
    else:
        accepted = False

    violation = trajectory_violation(problem, new)
    cost = trajectory_cost(problem, new, state.penalty)
    record = IterateRecord(k=state.k, trust=state.trust, penalty=state.penalty,
                           trust_gap=trust_gap, trust_ok=trust_ok, ratio=ratio,
                           accepted=accepted, cost=cost, violation=violation,
                           trajectory=new, initial_dual=dual, solve_stats=stats)

    if not trust_ok:
        # reject: keep the trust region, escalate the penalty
        state.penalty *= params.penalty_escalate
    elif not accepted:
        # reject: model too inaccurate, shrink the trust region
        state.trust *= params.trust_shrink
    else:
        if ratio < params.ratio_good:
            state.trust = min(params.trust_grow * state.trust,
                              params.resolved_trust_init(problem))
        state.penalty = params.penalty_init if violation <= params.violation_tol \
            else params.penalty_escalate * state.penalty
        state.prev = new
        state.last_dual = dual
    state.k += 1
    return record


def _attempt_shooting(problem: OCProblem, record: IterateRecord,
                      params: SCPParams, config: ShootingConfig
                      ) -> Tuple[bool, Optional[Tuple[ShootingResult,
                                                      DiscreteTrajectory]]]:
    """Hand the accepted iterate to the indirect accelerator.

    Returns (ran, handoff): ran says a Newton shoot actually executed (scope
    and feasibility-gate skips do not count against an attempt budget), and
    handoff is (result, resampled trajectory) only when the extremal
    converged and still satisfies the state constraints on the outer grid.
    Any failure is a silent no-op for the loop.
    """
    if not (isinstance(problem.time, FixedFinalTime)
            and isinstance(problem.goal, PointGoal)):
        return False, None
    if config.feasibility_gate is not None \
            and record.violation > config.feasibility_gate:
        return False, None
    from .calibration import adjoint_sign
    try:
        warm = adjoint_sign() * record.initial_dual
        result = shooting_mod.newton_shoot(problem, warm, record.penalty,
                                           config, num_nodes=params.num_nodes)
    except Exception as exc:  # a failed attempt must never kill the loop
        logger.debug("shooting attempt raised: %s", exc)
        return True, None
    if not result.converged:
        return True, None
    traj = shooting_mod.resample_to_grid(result, params.num_nodes, config)
    if trajectory_violation(problem, traj) > params.violation_tol:
        logger.debug("shooting extremal violates state constraints; ignored")
        return True, None
    return True, (result, traj)


def solve_ocp(problem: OCProblem, init: DiscreteTrajectory, params: SCPParams,
              shooting: Optional[ShootingConfig] = None,
              observer: Optional[Callable[[IterateRecord], None]] = None
              ) -> SolveOutcome:
    """Run the outer loop from init until one of the four termination cases.

    The initial trajectory need not be feasible.  Progress events go to the
    observer as each record is emitted.  A subproblem failure annotates the
    outcome (solver_error) and stops the run with the history intact.
    """
    if init.N != params.num_nodes:
        raise ValueError("initial trajectory grid disagrees with num_nodes")
    conv_tol = params.resolved_conv_tol(problem)
    attempts_left = float("inf")
    if shooting is not None and shooting.max_attempts is not None:
        attempts_left = shooting.max_attempts
    state = ScpState(problem=problem, prev=init,
                     trust=params.resolved_trust_init(problem),
                     penalty=params.penalty_init)
    history: List[IterateRecord] = []
    outcome_shooting: Optional[ShootingResult] = None
    final_traj: Optional[DiscreteTrajectory] = None
    accelerated = False
    solver_error: Optional[str] = None
    case: Optional[TerminationCase] = None

    while case is None:
        if state.penalty > params.penalty_max:
            case = TerminationCase.MAX_WEIGHT_EXCEEDED
            break
        if state.k >= params.max_iters:
            case = TerminationCase.ITERATION_LIMIT
            break
        prev_accepted = state.prev
        try:
            record = scp_step(state, params)
        except SubproblemError as exc:
            solver_error = str(exc)
            case = TerminationCase.ITERATION_LIMIT
            logger.warning("stopping on subproblem failure: %s", exc)
            break
        history.append(record)
        if observer is not None:
            observer(record)
        if not record.accepted:
            continue
        sup_fixed = prev_accepted.state_sup_distance(record.trajectory) \
            + abs(prev_accepted.t_f - record.trajectory.t_f)
        if sup_fixed <= params.fixed_point_tol:
            case = TerminationCase.EXACT_FIXED_POINT
            break
        converged, _ = convergence_check(prev_accepted, record.trajectory,
                                         conv_tol)
        if converged and record.violation <= params.violation_tol:
            case = TerminationCase.CONVERGED
            break
        if shooting is not None and attempts_left > 0:
            ran, handoff = _attempt_shooting(problem, record, params, shooting)
            if handoff is not None:
                outcome_shooting, final_traj = handoff
                accelerated = True
                case = TerminationCase.CONVERGED
                break
            if ran:
                attempts_left -= 1

    if final_traj is None:
        final_traj = state.prev
    return SolveOutcome(case=case, trajectory=final_traj,
                        history=tuple(history),
                        initial_dual=state.last_dual,
                        final_trust=state.trust,
                        final_penalty=state.penalty,
                        shooting=outcome_shooting,
                        accelerated=accelerated,
                        solver_error=solver_error)
