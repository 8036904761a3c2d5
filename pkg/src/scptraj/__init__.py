"""Trajectory optimization by trust-region sequential convexification.

The solver alternates between convex subproblems built around the last
accepted trajectory and an acceptance test on the true nonlinear
problem; state constraints enter through a penalty whose weight only
ever escalates.  Once the outer loop is near a fixed point, an indirect
single-shooting stage warm-started from the subproblem duals can finish
the job at superlinear rate.
"""

from .backend import SolveStatus, SolverConfig
from .environment import (BoxBound, BoxObstacle, NormBound, SphereObstacle,
                          Workspace)
from .models import (airplane_model, double_integrator_model, dubins_model,
                     freeflyer_model, straightline_init)
from .ocp import (AffineGoal, BallControlSet, BallGoal, BoxControlSet,
                  ControlAffineModel, DiscreteTrajectory, FixedFinalTime,
                  FreeFinalTime, OCProblem, PointGoal, RunningCost,
                  simulate_zoh, trajectory_cost)
from .runner import (BatchSpec, RunReport, load_batch_spec, load_trajectory,
                     run_batch, run_single, save_trajectory,
                     trajectory_metrics)
from .scenario import (Scenario, ScenarioError, build_problem,
                       build_scp_params, build_shooting_config,
                       builtin_scenario_names, initial_trajectory,
                       load_scenario, save_scenario)
from .scp import (SCPParams, SolveOutcome, TerminationCase, solve_ocp)
from .shooting import ShootingConfig, ShootingResult, newton_shoot

__version__ = "0.1.0"

__all__ = [
    "AffineGoal", "BallControlSet", "BallGoal", "BatchSpec", "BoxBound",
    "BoxControlSet", "BoxObstacle", "ControlAffineModel",
    "DiscreteTrajectory", "FixedFinalTime", "FreeFinalTime", "NormBound",
    "OCProblem", "PointGoal", "RunReport", "RunningCost", "SCPParams",
    "Scenario", "ScenarioError", "ShootingConfig", "ShootingResult",
    "SolveOutcome", "SolveStatus", "SolverConfig", "SphereObstacle",
    "TerminationCase", "Workspace", "airplane_model", "build_problem",
    "build_scp_params", "build_shooting_config", "builtin_scenario_names",
    "double_integrator_model", "dubins_model", "freeflyer_model",
    "initial_trajectory", "load_batch_spec", "load_scenario",
    "load_trajectory", "newton_shoot", "run_batch", "run_single",
    "save_scenario", "save_trajectory", "simulate_zoh", "solve_ocp",
    "straightline_init", "trajectory_cost", "trajectory_metrics",
]
