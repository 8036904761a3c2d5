"""Single-run and batch execution with on-disk artifacts.

A run takes a scenario to a trajectory file plus a structured report.
Trajectory files are plain CSV with a `t,x0..,u0..` header and 17
significant digits per value so a save/load round trip is bit exact.
Batches derive randomized scenarios from a base scenario up front
(seeded, collision checked), then execute them with an optional process
pool; the aggregate is a pure fold over the per-run reports in run
order, so the parallelism degree never changes the numbers.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .environment import min_signed_distance, signed_distance
from .ocp import (DiscreteTrajectory, OCProblem, goal_distance, simulate_zoh,
                  trajectory_cost)
from .scenario import (Scenario, ScenarioError, build_problem,
                       build_scp_params, build_shooting_config,
                       initial_trajectory, load_scenario, parse_scenario,
                       scenario_to_dict, _check_keys, _vector)
from .scp import SolveOutcome, TerminationCase, solve_ocp
from .transcription import dynamics_discretization_error

OUT_DIR_ENV = "SCPTRAJ_OUT_DIR"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "."))


# ---------------------------------------------------------------------------
# trajectory files

def save_trajectory(path, traj: DiscreteTrajectory):
    """Write `t,x0..x{n-1},u0..u{m-1}` rows at 17 significant digits."""
    n = traj.X.shape[1]
    m = traj.U.shape[1]
    header = ",".join(["t"] + [f"x{i}" for i in range(n)]
                      + [f"u{j}" for j in range(m)])
    lines = [header]
    times = traj.times
    for i in range(traj.N):
        row = np.concatenate(([times[i]], traj.X[i], traj.U[i]))
        lines.append(",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path) -> DiscreteTrajectory:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ValueError(f"{path}: empty trajectory file")
    header = [c.strip() for c in text[0].split(",")]
    if header[0] != "t":
        raise ValueError(f"{path}: first column must be t, got {header[0]!r}")
    n = sum(1 for c in header if c.startswith("x"))
    m = sum(1 for c in header if c.startswith("u"))
    if 1 + n + m != len(header):
        raise ValueError(f"{path}: malformed header {header}")
    rows = [np.array([float(v) for v in line.split(",")]) for line in text[1:]]
    data = np.vstack(rows)
    if data.shape[1] != 1 + n + m:
        raise ValueError(f"{path}: row width disagrees with the header")
    t = data[:, 0]
    if t.size < 2 or t[-1] <= t[0]:
        raise ValueError(f"{path}: need at least two increasing time samples")
    return DiscreteTrajectory(X=data[:, 1:1 + n], U=data[:, 1 + n:],
                              t_f=float(t[-1]))


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class RunReport:
    """Everything a run produced, ready for JSON emission."""

    scenario: str
    seed: int
    case: str
    success: bool
    cost: float
    penalized_cost: float
    iterations: int
    accepted_iterations: int
    accelerated: bool
    max_violation: float
    goal_distance: float
    rollout_goal_distance: float
    discretization_error: float
    min_obstacle_distance: Optional[float]
    t_f: float
    wall_time: float
    solver_error: Optional[str]
    shooting: Optional[Dict[str, Any]]
    history: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["min_obstacle_distance"] is not None \
                and not np.isfinite(d["min_obstacle_distance"]):
            d["min_obstacle_distance"] = None
        return d


def trajectory_metrics(problem: OCProblem, traj: DiscreteTrajectory,
                       rollout_substeps: int = 20) -> Dict[str, float]:
    """Recompute run metrics from scratch; used by runs and by `check`.

    The rollout is an independent RK4 integration of the returned controls,
    so its terminal goal distance catches transcription artifacts that the
    collocated states cannot show.
    """
    X_roll = simulate_zoh(problem.model, problem.x0, traj.U, traj.t_f,
                          substeps=rollout_substeps)
    ws = problem.state_penalty
    out = {
        "cost": trajectory_cost(problem, traj, 1.0),
        "goal_distance": goal_distance(problem.goal, traj.X[-1]),
        "rollout_goal_distance": goal_distance(problem.goal, X_roll[-1]),
        "discretization_error": dynamics_discretization_error(problem.model,
                                                              traj),
        "max_violation": 0.0 if ws is None
        else float(max(problem.g2_value(x) for x in traj.X)),
    }
    out["min_obstacle_distance"] = None if ws is None \
        else min_signed_distance(ws, traj.X)
    return out


def _history_rows(outcome: SolveOutcome) -> List[Dict[str, Any]]:
    rows = []
    for r in outcome.history:
        rows.append({
            "k": int(r.k),
            "trust": float(r.trust),
            "penalty": float(r.penalty),
            "trust_gap": float(r.trust_gap),
            "trust_ok": bool(r.trust_ok),
            "ratio": None if r.ratio is None else float(r.ratio),
            "accepted": bool(r.accepted),
            "cost": float(r.cost),
            "violation": float(r.violation),
        })
    return rows


def _shooting_summary(outcome: SolveOutcome) -> Optional[Dict[str, Any]]:
    sh = outcome.shooting
    if sh is None:
        return None
    return {
        "converged": sh.converged,
        "newton_iters": sh.newton_iters,
        "residual_norm": float(sh.residual_norm),
        "hamiltonian_drift": float(sh.hamiltonian_drift),
        "diverged": sh.diverged,
    }


def run_single(scenario: Scenario, init: Optional[DiscreteTrajectory] = None,
               out_dir=None, observer=None,
               use_shooting: Optional[bool] = None
               ) -> Tuple[RunReport, SolveOutcome]:
    """Solve one scenario; optionally write <name>.traj.csv and a report.

    Success means the loop terminated at a solution (converged or an exact
    fixed point) whose recomputed constraint violation is within tolerance.
    """
    problem = build_problem(scenario)
    params = build_scp_params(scenario)
    shooting = build_shooting_config(scenario)
    if use_shooting is False:
        shooting = None
    if init is None:
        init = initial_trajectory(scenario, problem)
    elif init.N != params.num_nodes:
        raise ValueError(
            f"initial trajectory has {init.N} nodes, scenario wants "
            f"{params.num_nodes}")

    start = _time.perf_counter()
    outcome = solve_ocp(problem, init, params, shooting=shooting,
                        observer=observer)
    wall = _time.perf_counter() - start

    traj = outcome.trajectory
    metrics = trajectory_metrics(problem, traj)
    solved = outcome.case in (TerminationCase.CONVERGED,
                              TerminationCase.EXACT_FIXED_POINT)
    success = solved and metrics["max_violation"] <= params.violation_tol
    report = RunReport(
        scenario=scenario.name,
        seed=scenario.seed,
        case=outcome.case.value,
        success=success,
        cost=metrics["cost"],
        penalized_cost=trajectory_cost(problem, traj, outcome.final_penalty),
        iterations=outcome.iterations,
        accepted_iterations=sum(1 for r in outcome.history if r.accepted),
        accelerated=outcome.accelerated,
        max_violation=metrics["max_violation"],
        goal_distance=metrics["goal_distance"],
        rollout_goal_distance=metrics["rollout_goal_distance"],
        discretization_error=metrics["discretization_error"],
        min_obstacle_distance=metrics["min_obstacle_distance"],
        t_f=traj.t_f,
        wall_time=wall,
        solver_error=outcome.solver_error,
        shooting=_shooting_summary(outcome),
        history=_history_rows(outcome),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_trajectory(out / f"{scenario.name}.traj.csv", traj)
        (out / f"{scenario.name}.report.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n")
    return report, outcome


# ---------------------------------------------------------------------------
# batches

@dataclass(frozen=True)
class SamplingSpec:
    x0_low: List[float]
    x0_high: List[float]
    goal_low: Optional[List[float]] = None
    goal_high: Optional[List[float]] = None


@dataclass(frozen=True)
class BatchSpec:
    base: Scenario
    runs: int
    sampling: SamplingSpec
    jobs: int = 1
    seed: int = 0


def load_batch_spec(path) -> BatchSpec:
    p = Path(path)
    try:
        tree = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from exc
    if not isinstance(tree, dict):
        raise ScenarioError(f"{path}: expected a mapping at the top level")
    _check_keys(tree, "batch", ("scenario", "runs", "jobs", "seed", "sampling"),
                ("scenario", "runs", "sampling"))
    ref = tree["scenario"]
    base_path = p.parent / ref
    base = load_scenario(base_path if base_path.exists() else ref)
    runs = tree["runs"]
    if not isinstance(runs, int) or runs < 1:
        raise ScenarioError("batch.runs: need a positive integer")
    jobs = tree.get("jobs", 1)
    if not isinstance(jobs, int) or jobs < 1:
        raise ScenarioError("batch.jobs: need a positive integer")
    seed = tree.get("seed", 0)
    if not isinstance(seed, int):
        raise ScenarioError("batch.seed: need an integer")
    samp = tree["sampling"]
    _check_keys(samp, "batch.sampling", ("x0", "goal"), ("x0",))
    n = len(base.x0)
    _check_keys(samp["x0"], "batch.sampling.x0", ("low", "high"), ("low", "high"))
    x0_low = _vector(samp["x0"]["low"], "batch.sampling.x0.low", length=n)
    x0_high = _vector(samp["x0"]["high"], "batch.sampling.x0.high", length=n)
    goal_low = goal_high = None
    if "goal" in samp:
        if base.goal.kind != "point":
            raise ScenarioError(
                "batch.sampling.goal: only point goals can be randomized")
        _check_keys(samp["goal"], "batch.sampling.goal", ("low", "high"),
                    ("low", "high"))
        goal_low = _vector(samp["goal"]["low"], "batch.sampling.goal.low",
                           length=n)
        goal_high = _vector(samp["goal"]["high"], "batch.sampling.goal.high",
                            length=n)
    for low, high, where in ((x0_low, x0_high, "x0"),
                             (goal_low, goal_high, "goal")):
        if low is not None and any(l > h for l, h in zip(low, high)):
            raise ScenarioError(f"batch.sampling.{where}: low exceeds high")
    return BatchSpec(base=base, runs=runs, jobs=jobs, seed=seed,
                     sampling=SamplingSpec(x0_low=x0_low, x0_high=x0_high,
                                           goal_low=goal_low,
                                           goal_high=goal_high))


def _position_clear(scenario: Scenario, problem: OCProblem, x) -> bool:
    ws = problem.state_penalty
    if ws is None or not ws.obstacles:
        return True
    pos = ws.position_of(np.asarray(x, dtype=float))
    return all(signed_distance(ob, pos) > ob.d_safe for ob in ws.obstacles)


def derive_runs(spec: BatchSpec) -> List[Scenario]:
    """Materialize the randomized scenarios for a batch, in run order.

    Sampling is rejection-based against the workspace so every derived
    start and goal is strictly clear of the inflated obstacles.  The
    sequence depends only on the batch seed.
    """
    base_problem = build_problem(spec.base)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    lo0 = np.asarray(spec.sampling.x0_low, dtype=float)
    hi0 = np.asarray(spec.sampling.x0_high, dtype=float)
    scenarios = []
    for j in range(spec.runs):
        x0 = _sample_clear(rng, lo0, hi0, spec.base, base_problem,
                           f"run {j} start")
        goal = spec.base.goal
        if spec.sampling.goal_low is not None:
            g = _sample_clear(rng, np.asarray(spec.sampling.goal_low),
                              np.asarray(spec.sampling.goal_high),
                              spec.base, base_problem, f"run {j} goal")
            goal = dataclasses.replace(goal, x_f=[float(v) for v in g])
        scenarios.append(dataclasses.replace(
            spec.base, name=f"{spec.base.name}-run{j:03d}",
            x0=[float(v) for v in x0], goal=goal,
            seed=spec.seed + j))
    return scenarios


def _sample_clear(rng, low, high, scenario, problem, what, attempts=200):
    for _ in range(attempts):
        x = rng.uniform(low, high)
        if _position_clear(scenario, problem, x):
            return x
    raise ScenarioError(
        f"could not draw a collision-free {what} in {attempts} attempts; "
        "the sampling box sits inside the obstacles")


def _batch_worker(scen_dict: dict) -> dict:
    scenario = parse_scenario(scen_dict, scen_dict.get("name", "run"))
    report, _ = run_single(scenario)
    return report.to_dict()


def aggregate_reports(reports: Sequence[dict]) -> dict:
    """Fold per-run reports (in run order) into the batch summary."""
    successes = [r for r in reports if r["success"]]
    costs = [r["cost"] for r in successes]
    iters = [r["iterations"] for r in reports]
    agg: Dict[str, Any] = {
        "runs": len(reports),
        "successes": len(successes),
        "success_rate": len(successes) / len(reports) if reports else 0.0,
        "accelerated": sum(1 for r in reports if r["accelerated"]),
        "cases": {},
        "iterations_total": int(sum(iters)),
        "iterations_max": int(max(iters)) if iters else 0,
        "wall_time_total": float(sum(r["wall_time"] for r in reports)),
    }
    for r in reports:
        agg["cases"][r["case"]] = agg["cases"].get(r["case"], 0) + 1
    if costs:
        agg["cost_mean"] = float(np.mean(costs))
        agg["cost_min"] = float(min(costs))
        agg["cost_max"] = float(max(costs))
    return agg


def run_batch(spec: BatchSpec, out_dir=None, jobs: Optional[int] = None) -> dict:
    """Execute a batch; returns {aggregate, runs:[...]} and optionally writes it.

    Per-run solves are independent, so they may execute in a process pool;
    reports are collected in submission order and aggregated by a pure fold,
    which keeps the result identical across parallelism degrees.
    """
    scenarios = derive_runs(spec)
    payloads = [scenario_to_dict(s) for s in scenarios]
    workers = spec.jobs if jobs is None else jobs
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_batch_worker, payloads))
    else:
        reports = [_batch_worker(p) for p in payloads]
    result = {"aggregate": aggregate_reports(reports), "runs": reports}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{spec.base.name}.batch.json").write_text(
            json.dumps(result, indent=2) + "\n")
    return result
