"""Scenario files: schema, strict validation, and problem assembly.

A scenario is a YAML tree with blocks for the model, horizon, boundary
conditions, workspace, cost, outer-loop parameters, and shooting.  Every
key is checked against the schema; unknown keys are errors with the full
path so typos never pass silently.  Loaded scenarios are plain-data
dataclasses (lists and scalars, no arrays) so they compare equal through
a save/load round-trip.

Shipped reference scenarios live in the package's scenarios/ directory
and are addressable by bare name everywhere a path is accepted.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .environment import (BoxBound, BoxObstacle, NormBound, SphereObstacle,
                          Workspace)
from .models import (AirplaneParams, DubinsParams, FreeFlyerParams,
                     airplane_model, double_integrator_model, dubins_model,
                     freeflyer_model, straightline_init)
from .ocp import (AffineGoal, BallControlSet, BallGoal, BoxControlSet,
                  FixedFinalTime, FreeFinalTime, OCProblem, PointGoal,
                  RunningCost)
from .scp import SCPParams
from .backend import SolverConfig
from .shooting import ShootingConfig

MODEL_NAMES = ("dubins", "freeflyer", "airplane", "double_integrator")

# default position block (for the workspace) per model
_POSITION_WIDTH = {"dubins": 2, "freeflyer": 3, "airplane": 3}


class ScenarioError(ValueError):
    """Schema violation; the message carries the offending path."""


def _fail(path: str, msg: str):
    raise ScenarioError(f"{path}: {msg}")


def _check_keys(d: dict, path: str, allowed: Sequence[str],
                required: Sequence[str] = ()):
    if not isinstance(d, dict):
        _fail(path, f"expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        _fail(path, f"unknown key(s) {unknown}; allowed: {sorted(allowed)}")
    missing = sorted(set(required) - set(d))
    if missing:
        _fail(path, f"missing required key(s) {missing}")


def _number(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {type(v).__name__}")
    return v


def _vector(v, path: str, length: Optional[int] = None) -> list:
    if not isinstance(v, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        _fail(path, "expected a list of numbers")
    if length is not None and len(v) != length:
        _fail(path, f"expected {length} entries, got {len(v)}")
    return list(v)


def _matrix(v, path: str, cols: Optional[int] = None) -> list:
    if not isinstance(v, list) or not v:
        _fail(path, "expected a list of rows")
    rows = [_vector(r, f"{path}[{i}]") for i, r in enumerate(v)]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        _fail(path, "ragged rows")
    if cols is not None and width != cols:
        _fail(path, f"expected {cols} columns, got {width}")
    return rows


# ---------------------------------------------------------------------------
# plain-data scenario tree

@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class HorizonSpec:
    N: int
    t_f: Optional[float] = None
    t_min: Optional[float] = None
    t_max: Optional[float] = None

    @property
    def free_time(self) -> bool:
        return self.t_f is None


@dataclass(frozen=True)
class GoalSpec:
    kind: str                       # point | ball | affine
    x_f: Optional[List[float]] = None
    center: Optional[List[float]] = None
    radius: Optional[float] = None
    A: Optional[List[List[float]]] = None
    b: Optional[List[float]] = None


@dataclass(frozen=True)
class ControlSetSpec:
    kind: str                       # box | ball
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    center: Optional[List[float]] = None
    radius: Optional[float] = None


@dataclass(frozen=True)
class ObstacleSpec:
    kind: str                       # sphere | box
    center: List[float]
    radius: Optional[float] = None
    half_extents: Optional[List[float]] = None
    d_safe: Optional[float] = None  # falls back to the workspace default


@dataclass(frozen=True)
class StateBoundSpec:
    kind: str                       # norm | box
    indices: Optional[List[int]] = None
    bound: Optional[float] = None
    index: Optional[int] = None
    lower: Optional[float] = None
    upper: Optional[float] = None


@dataclass(frozen=True)
class WorkspaceSpec:
    obstacles: Tuple[ObstacleSpec, ...] = ()
    state_bounds: Tuple[StateBoundSpec, ...] = ()
    d_safe: float = 0.0
    position: Optional[List[int]] = None   # [start, stop) into the state


@dataclass(frozen=True)
class CostSpec:
    R: List[float]                        # diagonal
    g1: Optional[Dict[str, Any]] = None
    coupling: Optional[Dict[str, Any]] = None


@dataclass(frozen=True)
class Scenario:
    name: str
    model: ModelSpec
    horizon: HorizonSpec
    x0: List[float]
    goal: GoalSpec
    control_set: ControlSetSpec
    cost: CostSpec
    workspace: Optional[WorkspaceSpec] = None
    scp: Dict[str, Any] = field(default_factory=dict)
    shooting: Optional[Dict[str, Any]] = None
    seed: int = 0


# ---------------------------------------------------------------------------
# parsing

def _parse_model(d, path) -> ModelSpec:
    _check_keys(d, path, ("name", "params"), ("name",))
    name = d["name"]
    if name not in MODEL_NAMES:
        _fail(f"{path}.name", f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    params = d.get("params", {})
    if not isinstance(params, dict):
        _fail(f"{path}.params", "expected a mapping")
    return ModelSpec(name=name, params=dict(params))


def _parse_horizon(d, path) -> HorizonSpec:
    _check_keys(d, path, ("N", "t_f", "t_min", "t_max"), ("N",))
    N = d["N"]
    if not isinstance(N, int) or N < 2:
        _fail(f"{path}.N", "need an integer node count >= 2")
    if "t_f" in d:
        if "t_min" in d or "t_max" in d:
            _fail(path, "give either t_f or the pair t_min/t_max, not both")
        t_f = _number(d["t_f"], f"{path}.t_f")
        if t_f <= 0:
            _fail(f"{path}.t_f", "final time must be positive")
        return HorizonSpec(N=N, t_f=t_f)
    if "t_min" not in d or "t_max" not in d:
        _fail(path, "free final time needs both t_min and t_max")
    t_min = _number(d["t_min"], f"{path}.t_min")
    t_max = _number(d["t_max"], f"{path}.t_max")
    if not 0 < t_min < t_max:
        _fail(path, "need 0 < t_min < t_max")
    return HorizonSpec(N=N, t_min=t_min, t_max=t_max)


def _parse_goal(d, path) -> GoalSpec:
    _check_keys(d, path, ("type", "x_f", "center", "radius", "A", "b"), ("type",))
    kind = d["type"]
    if kind == "point":
        _check_keys(d, path, ("type", "x_f"), ("type", "x_f"))
        return GoalSpec(kind="point", x_f=_vector(d["x_f"], f"{path}.x_f"))
    if kind == "ball":
        _check_keys(d, path, ("type", "center", "radius"), ("type", "center", "radius"))
        radius = _number(d["radius"], f"{path}.radius")
        if radius <= 0:
            _fail(f"{path}.radius", "radius must be positive")
        return GoalSpec(kind="ball", center=_vector(d["center"], f"{path}.center"),
                        radius=radius)
    if kind == "affine":
        _check_keys(d, path, ("type", "A", "b"), ("type", "A", "b"))
        A = _matrix(d["A"], f"{path}.A")
        b = _vector(d["b"], f"{path}.b", length=len(A))
        return GoalSpec(kind="affine", A=A, b=b)
    _fail(f"{path}.type", f"unknown goal type {kind!r}")


def _parse_control_set(d, path) -> ControlSetSpec:
    _check_keys(d, path, ("type", "lower", "upper", "center", "radius"), ("type",))
    kind = d["type"]
    if kind == "box":
        _check_keys(d, path, ("type", "lower", "upper"), ("type", "lower", "upper"))
        lower = _vector(d["lower"], f"{path}.lower")
        upper = _vector(d["upper"], f"{path}.upper", length=len(lower))
        return ControlSetSpec(kind="box", lower=lower, upper=upper)
    if kind == "ball":
        _check_keys(d, path, ("type", "center", "radius"), ("type", "center", "radius"))
        radius = _number(d["radius"], f"{path}.radius")
        if radius <= 0:
            _fail(f"{path}.radius", "radius must be positive")
        return ControlSetSpec(kind="ball", center=_vector(d["center"], f"{path}.center"),
                              radius=radius)
    _fail(f"{path}.type", f"unknown control set type {kind!r}")


def _parse_obstacle(d, path) -> ObstacleSpec:
    _check_keys(d, path, ("type", "center", "radius", "half_extents", "d_safe"),
                ("type", "center"))
    kind = d["type"]
    d_safe = _number(d["d_safe"], f"{path}.d_safe") if "d_safe" in d else None
    center = _vector(d["center"], f"{path}.center")
    if kind == "sphere":
        if "radius" not in d:
            _fail(path, "sphere needs a radius")
        if "half_extents" in d:
            _fail(path, "sphere does not take half_extents")
        radius = _number(d["radius"], f"{path}.radius")
        if radius <= 0:
            _fail(f"{path}.radius", "radius must be positive")
        return ObstacleSpec(kind="sphere", center=center, radius=radius, d_safe=d_safe)
    if kind == "box":
        if "half_extents" not in d:
            _fail(path, "box needs half_extents")
        if "radius" in d:
            _fail(path, "box does not take a radius")
        he = _vector(d["half_extents"], f"{path}.half_extents")
        if any(h <= 0 for h in he):
            _fail(f"{path}.half_extents", "half extents must be positive")
        return ObstacleSpec(kind="box", center=center, half_extents=he, d_safe=d_safe)
    _fail(f"{path}.type", f"unknown obstacle type {kind!r}")


def _parse_state_bound(d, path) -> StateBoundSpec:
    _check_keys(d, path, ("type", "indices", "bound", "index", "lower", "upper"),
                ("type",))
    kind = d["type"]
    if kind == "norm":
        _check_keys(d, path, ("type", "indices", "bound"), ("type", "indices", "bound"))
        idx = d["indices"]
        if not isinstance(idx, list) or not all(isinstance(i, int) for i in idx) \
                or not idx:
            _fail(f"{path}.indices", "expected a nonempty list of integers")
        bound = _number(d["bound"], f"{path}.bound")
        if bound <= 0:
            _fail(f"{path}.bound", "bound must be positive")
        return StateBoundSpec(kind="norm", indices=list(idx), bound=bound)
    if kind == "box":
        _check_keys(d, path, ("type", "index", "lower", "upper"),
                    ("type", "index", "lower", "upper"))
        if not isinstance(d["index"], int):
            _fail(f"{path}.index", "expected an integer state index")
        lower = _number(d["lower"], f"{path}.lower")
        upper = _number(d["upper"], f"{path}.upper")
        if lower >= upper:
            _fail(path, "need lower < upper")
        return StateBoundSpec(kind="box", index=d["index"], lower=lower, upper=upper)
    _fail(f"{path}.type", f"unknown state bound type {kind!r}")


def _parse_workspace(d, path) -> WorkspaceSpec:
    _check_keys(d, path, ("obstacles", "state_bounds", "d_safe", "position"))
    d_safe = _number(d.get("d_safe", 0.0), f"{path}.d_safe")
    if d_safe < 0:
        _fail(f"{path}.d_safe", "safety margin must be nonnegative")
    obstacles = []
    for i, o in enumerate(d.get("obstacles", []) or []):
        obstacles.append(_parse_obstacle(o, f"{path}.obstacles[{i}]"))
    bounds = []
    for i, b in enumerate(d.get("state_bounds", []) or []):
        bounds.append(_parse_state_bound(b, f"{path}.state_bounds[{i}]"))
    position = None
    if "position" in d:
        pos = d["position"]
        if not (isinstance(pos, list) and len(pos) == 2
                and all(isinstance(p, int) for p in pos) and pos[0] < pos[1]):
            _fail(f"{path}.position", "expected [start, stop) with start < stop")
        position = list(pos)
    return WorkspaceSpec(obstacles=tuple(obstacles), state_bounds=tuple(bounds),
                         d_safe=d_safe, position=position)


def _parse_cost(d, path, m: int) -> CostSpec:
    _check_keys(d, path, ("R", "g1", "coupling"), ("R",))
    R = d["R"]
    if isinstance(R, (int, float)) and not isinstance(R, bool):
        R = [float(R)] * m
    else:
        R = _vector(R, f"{path}.R", length=m)
    if any(r <= 0 for r in R):
        _fail(f"{path}.R", "diagonal entries must be positive")
    g1 = d.get("g1")
    if g1 is not None:
        _check_keys(g1, f"{path}.g1", ("type", "gradient", "weights", "center"),
                    ("type",))
        if g1["type"] == "linear":
            _check_keys(g1, f"{path}.g1", ("type", "gradient"), ("type", "gradient"))
            _vector(g1["gradient"], f"{path}.g1.gradient")
        elif g1["type"] == "quadratic":
            _check_keys(g1, f"{path}.g1", ("type", "weights", "center"),
                        ("type", "weights", "center"))
            w = _vector(g1["weights"], f"{path}.g1.weights")
            _vector(g1["center"], f"{path}.g1.center", length=len(w))
            if any(x < 0 for x in w):
                _fail(f"{path}.g1.weights", "weights must be nonnegative")
        else:
            _fail(f"{path}.g1.type", f"unknown g1 form {g1['type']!r}")
        g1 = dict(g1)
    coupling = d.get("coupling")
    if coupling is not None:
        _check_keys(coupling, f"{path}.coupling", ("type", "value", "matrix"),
                    ("type",))
        if coupling["type"] == "constant":
            _check_keys(coupling, f"{path}.coupling", ("type", "value"),
                        ("type", "value"))
            _vector(coupling["value"], f"{path}.coupling.value", length=m)
        elif coupling["type"] == "linear":
            _check_keys(coupling, f"{path}.coupling", ("type", "matrix"),
                        ("type", "matrix"))
            if len(_matrix(coupling["matrix"], f"{path}.coupling.matrix")) != m:
                _fail(f"{path}.coupling.matrix", "needs one row per control")
        else:
            _fail(f"{path}.coupling.type", f"unknown coupling form {coupling['type']!r}")
        coupling = dict(coupling)
    return CostSpec(R=R, g1=g1, coupling=coupling)


_SCP_KEYS = tuple(f.name for f in dataclasses.fields(SCPParams) if f.name != "solver")
_SOLVER_KEYS = tuple(f.name for f in dataclasses.fields(SolverConfig))
_SHOOTING_KEYS = tuple(f.name for f in dataclasses.fields(ShootingConfig))


def _parse_scp(d, path, N: int) -> Dict[str, Any]:
    _check_keys(d, path, _SCP_KEYS + ("solver",))
    out = dict(d)
    if "num_nodes" in out and out["num_nodes"] != N:
        _fail(f"{path}.num_nodes", f"disagrees with horizon.N = {N}")
    if "solver" in out:
        _check_keys(out["solver"], f"{path}.solver", _SOLVER_KEYS)
        out["solver"] = dict(out["solver"])
    return out


def _parse_shooting(d, path) -> Optional[Dict[str, Any]]:
    _check_keys(d, path, _SHOOTING_KEYS + ("enabled",))
    return dict(d)


def parse_scenario(tree: dict, name_default: str = "scenario") -> Scenario:
    """Validate a raw mapping into a Scenario; every unknown key is an error."""
    _check_keys(tree, "scenario",
                ("name", "model", "horizon", "boundary", "workspace", "cost",
                 "control_set", "scp", "shooting", "seed"),
                ("model", "horizon", "boundary", "cost", "control_set"))
    model = _parse_model(tree["model"], "model")
    horizon = _parse_horizon(tree["horizon"], "horizon")
    _check_keys(tree["boundary"], "boundary", ("x0", "goal"), ("x0", "goal"))
    x0 = _vector(tree["boundary"]["x0"], "boundary.x0")
    goal = _parse_goal(tree["boundary"]["goal"], "boundary.goal")
    control_set = _parse_control_set(tree["control_set"], "control_set")
    m = len(control_set.lower) if control_set.kind == "box" \
        else len(control_set.center)
    cost = _parse_cost(tree["cost"], "cost", m)
    workspace = None
    if tree.get("workspace") is not None:
        workspace = _parse_workspace(tree["workspace"], "workspace")
    scp = _parse_scp(tree.get("scp", {}) or {}, "scp", horizon.N)
    shooting = None
    if tree.get("shooting") is not None:
        shooting = _parse_shooting(tree["shooting"], "shooting")
    seed = tree.get("seed", 0)
    if not isinstance(seed, int):
        _fail("seed", "expected an integer")
    name = tree.get("name", name_default)
    if not isinstance(name, str) or not name:
        _fail("name", "expected a nonempty string")
    return Scenario(name=name, model=model, horizon=horizon, x0=x0, goal=goal,
                    control_set=control_set, cost=cost, workspace=workspace,
                    scp=scp, shooting=shooting, seed=seed)


def _builtin_path(name: str):
    return resources.files("scptraj").joinpath("scenarios", f"{name}.yaml")


def builtin_scenario_names() -> List[str]:
    base = resources.files("scptraj").joinpath("scenarios")
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".yaml"))


def load_scenario(path) -> Scenario:
    """Load a scenario from a file path or a built-in scenario name."""
    p = Path(path)
    if not p.exists() and not str(path).endswith(".yaml"):
        builtin = _builtin_path(str(path))
        if builtin.is_file():
            text = builtin.read_text()
            return _load_text(text, str(path), str(path))
    if not p.exists():
        raise ScenarioError(f"{path}: no such file or built-in scenario")
    return _load_text(p.read_text(), str(p), p.stem)


def _load_text(text: str, source: str, name_default: str) -> Scenario:
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{source}: parse error: {exc}") from exc
    if not isinstance(tree, dict):
        raise ScenarioError(f"{source}: expected a mapping at the top level")
    try:
        scenario = parse_scenario(tree, name_default)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    _check_dimensions(scenario)
    return scenario


def scenario_to_dict(s: Scenario) -> dict:
    """Plain mapping mirror of the scenario, suitable for emission."""
    out: Dict[str, Any] = {"name": s.name,
                           "model": {"name": s.model.name}}
    if s.model.params:
        out["model"]["params"] = dict(s.model.params)
    hz: Dict[str, Any] = {"N": s.horizon.N}
    if s.horizon.t_f is not None:
        hz["t_f"] = s.horizon.t_f
    else:
        hz["t_min"] = s.horizon.t_min
        hz["t_max"] = s.horizon.t_max
    out["horizon"] = hz
    goal: Dict[str, Any] = {"type": s.goal.kind}
    if s.goal.kind == "point":
        goal["x_f"] = list(s.goal.x_f)
    elif s.goal.kind == "ball":
        goal["center"] = list(s.goal.center)
        goal["radius"] = s.goal.radius
    else:
        goal["A"] = [list(r) for r in s.goal.A]
        goal["b"] = list(s.goal.b)
    out["boundary"] = {"x0": list(s.x0), "goal": goal}
    cs: Dict[str, Any] = {"type": s.control_set.kind}
    if s.control_set.kind == "box":
        cs["lower"] = list(s.control_set.lower)
        cs["upper"] = list(s.control_set.upper)
    else:
        cs["center"] = list(s.control_set.center)
        cs["radius"] = s.control_set.radius
    out["control_set"] = cs
    cost: Dict[str, Any] = {"R": list(s.cost.R)}
    if s.cost.g1 is not None:
        cost["g1"] = dict(s.cost.g1)
    if s.cost.coupling is not None:
        cost["coupling"] = dict(s.cost.coupling)
    out["cost"] = cost
    if s.workspace is not None:
        ws: Dict[str, Any] = {}
        if s.workspace.d_safe:
            ws["d_safe"] = s.workspace.d_safe
        if s.workspace.position is not None:
            ws["position"] = list(s.workspace.position)
        if s.workspace.obstacles:
            obs = []
            for o in s.workspace.obstacles:
                e: Dict[str, Any] = {"type": o.kind, "center": list(o.center)}
                if o.kind == "sphere":
                    e["radius"] = o.radius
                else:
                    e["half_extents"] = list(o.half_extents)
                if o.d_safe is not None:
                    e["d_safe"] = o.d_safe
                obs.append(e)
            ws["obstacles"] = obs
        if s.workspace.state_bounds:
            bnds = []
            for b in s.workspace.state_bounds:
                if b.kind == "norm":
                    bnds.append({"type": "norm", "indices": list(b.indices),
                                 "bound": b.bound})
                else:
                    bnds.append({"type": "box", "index": b.index,
                                 "lower": b.lower, "upper": b.upper})
            ws["state_bounds"] = bnds
        out["workspace"] = ws
    if s.scp:
        out["scp"] = dict(s.scp)
    if s.shooting is not None:
        out["shooting"] = dict(s.shooting)
    if s.seed:
        out["seed"] = s.seed
    return out


def save_scenario(s: Scenario, path):
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(s), sort_keys=False))


# ---------------------------------------------------------------------------
# assembly into solver objects

def build_model(spec: ModelSpec):
    params = dict(spec.params)

    def take(allowed):
        unknown = sorted(set(params) - set(allowed))
        if unknown:
            _fail("model.params", f"unknown key(s) {unknown} for {spec.name}")
        return params

    if spec.name == "dubins":
        return dubins_model(DubinsParams(**take(("speed", "turn_gain"))))
    if spec.name == "freeflyer":
        kw = take(("mass", "inertia"))
        if "inertia" in kw:
            kw = dict(kw)
            kw["inertia"] = np.asarray(kw["inertia"], dtype=float)
        return freeflyer_model(FreeFlyerParams(**kw))
    if spec.name == "airplane":
        return airplane_model(AirplaneParams(
            **take(("mass", "gravity", "air_density", "wing_area", "c_d0",
                    "k_induced", "v_min", "v_max", "gamma_max"))))
    if spec.name == "double_integrator":
        kw = take(("dims",))
        return double_integrator_model(kw.get("dims", 2))
    raise ScenarioError(f"unknown model {spec.name!r}")


def _default_position(model_name: str, n: int) -> slice:
    width = _POSITION_WIDTH.get(model_name, n // 2)
    return slice(0, width)


def build_workspace(s: Scenario, n: int) -> Optional[Workspace]:
    ws = s.workspace
    if ws is None or (not ws.obstacles and not ws.state_bounds):
        return None
    if ws.position is not None:
        width = ws.position[1] - ws.position[0]
    else:
        width = _default_position(s.model.name, n).stop
    if not 1 <= width <= 3:
        raise ScenarioError("workspace.position: width must be 1, 2, or 3")

    def pad(vec, fill, what):
        v = list(vec)
        if len(v) != width:
            raise ScenarioError(
                f"workspace obstacle {what} has {len(v)} entries; the "
                f"position block is {width}-dimensional")
        return np.array(v + [fill] * (3 - width), dtype=float)

    obstacles = []
    for o in ws.obstacles:
        d_safe = o.d_safe if o.d_safe is not None else ws.d_safe
        if o.kind == "sphere":
            obstacles.append(SphereObstacle(center=pad(o.center, 0.0, "center"),
                                            radius=o.radius, d_safe=d_safe))
        else:
            # unused axes get huge extents so the planar distance is unchanged
            obstacles.append(BoxObstacle(
                center=pad(o.center, 0.0, "center"),
                half_extents=pad(o.half_extents, 1e3, "half_extents"),
                d_safe=d_safe))
    bounds = []
    for b in ws.state_bounds:
        if b.kind == "norm":
            bounds.append(NormBound(indices=tuple(b.indices), bound=b.bound))
        else:
            bounds.append(BoxBound(index=b.index, lower=b.lower, upper=b.upper))
    if ws.position is not None:
        position = slice(ws.position[0], ws.position[1])
    else:
        position = _default_position(s.model.name, n)
    return Workspace(obstacles=tuple(obstacles), position_slice=position,
                     state_bounds=tuple(bounds))


def _build_cost(spec: CostSpec, n: int) -> RunningCost:
    R = np.diag(np.asarray(spec.R, dtype=float))
    kwargs: Dict[str, Any] = {"R": R}
    if spec.g1 is not None:
        if spec.g1["type"] == "linear":
            c = np.asarray(spec.g1["gradient"], dtype=float)
            if c.size != n:
                raise ScenarioError("cost.g1.gradient length disagrees with the model")
            kwargs["g1"] = lambda x: float(c @ x)
            kwargs["g1_grad"] = lambda x: c
        else:
            w = np.asarray(spec.g1["weights"], dtype=float)
            ctr = np.asarray(spec.g1["center"], dtype=float)
            if w.size != n:
                raise ScenarioError("cost.g1.weights length disagrees with the model")
            kwargs["g1"] = lambda x: float(w @ (x - ctr) ** 2)
            kwargs["g1_grad"] = lambda x: 2.0 * w * (x - ctr)
    if spec.coupling is not None:
        if spec.coupling["type"] == "constant":
            val = np.asarray(spec.coupling["value"], dtype=float)
            zero = np.zeros((val.size, n))
            kwargs["coupling"] = lambda x: val
            kwargs["coupling_jac"] = lambda x: zero
        else:
            M = np.asarray(spec.coupling["matrix"], dtype=float)
            if M.shape[1] != n:
                raise ScenarioError("cost.coupling.matrix width disagrees with the model")
            kwargs["coupling"] = lambda x: M @ x
            kwargs["coupling_jac"] = lambda x: M
    return RunningCost(**kwargs)


def build_problem(s: Scenario) -> OCProblem:
    model = build_model(s.model)
    n, m = model.n, model.m
    if len(s.x0) != n:
        raise ScenarioError(f"boundary.x0: expected {n} entries, got {len(s.x0)}")
    if s.goal.kind == "point":
        if len(s.goal.x_f) != n:
            raise ScenarioError(f"boundary.goal.x_f: expected {n} entries")
        goal = PointGoal(np.asarray(s.goal.x_f, dtype=float))
    elif s.goal.kind == "ball":
        if len(s.goal.center) != n:
            raise ScenarioError(f"boundary.goal.center: expected {n} entries")
        goal = BallGoal(center=np.asarray(s.goal.center, dtype=float),
                        radius=s.goal.radius)
    else:
        A = np.asarray(s.goal.A, dtype=float)
        if A.shape[1] != n:
            raise ScenarioError(f"boundary.goal.A: expected {n} columns")
        goal = AffineGoal(A=A, b=np.asarray(s.goal.b, dtype=float))
    if s.control_set.kind == "box":
        if len(s.control_set.lower) != m:
            raise ScenarioError(f"control_set: expected {m} entries")
        control = BoxControlSet(lower=np.asarray(s.control_set.lower, dtype=float),
                                upper=np.asarray(s.control_set.upper, dtype=float))
    else:
        if len(s.control_set.center) != m:
            raise ScenarioError(f"control_set: expected {m} entries")
        control = BallControlSet(center=np.asarray(s.control_set.center, dtype=float),
                                 radius=s.control_set.radius)
    if s.horizon.free_time:
        time = FreeFinalTime(t_min=s.horizon.t_min, t_max=s.horizon.t_max)
    else:
        time = FixedFinalTime(t_f=s.horizon.t_f)
    return OCProblem(model=model, cost=_build_cost(s.cost, n), control_set=control,
                     goal=goal, x0=np.asarray(s.x0, dtype=float), time=time,
                     state_penalty=build_workspace(s, n))


def _check_dimensions(s: Scenario):
    # fail fast on dimension mismatches with schema-style messages
    try:
        build_problem(s)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def build_scp_params(s: Scenario) -> SCPParams:
    kwargs = dict(s.scp)
    solver = kwargs.pop("solver", None)
    kwargs["num_nodes"] = s.horizon.N
    if solver is not None:
        kwargs["solver"] = SolverConfig(**solver)
    return SCPParams(**kwargs)


def build_shooting_config(s: Scenario) -> Optional[ShootingConfig]:
    if s.shooting is None:
        return None
    kwargs = dict(s.shooting)
    if not kwargs.pop("enabled", True):
        return None
    return ShootingConfig(**kwargs)


def initial_trajectory(s: Scenario, problem: OCProblem):
    t_f = s.horizon.t_f if not s.horizon.free_time \
        else 0.5 * (s.horizon.t_min + s.horizon.t_max)
    return straightline_init(problem, s.horizon.N, t_f)
