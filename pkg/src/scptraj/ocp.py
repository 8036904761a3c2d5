"""Core problem types for drift control-affine optimal control.

Dynamics have the form xdot = f0(x) + sum_i u^i fi(x).  The running cost is
u'Ru + u.coupling(x) + g1(x) + omega*g2(x), where g2 is a soft state-constraint
penalty owned by the workspace and omega is managed by the outer solver loop.
Trajectories live on a uniform time grid with zero-order-hold controls: the
control stored at node i is held over interval [t_i, t_{i+1}); the control at
the last node never enters a dynamics interval and only appears in the cost
quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .environment import Workspace, g2_penalty

Array = np.ndarray


def _as_float_array(x, name: str) -> Array:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# dynamics

@dataclass(frozen=True)
class ControlAffineModel:
    """Drift control-affine dynamics with analytic Jacobians.

    fields[i] maps x to the i-th control vector field; field_jacs[i] to its
    state Jacobian.  field_jacs may be None when every control field is
    constant in x (the common case here), which is treated as all zeros.
    Builders whose fields are constant should also pass the stacked matrix
    as constant_control_matrix; control_matrix then skips re-stacking the
    columns on every dynamics evaluation, which matters inside the shooting
    integrator.  mrp_slice optionally marks a modified-Rodrigues attitude
    block so initial-guess interpolation can use the geodesic instead of a
    straight line.
    """

    name: str
    n: int
    m: int
    drift: Callable[[Array], Array]
    drift_jac: Callable[[Array], Array]
    fields: tuple
    field_jacs: Optional[tuple] = None
    mrp_slice: Optional[slice] = None
    constant_control_matrix: Optional[Array] = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("state and control dimensions must be positive")
        if len(self.fields) != self.m:
            raise ValueError("need exactly one control field per input")
        if self.field_jacs is not None and len(self.field_jacs) != self.m:
            raise ValueError("need one field Jacobian per input")
        if self.constant_control_matrix is not None:
            B = _as_float_array(self.constant_control_matrix, "control matrix")
            if B.shape != (self.n, self.m):
                raise ValueError("constant control matrix must be n x m")
            object.__setattr__(self, "constant_control_matrix", B)

    def control_field(self, i: int, x: Array) -> Array:
        return np.asarray(self.fields[i](x), dtype=float)

    def control_matrix(self, x: Array) -> Array:
        """Matrix B(x) with the control fields as columns."""
        if self.constant_control_matrix is not None:
            return self.constant_control_matrix
        return np.column_stack([np.asarray(f(x), dtype=float) for f in self.fields])


def eval_dynamics(model: ControlAffineModel, x: Array, u: Array) -> Array:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.n,):
        raise ValueError(f"state shape {x.shape} does not match n={model.n}")
    if u.shape != (model.m,):
        raise ValueError(f"control shape {u.shape} does not match m={model.m}")
    return np.asarray(model.drift(x), dtype=float) + model.control_matrix(x) @ u


def eval_dynamics_jacobians(model: ControlAffineModel, x: Array, u: Array):
    """State and control Jacobians (A, B) of f at (x, u).

    A = df0/dx + sum_i u^i dfi/dx, B has the control fields as columns.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.n,):
        raise ValueError(f"state shape {x.shape} does not match n={model.n}")
    if u.shape != (model.m,):
        raise ValueError(f"control shape {u.shape} does not match m={model.m}")
    A = np.asarray(model.drift_jac(x), dtype=float).copy()
    if model.field_jacs is not None:
        for i in range(model.m):
            if u[i] != 0.0:
                A = A + u[i] * np.asarray(model.field_jacs[i](x), dtype=float)
    B = model.control_matrix(x)
    return A, B


# ---------------------------------------------------------------------------
# running cost

@dataclass(frozen=True)
class RunningCost:
    """Running cost u'Ru + u.coupling(x) + g1(x), with hooks for gradients.

    R must be symmetric positive definite.  coupling and g1 default to zero;
    when supplied their Jacobian/gradient callables are required so the
    convexification can linearize them.
    """

    R: Array
    coupling: Optional[Callable[[Array], Array]] = None
    coupling_jac: Optional[Callable[[Array], Array]] = None
    g1: Optional[Callable[[Array], float]] = None
    g1_grad: Optional[Callable[[Array], Array]] = None

    def __post_init__(self):
        R = _as_float_array(self.R, "R")
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("R must be square")
        if not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "R", R)
        if (self.coupling is None) != (self.coupling_jac is None):
            raise ValueError("coupling and coupling_jac must be given together")
        if (self.g1 is None) != (self.g1_grad is None):
            raise ValueError("g1 and g1_grad must be given together")

    @property
    def m(self) -> int:
        return self.R.shape[0]

    def coupling_value(self, x: Array) -> Array:
        if self.coupling is None:
            return np.zeros(self.m)
        return np.asarray(self.coupling(x), dtype=float)

    def coupling_jacobian(self, x: Array, n: int) -> Array:
        if self.coupling_jac is None:
            return np.zeros((self.m, n))
        return np.asarray(self.coupling_jac(x), dtype=float)

    def g1_value(self, x: Array) -> float:
        return 0.0 if self.g1 is None else float(self.g1(x))

    def g1_gradient(self, x: Array, n: int) -> Array:
        if self.g1_grad is None:
            return np.zeros(n)
        return np.asarray(self.g1_grad(x), dtype=float)


def eval_running_cost(cost: RunningCost, x: Array, u: Array,
                      g2_value: float, omega: float) -> float:
    if omega < 1.0:
        raise ValueError("penalty weight omega must be >= 1")
    u = np.asarray(u, dtype=float)
    return float(u @ cost.R @ u + u @ cost.coupling_value(x)
                 + cost.g1_value(x) + omega * g2_value)


# ---------------------------------------------------------------------------
# control and goal sets

@dataclass(frozen=True)
class BoxControlSet:
    lower: Array
    upper: Array

    def __post_init__(self):
        lo = _as_float_array(self.lower, "lower")
        hi = _as_float_array(self.upper, "upper")
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(lo >= hi):
            raise ValueError("box bounds must satisfy lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def m(self) -> int:
        return self.lower.size

    def contains(self, u: Array, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def project(self, u: Array) -> Array:
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class BallControlSet:
    center: Array
    radius: float

    def __post_init__(self):
        c = _as_float_array(self.center, "center")
        if c.ndim != 1:
            raise ValueError("ball center must be a 1-d array")
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", c)

    @property
    def m(self) -> int:
        return self.center.size

    def contains(self, u: Array, tol: float = 1e-9) -> bool:
        return bool(np.linalg.norm(np.asarray(u, dtype=float) - self.center)
                    <= self.radius + tol)

    def project(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        d = u - self.center
        nd = np.linalg.norm(d)
        if nd <= self.radius:
            return u
        return self.center + d * (self.radius / nd)


ControlSet = Union[BoxControlSet, BallControlSet]


@dataclass(frozen=True)
class PointGoal:
    x_f: Array

    def __post_init__(self):
        object.__setattr__(self, "x_f", _as_float_array(self.x_f, "x_f"))

    def distance(self, x: Array) -> float:
        return float(np.linalg.norm(np.asarray(x, dtype=float) - self.x_f))

    def representative(self) -> Array:
        return self.x_f.copy()


@dataclass(frozen=True)
class BallGoal:
    center: Array
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_float_array(self.center, "center"))
        if self.radius <= 0:
            raise ValueError("goal ball radius must be positive")

    def distance(self, x: Array) -> float:
        return float(max(0.0, np.linalg.norm(np.asarray(x, dtype=float) - self.center)
                         - self.radius))

    def representative(self) -> Array:
        return self.center.copy()


@dataclass(frozen=True)
class AffineGoal:
    A: Array
    b: Array

    def __post_init__(self):
        A = np.atleast_2d(_as_float_array(self.A, "A"))
        b = np.atleast_1d(_as_float_array(self.b, "b"))
        if A.shape[0] != b.size:
            raise ValueError("A and b row counts differ")
        if np.linalg.matrix_rank(A) < A.shape[0]:
            raise ValueError("affine goal rows must be linearly independent")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def distance(self, x: Array) -> float:
        # distance to the affine subspace: norm of the minimum-norm correction
        resid = self.A @ np.asarray(x, dtype=float) - self.b
        corr = np.linalg.lstsq(self.A, resid, rcond=None)[0]
        return float(np.linalg.norm(corr))

    def representative(self) -> Array:
        sol, _, rank, _ = np.linalg.lstsq(self.A, self.b, rcond=None)
        if rank < self.A.shape[0]:
            raise ValueError("affine goal has no solution")
        return sol


GoalSet = Union[PointGoal, BallGoal, AffineGoal]


def goal_distance(goal: GoalSet, x: Array) -> float:
    return goal.distance(x)


# ---------------------------------------------------------------------------
# horizon

@dataclass(frozen=True)
class FixedFinalTime:
    t_f: float

    def __post_init__(self):
        if self.t_f <= 0:
            raise ValueError("final time must be positive")


@dataclass(frozen=True)
class FreeFinalTime:
    t_min: float
    t_max: float

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")


TimeMode = Union[FixedFinalTime, FreeFinalTime]


# ---------------------------------------------------------------------------
# problem and trajectory

@dataclass(frozen=True)
class OCProblem:
    model: ControlAffineModel
    cost: RunningCost
    control_set: ControlSet
    goal: GoalSet
    x0: Array
    time: TimeMode
    state_penalty: Optional[Workspace] = None

    def __post_init__(self):
        x0 = _as_float_array(self.x0, "x0")
        if x0.shape != (self.model.n,):
            raise ValueError("x0 dimension does not match the model")
        if self.cost.m != self.model.m:
            raise ValueError("cost control dimension does not match the model")
        if self.control_set.m != self.model.m:
            raise ValueError("control set dimension does not match the model")
        if isinstance(self.goal, PointGoal) and self.goal.x_f.shape != (self.model.n,):
            raise ValueError("goal point dimension does not match the model")
        if isinstance(self.goal, BallGoal) and self.goal.center.shape != (self.model.n,):
            raise ValueError("goal ball dimension does not match the model")
        if isinstance(self.goal, AffineGoal) and self.goal.A.shape[1] != self.model.n:
            raise ValueError("goal map column count does not match the model")
        if goal_distance(self.goal, x0) <= 0.0:
            raise ValueError("initial state already lies in the goal set")
        object.__setattr__(self, "x0", x0)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def m(self) -> int:
        return self.model.m

    def g2_value(self, x: Array) -> float:
        if self.state_penalty is None:
            return 0.0
        return g2_penalty(self.state_penalty, x)[0]

    def g2_value_and_grad(self, x: Array):
        if self.state_penalty is None:
            return 0.0, np.zeros(self.n)
        return g2_penalty(self.state_penalty, x)


@dataclass(frozen=True)
class DiscreteTrajectory:
    """States and controls on a uniform grid over [0, t_f]; immutable."""

    X: Array
    U: Array
    t_f: float

    def __post_init__(self):
        X = _as_float_array(self.X, "X").copy()
        U = _as_float_array(self.U, "U").copy()
        if X.ndim != 2 or U.ndim != 2:
            raise ValueError("X and U must be 2-d arrays")
        if X.shape[0] != U.shape[0]:
            raise ValueError("X and U must have one row per node")
        if X.shape[0] < 2:
            raise ValueError("need at least two grid nodes")
        if self.t_f <= 0:
            raise ValueError("final time must be positive")
        X.setflags(write=False)
        U.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "U", U)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def times(self) -> Array:
        return np.linspace(0.0, self.t_f, self.N)

    def state_sup_distance(self, other: "DiscreteTrajectory") -> float:
        if self.N != other.N:
            raise ValueError("grid sizes differ")
        return float(np.max(np.linalg.norm(self.X - other.X, axis=1)))


def trapezoid_weights(N: int, t_f: float) -> Array:
    dt = t_f / (N - 1)
    w = np.full(N, dt)
    w[0] = w[-1] = dt / 2
    return w


def trajectory_cost(problem: OCProblem, traj: DiscreteTrajectory,
                    omega: float) -> float:
    """Trapezoidal quadrature of the running cost along the trajectory."""
    w = trapezoid_weights(traj.N, traj.t_f)
    total = 0.0
    for i in range(traj.N):
        g2 = problem.g2_value(traj.X[i])
        total += w[i] * eval_running_cost(problem.cost, traj.X[i], traj.U[i], g2, omega)
    return float(total)


def simulate_zoh(model: ControlAffineModel, x0: Array, U: Array, t_f: float,
                 substeps: int = 10) -> Array:
    """RK4 rollout of the nonlinear dynamics under zero-order-hold controls.

    Returns the states at the grid nodes implied by U's row count.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    N = U.shape[0]
    h = t_f / (N - 1) / substeps
    X = np.zeros((N, model.n))
    x = np.asarray(x0, dtype=float).copy()
    X[0] = x
    for i in range(N - 1):
        u = U[i]
        for _ in range(substeps):
            k1 = eval_dynamics(model, x, u)
            k2 = eval_dynamics(model, x + 0.5 * h * k1, u)
            k3 = eval_dynamics(model, x + 0.5 * h * k2, u)
            k4 = eval_dynamics(model, x + h * k3, u)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        X[i + 1] = x
    return X
