"""Transcription of the penalized problem into the canonical convex form.

The previous accepted trajectory supplies the linearization point.  Dynamics
enter through trapezoidal defect equalities on the affine maps

    l_j(x, u) = f(x_prev_j, u) + A_j (x - x_prev_j),

with zero-order-hold pairing: interval i uses the control u_i at both of its
endpoints.  Defects carry a 1-norm-penalized virtual-control slack so the
subproblem can never go infeasible through the dynamics rows.  The trust
region enters as an exact penalty: per-node epigraph variables
eta_i >= ||x_i - x_prev_i||^2 - delta, eta_i >= 0, weighted by omega and the
quadrature weight in the objective.  The squared-norm epigraph is encoded
with the rotated-cone identity through auxiliary equality-pinned variables so
the program fits the canonical second-order block form.

The state-dependent cost terms (g1 + omega*g2 and the control coupling) are
linearized about the previous trajectory; the quadratic control cost is kept
exact.  The coupling term is expanded jointly in (x, u) about the previous
point, which keeps the quadratic block positive semidefinite; for problems
without coupling (every shipped scenario) this is the same formula as
linearizing in x alone.

With a free final time the grid is normalized to [0, 1], the dilation sigma
(equal to the final time) multiplies the dynamics and the running cost, and
both products are expanded to first order about the previous (trajectory,
sigma); sigma moves inside a hard box |sigma - sigma_prev| <= sigma_trust.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .backend import ConvexProgram, SocBlock
from .ocp import (BallControlSet, BallGoal, BoxControlSet, AffineGoal,
                  DiscreteTrajectory, FixedFinalTime, FreeFinalTime,
                  OCProblem, PointGoal, eval_dynamics,
                  eval_dynamics_jacobians, eval_running_cost,
                  trapezoid_weights)

Array = np.ndarray


@dataclass(frozen=True)
class LocpSpec:
    """Everything needed to build one convex subproblem."""

    problem: OCProblem
    prev: DiscreteTrajectory
    delta: float            # trust region bound on the squared node distance
    omega: float            # penalty weight
    slack_weight: float     # 1-norm weight on the dynamics slack
    sigma_trust: Optional[float] = None  # required for free final time
    cone_support: bool = True

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("trust region radius must be positive")
        if self.omega < 1.0:
            raise ValueError("penalty weight must be >= 1")
        if self.slack_weight <= self.omega:
            raise ValueError("slack weight must dominate the penalty weight")
        time = self.problem.time
        if isinstance(time, FreeFinalTime):
            if self.sigma_trust is None or self.sigma_trust <= 0:
                raise ValueError("free final time needs a positive sigma_trust")
            if not (time.t_min <= self.prev.t_f <= time.t_max):
                raise ValueError("previous final time outside the horizon bounds")
        else:
            if abs(self.prev.t_f - time.t_f) > 1e-12 * max(1.0, time.t_f):
                raise ValueError("trajectory final time disagrees with the problem")

    @property
    def free_time(self) -> bool:
        return isinstance(self.problem.time, FreeFinalTime)


@dataclass(frozen=True)
class DecisionLayout:
    """Index map from (node, block) to decision-vector ranges."""

    N: int
    n: int
    m: int
    free_time: bool
    control_ball: bool
    goal_ball_cone: bool

    def x(self, i: int) -> slice:
        return slice(i * self.n, (i + 1) * self.n)

    def u(self, i: int) -> slice:
        base = self.N * self.n
        return slice(base + i * self.m, base + (i + 1) * self.m)

    def s(self, i: int) -> slice:
        base = self.N * (self.n + self.m)
        return slice(base + i * self.n, base + (i + 1) * self.n)

    def s_abs(self, i: int) -> slice:
        base = self.N * (self.n + self.m) + (self.N - 1) * self.n
        return slice(base + i * self.n, base + (i + 1) * self.n)

    def eta(self, i: int) -> int:
        return self.N * (self.n + self.m) + 2 * (self.N - 1) * self.n + i

    def aux_a(self, i: int) -> slice:
        base = self.N * (self.n + self.m) + 2 * (self.N - 1) * self.n + self.N
        return slice(base + i * self.n, base + (i + 1) * self.n)

    def aux_b1(self, i: int) -> int:
        base = self.N * (self.n + self.m) + 2 * (self.N - 1) * self.n \
            + self.N + self.N * self.n
        return base + i

    def aux_b2(self, i: int) -> int:
        return self.aux_b1(i) + self.N

    @property
    def _after_aux(self) -> int:
        return self.aux_b2(self.N - 1) + 1

    @property
    def sigma(self) -> Optional[int]:
        return self._after_aux if self.free_time else None

    @property
    def control_radius(self) -> Optional[int]:
        if not self.control_ball:
            return None
        return self._after_aux + (1 if self.free_time else 0)

    @property
    def goal_radius(self) -> Optional[int]:
        if not self.goal_ball_cone:
            return None
        return self._after_aux + (1 if self.free_time else 0) \
            + (1 if self.control_ball else 0)

    @property
    def num_vars(self) -> int:
        return self._after_aux + (1 if self.free_time else 0) \
            + (1 if self.control_ball else 0) + (1 if self.goal_ball_cone else 0)


def linearize_dynamics_at(model, prev: DiscreteTrajectory, i: int):
    """Affine map l_i(x, u) = A x + B u + c tangent to f at node i of prev.

    Exact in u for any x equal to the node state: l_i(x_prev_i, u) = f(x_prev_i, u).
    """
    if not 0 <= i <= prev.N - 1:
        raise IndexError("node index out of range")
    x_i, u_i = prev.X[i], prev.U[i]
    A, B = eval_dynamics_jacobians(model, x_i, u_i)
    c = np.asarray(model.drift(x_i), dtype=float) - A @ x_i
    return A, B, c


def _cost_terms(problem: OCProblem, prev: DiscreteTrajectory, omega: float):
    """Per-node pieces of the convexified running cost.

    Returns (u_lin, x_lin, const, c_nl) arrays where the node integrand model
    is u'Ru + u_lin.u + x_lin.x + const and c_nl is the nonlinear integrand
    at the previous point (used by the free-time expansion).
    """
    N, n = prev.N, problem.n
    cost = problem.cost
    u_lin = np.zeros((N, problem.m))
    x_lin = np.zeros((N, n))
    const = np.zeros(N)
    c_nl = np.zeros(N)
    for i in range(N):
        xk, uk = prev.X[i], prev.U[i]
        coup = cost.coupling_value(xk)
        g2_val, g2_grad = problem.g2_value_and_grad(xk)
        g_val = cost.g1_value(xk) + omega * g2_val
        g_grad = cost.g1_gradient(xk, n) + omega * g2_grad
        cross = cost.coupling_jacobian(xk, n).T @ uk
        u_lin[i] = coup
        x_lin[i] = g_grad + cross
        const[i] = g_val - g_grad @ xk - cross @ xk
        c_nl[i] = eval_running_cost(cost, xk, uk, g2_val, omega)
    return u_lin, x_lin, const, c_nl


def _node_scales(spec: LocpSpec):
    """Quadrature scale per node and the normalized-grid weights."""
    N = spec.prev.N
    if spec.free_time:
        base = trapezoid_weights(N, 1.0)
        return spec.prev.t_f * base, base
    return trapezoid_weights(N, spec.prev.t_f), None


def build_locp(spec: LocpSpec) -> Tuple[ConvexProgram, DecisionLayout]:
    """Assemble the convex subproblem around the previous trajectory.

    The objective is tangent to the nonlinear discrete cost at the previous
    point: evaluated there (zero slack, zero hinge) the two agree exactly.
    """
    problem, prev = spec.problem, spec.prev
    model = problem.model
    N, n, m = prev.N, problem.n, problem.m

    control_ball = isinstance(problem.control_set, BallControlSet)
    if control_ball and not spec.cone_support:
        raise ValueError("ball control sets need cone support")
    goal_ball_cone = isinstance(problem.goal, BallGoal) and spec.cone_support
    layout = DecisionLayout(N=N, n=n, m=m, free_time=spec.free_time,
                            control_ball=control_ball,
                            goal_ball_cone=goal_ball_cone)
    nz = layout.num_vars

    lin = [linearize_dynamics_at(model, prev, j) for j in range(N)]
    scales, base_w = _node_scales(spec)
    u_lin, x_lin, const, c_nl = _cost_terms(problem, prev, spec.omega)

    # ----- objective -----
    p_rows, p_cols, p_vals = [], [], []
    q = np.zeros(nz)
    r = 0.0
    R2 = 2.0 * problem.cost.R
    for i in range(N):
        usl = layout.u(i)
        for a in range(m):
            for b in range(m):
                if R2[a, b] != 0.0:
                    p_rows.append(usl.start + a)
                    p_cols.append(usl.start + b)
                    p_vals.append(scales[i] * R2[a, b])
        q[usl] += scales[i] * u_lin[i]
        q[layout.x(i)] += scales[i] * x_lin[i]
        r += scales[i] * const[i]
        q[layout.eta(i)] += scales[i] * spec.omega
        if i < N - 1:
            q[layout.s_abs(i)] += spec.slack_weight
    if spec.free_time:
        # sigma-linear expansion of sigma * integrand about the previous point
        total_nl = float(base_w @ c_nl)
        q[layout.sigma] += total_nl
        r -= prev.t_f * total_nl

    # ----- equality rows -----
    rows, cols, vals, b_eq = [], [], [], []
    tags = {}
    row_at = 0

    def add_entries(row, sl, mat):
        mat = np.atleast_2d(mat)
        idx = range(sl.start, sl.stop) if isinstance(sl, slice) else [sl]
        for rr in range(mat.shape[0]):
            for cc, col in enumerate(idx):
                v = mat[rr, cc]
                if v != 0.0:
                    rows.append(row + rr)
                    cols.append(col)
                    vals.append(v)

    def close_tag(tag, start):
        if row_at > start:
            tags[tag] = slice(start, row_at)

    # initial state
    start = row_at
    add_entries(row_at, layout.x(0), np.eye(n))
    b_eq.extend(problem.x0)
    row_at += n
    tags["initial-state"] = slice(start, row_at)

    # defects
    start = row_at
    if spec.free_time:
        ds = 1.0 / (N - 1)
        sig_k = prev.t_f
        fnl = [eval_dynamics(model, prev.X[j], prev.U[j]) for j in range(N)]
        for i in range(N - 1):
            A_i, B_i, c_i = lin[i]
            A_n, B_n, c_n = lin[i + 1]
            h = ds / 2.0
            add_entries(row_at, layout.x(i + 1), np.eye(n) - h * sig_k * A_n)
            add_entries(row_at, layout.x(i), -np.eye(n) - h * sig_k * A_i)
            add_entries(row_at, layout.u(i), -h * sig_k * (B_i + B_n))
            add_entries(row_at, layout.sigma,
                        (-h * (fnl[i] + fnl[i + 1])).reshape(n, 1))
            add_entries(row_at, layout.s(i), -np.eye(n))
            b_eq.extend(h * sig_k * (c_i + c_n) - h * sig_k * (fnl[i] + fnl[i + 1]))
            row_at += n
    else:
        dt = prev.t_f / (N - 1)
        h = dt / 2.0
        for i in range(N - 1):
            A_i, B_i, c_i = lin[i]
            A_n, B_n, c_n = lin[i + 1]
            add_entries(row_at, layout.x(i + 1), np.eye(n) - h * A_n)
            add_entries(row_at, layout.x(i), -np.eye(n) - h * A_i)
            add_entries(row_at, layout.u(i), -h * (B_i + B_n))
            add_entries(row_at, layout.s(i), -np.eye(n))
            b_eq.extend(h * (c_i + c_n))
            row_at += n
    tags["defect"] = slice(start, row_at)

    # goal
    start = row_at
    goal = problem.goal
    if isinstance(goal, PointGoal):
        add_entries(row_at, layout.x(N - 1), np.eye(n))
        b_eq.extend(goal.x_f)
        row_at += n
    elif isinstance(goal, AffineGoal):
        add_entries(row_at, layout.x(N - 1), goal.A)
        b_eq.extend(goal.b)
        row_at += goal.b.size
    close_tag("goal", start)

    # trust-region hinge auxiliaries
    start = row_at
    for i in range(N):
        add_entries(row_at, layout.aux_a(i), np.eye(n))
        add_entries(row_at, layout.x(i), -2.0 * np.eye(n))
        b_eq.extend(-2.0 * prev.X[i])
        row_at += n
        add_entries(row_at, layout.aux_b1(i), np.array([[1.0]]))
        add_entries(row_at, layout.eta(i), np.array([[-1.0]]))
        b_eq.append(spec.delta - 1.0)
        row_at += 1
        add_entries(row_at, layout.aux_b2(i), np.array([[1.0]]))
        add_entries(row_at, layout.eta(i), np.array([[-1.0]]))
        b_eq.append(spec.delta + 1.0)
        row_at += 1
    tags["trust-aux"] = slice(start, row_at)

    # pinned radius variables for ball sets
    start = row_at
    if control_ball:
        add_entries(row_at, layout.control_radius, np.array([[1.0]]))
        b_eq.append(problem.control_set.radius)
        row_at += 1
    if goal_ball_cone:
        add_entries(row_at, layout.goal_radius, np.array([[1.0]]))
        b_eq.append(goal.radius)
        row_at += 1
    close_tag("set-aux", start)

    A_eq = sp.csc_matrix((vals, (rows, cols)), shape=(row_at, nz))
    b_eq = np.asarray(b_eq, dtype=float)

    # ----- inequality rows -----
    in_rows, in_cols, in_vals, b_in = [], [], [], []
    in_at = 0

    def add_in(sl, mat, rhs):
        nonlocal in_at
        mat = np.atleast_2d(mat)
        idx = range(sl.start, sl.stop) if isinstance(sl, slice) else [sl]
        for rr in range(mat.shape[0]):
            for cc, col in enumerate(idx):
                v = mat[rr, cc]
                if v != 0.0:
                    in_rows.append(in_at + rr)
                    in_cols.append(col)
                    in_vals.append(v)
        rhs = np.atleast_1d(rhs)
        b_in.extend(rhs)
        in_at += rhs.size

    for i in range(N):
        add_in(layout.eta(i), np.array([[-1.0]]), 0.0)   # eta >= 0
    for i in range(N - 1):
        # |s| epigraph: s - s_abs <= 0 and -s - s_abs <= 0
        for sgn in (1.0, -1.0):
            row0 = in_at
            mat = sgn * np.eye(n)
            add_in(layout.s(i), mat, np.zeros(n))
            # subtract s_abs on the same rows
            for k in range(n):
                in_rows.append(row0 + k)
                in_cols.append(layout.s_abs(i).start + k)
                in_vals.append(-1.0)

    if isinstance(problem.control_set, BoxControlSet):
        for i in range(N):
            add_in(layout.u(i), np.eye(m), problem.control_set.upper)
            add_in(layout.u(i), -np.eye(m), -problem.control_set.lower)

    if spec.free_time:
        time = problem.time
        add_in(layout.sigma, np.array([[1.0]]), time.t_max)
        add_in(layout.sigma, np.array([[-1.0]]), -time.t_min)
        add_in(layout.sigma, np.array([[1.0]]), prev.t_f + spec.sigma_trust)
        add_in(layout.sigma, np.array([[-1.0]]), -(prev.t_f - spec.sigma_trust))

    if isinstance(goal, BallGoal) and not spec.cone_support:
        # supporting halfspace of the ball at the previous terminal state
        d = prev.X[N - 1] - goal.center
        rhs = 2.0 * d @ prev.X[N - 1] - d @ d + goal.radius ** 2
        add_in(layout.x(N - 1), (2.0 * d).reshape(1, n), rhs)

    A_in = sp.csc_matrix((in_vals, (in_rows, in_cols)), shape=(in_at, nz)) \
        if in_at else None
    b_in_arr = np.asarray(b_in, dtype=float) if in_at else None

    # ----- second-order blocks -----
    soc = []
    for i in range(N):
        sel = np.concatenate([np.arange(layout.aux_a(i).start, layout.aux_a(i).stop),
                              [layout.aux_b1(i)]])
        soc.append(SocBlock(sel=sel, offset=np.zeros(n + 1), t=layout.aux_b2(i)))
    if control_ball:
        for i in range(N):
            sel = np.arange(layout.u(i).start, layout.u(i).stop)
            soc.append(SocBlock(sel=sel, offset=-problem.control_set.center,
                                t=layout.control_radius))
    if goal_ball_cone:
        sel = np.arange(layout.x(N - 1).start, layout.x(N - 1).stop)
        soc.append(SocBlock(sel=sel, offset=-goal.center, t=layout.goal_radius))

    P = sp.csc_matrix((p_vals, (p_rows, p_cols)), shape=(nz, nz))
    program = ConvexProgram(num_vars=nz, P=P, q=q, r=r,
                            A_eq=A_eq, b_eq=b_eq, eq_tags=tags,
                            A_in=A_in, b_in=b_in_arr, soc=tuple(soc))
    return program, layout


def trajectory_from_solution(z: Array, layout: DecisionLayout,
                             spec: LocpSpec) -> DiscreteTrajectory:
    N, n, m = layout.N, layout.n, layout.m
    X = z[:N * n].reshape(N, n).copy()
    U = z[N * n:N * (n + m)].reshape(N, m).copy()
    t_f = float(z[layout.sigma]) if spec.free_time else spec.prev.t_f
    return DiscreteTrajectory(X=X, U=U, t_f=t_f)


def embed_trajectory(spec: LocpSpec, layout: DecisionLayout,
                     traj: DiscreteTrajectory) -> Array:
    """Decision vector representing traj with zero slack and zero hinge.

    Auxiliary variables are set consistently with their defining equalities;
    the slack rows are intentionally violated when traj does not satisfy the
    linearized defects (the embedding is for objective evaluation, not
    feasibility).
    """
    z = np.zeros(layout.num_vars)
    N = layout.N
    for i in range(N):
        z[layout.x(i)] = traj.X[i]
        z[layout.u(i)] = traj.U[i]
        z[layout.aux_a(i)] = 2.0 * (traj.X[i] - spec.prev.X[i])
        z[layout.aux_b1(i)] = spec.delta - 1.0
        z[layout.aux_b2(i)] = spec.delta + 1.0
    if layout.sigma is not None:
        z[layout.sigma] = traj.t_f
    if layout.control_radius is not None:
        z[layout.control_radius] = spec.problem.control_set.radius
    if layout.goal_radius is not None:
        z[layout.goal_radius] = spec.problem.goal.radius
    return z


def convexified_cost(problem: OCProblem, prev: DiscreteTrajectory,
                     omega: float, traj: DiscreteTrajectory) -> float:
    """Convex cost model built at prev, evaluated at traj.

    Matches the subproblem objective without the slack penalty and without
    the trust hinge (the hinge vanishes inside the trust region, and the
    accuracy ratio is only formed there).
    """
    N = prev.N
    u_lin, x_lin, const, c_nl = _cost_terms(problem, prev, omega)
    R = problem.cost.R
    if isinstance(problem.time, FreeFinalTime):
        base = trapezoid_weights(N, 1.0)
        scales = prev.t_f * base
        extra = (traj.t_f - prev.t_f) * float(base @ c_nl)
    else:
        scales = trapezoid_weights(N, prev.t_f)
        extra = 0.0
    total = extra
    for i in range(N):
        u = traj.U[i]
        total += scales[i] * (u @ R @ u + u_lin[i] @ u + x_lin[i] @ traj.X[i]
                              + const[i])
    return float(total)


def convexified_dynamics_deviation(problem: OCProblem, prev: DiscreteTrajectory,
                                   traj: DiscreteTrajectory):
    """Quadrature of the nonlinear-vs-linearized dynamics gap at traj.

    Returns (mismatch, magnitude): the trapezoidal integrals of
    ||f - l_prev|| and ||l_prev|| along traj, using the 2-norm.  With a free
    final time the comparison is between the dilated fields on the unit grid.
    """
    model = problem.model
    N = prev.N
    lin = [linearize_dynamics_at(model, prev, j) for j in range(N)]
    if isinstance(problem.time, FreeFinalTime):
        w = trapezoid_weights(N, 1.0)
        sig_k, sig_new = prev.t_f, traj.t_f
    else:
        w = trapezoid_weights(N, traj.t_f)
        sig_k = sig_new = None
    mismatch = 0.0
    magnitude = 0.0
    for i in range(N):
        x, u = traj.X[i], traj.U[i]
        A, B, c = lin[i]
        f_lin = A @ x + B @ u + c
        f_nl = eval_dynamics(model, x, u)
        if sig_k is not None:
            fk = eval_dynamics(model, prev.X[i], prev.U[i])
            f_lin = sig_k * f_lin + (sig_new - sig_k) * fk
            f_nl = sig_new * f_nl
        mismatch += w[i] * float(np.linalg.norm(f_nl - f_lin))
        magnitude += w[i] * float(np.linalg.norm(f_lin))
    return mismatch, magnitude


def dynamics_discretization_error(model, traj: DiscreteTrajectory) -> float:
    """Scaled 1-norm defect of the nonlinear dynamics across the grid.

    sum_i ||(x_{i+1} - x_i) * N - f(x_i, u_i)||_1 over the N-1 intervals,
    with N the node count.  The N factor (rather than 1/dt) makes the metric
    comparable across horizon lengths on normalized-duration problems; it is
    kept verbatim for reporting.
    """
    N = traj.N
    total = 0.0
    for i in range(N - 1):
        f = eval_dynamics(model, traj.X[i], traj.U[i])
        total += float(np.sum(np.abs((traj.X[i + 1] - traj.X[i]) * N - f)))
    return total
