"""Indirect-method accelerator: costate integration plus Newton shooting.

The outer loop hands over the dual of the initial-state rows as a costate
guess.  From there the coupled state-adjoint system is integrated with the
control chosen pointwise to maximize the Hamiltonian over the control set,
and a damped Newton iteration drives the terminal boundary residual to zero
by adjusting the initial costate.  Normal extremals only: the abnormal
multiplier is fixed to -1.

Scope: the Newton driver handles fixed final time with a point goal.
Residual formulas for ball and affine goals and for the free-time condition
are provided (transversality_residual) but no Newton driver targets them.
The penalty weight stays frozen during a shooting attempt so the extremal
belongs to the same penalized problem the current subproblem solved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .environment import g2_penalty
from .ocp import (AffineGoal, BallControlSet, BallGoal, BoxControlSet,
                  DiscreteTrajectory, FixedFinalTime, OCProblem, PointGoal,
                  eval_dynamics, eval_dynamics_jacobians)

logger = logging.getLogger(__name__)

Array = np.ndarray


@dataclass(frozen=True)
class AdjointState:
    """Costate vector with the (fixed) abnormal multiplier."""

    p: Array
    p0: float = -1.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if self.p0 > 0.0:
            raise ValueError("abnormal multiplier must be nonpositive")
        if self.p0 == 0.0 and not np.any(p):
            raise ValueError("costate and abnormal multiplier cannot both vanish")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class ShootingConfig:
    steps_per_interval: int = 10
    newton_tol: float = 1e-6
    max_newton_iters: int = 10
    fd_step: float = 1e-6
    damping: float = 0.5          # backtracking shrink factor
    max_backtracks: int = 8
    blowup_factor: float = 1e3    # state norm bound relative to problem scale
    feasibility_gate: Optional[float] = None  # only attempt when violation <= gate
    max_attempts: Optional[int] = None        # failed-attempt budget per solve

    def __post_init__(self):
        if self.steps_per_interval < 1:
            raise ValueError("need at least one integrator step per interval")
        if min(self.newton_tol, self.fd_step, self.blowup_factor) <= 0:
            raise ValueError("tolerances and bounds must be positive")
        if self.max_newton_iters < 1 or self.max_backtracks < 1:
            raise ValueError("iteration counts must be positive")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping factor must lie in (0, 1)")
        if self.max_attempts is not None and self.max_attempts < 1:
            raise ValueError("attempt budget must be positive when set")


@dataclass(frozen=True)
class ShootingResult:
    converged: bool
    p0_init: Array          # initial costate after Newton
    fine_times: Array
    fine_states: Array
    fine_costates: Array
    fine_controls: Array
    residual_norm: float
    newton_iters: int
    hamiltonian_drift: float  # max_t |H(t) - H(0)| along the fine grid
    hamiltonian_ref: float    # H(0), for relative drift
    diverged: bool = False

    def __post_init__(self):
        # the config tolerance is enforced by the Newton driver; this only
        # guards gross inconsistency
        if self.converged and not np.isfinite(self.residual_norm):
            raise ValueError("converged result with non-finite residual")


def hamiltonian(problem: OCProblem, x: Array, p: Array, p0: float,
                u: Array, omega: float) -> float:
    """p . f(x, u) + p0 * (u'Ru + u . coupling(x) + g1(x) + omega g2(x))."""
    cost = problem.cost
    run = float(u @ cost.R @ u)
    run += float(cost.coupling_value(x) @ u)
    run += cost.g1_value(x)
    run += omega * problem.g2_value(x)
    return float(p @ eval_dynamics(problem.model, x, u)) + p0 * run


def maximize_hamiltonian(problem: OCProblem, x: Array, p: Array,
                         p0: float = -1.0, omega: float = 1.0) -> Array:
    """Pointwise maximizer of the Hamiltonian over the control set.

    Only the control-dependent terms matter: maximize
    (B(x)'p + p0 coupling(x)) . u + p0 u'Ru.  Box set with diagonal R
    clamps the stationary point exactly; ball set with scalar R projects
    it radially; anything else goes through a small smooth solve.
    The omega argument is accepted for signature symmetry; state-only
    terms drop out of the argmax.
    """
    del omega
    if p0 >= 0.0:
        raise ValueError("needs a negative abnormal multiplier")
    model = problem.model
    cost = problem.cost
    B = model.control_matrix(x)
    lin = B.T @ p + p0 * cost.coupling_value(x)   # maximize lin.u + p0 u'Ru
    R = cost.R
    u_set = problem.control_set

    u_hat = np.linalg.solve(-2.0 * p0 * R, lin)
    if isinstance(u_set, BoxControlSet):
        diag = np.diag(np.diag(R))
        if np.allclose(R, diag, rtol=0.0, atol=1e-12):
            return np.clip(u_hat, u_set.lower, u_set.upper)
    elif isinstance(u_set, BallControlSet):
        if np.allclose(R, R[0, 0] * np.eye(cost.m), rtol=0.0, atol=1e-12):
            d = u_hat - u_set.center
            nd = np.linalg.norm(d)
            if nd <= u_set.radius:
                return u_hat
            return u_set.center + (u_set.radius / nd) * d

    return _maximize_general(lin, p0 * R, u_set, u_hat)


def _pointwise_maximizer(problem: OCProblem, p0: float = -1.0):
    """Per-problem closure computing the same argmax as maximize_hamiltonian.

    The integrator re-maximizes the Hamiltonian at every RK4 stage, so the
    control-set and cost-structure dispatch that maximize_hamiltonian does
    per call is hoisted out here.  Closed forms exist for a box set with
    diagonal R and a ball set with scalar R; anything else falls back to the
    general routine.
    """
    if p0 >= 0.0:
        raise ValueError("needs a negative abnormal multiplier")
    cost = problem.cost
    model = problem.model
    u_set = problem.control_set
    R = cost.R
    diag = np.diag(R).copy()
    B_const = model.constant_control_matrix
    BT = None if B_const is None else B_const.T.copy()
    coupling = cost.coupling

    def linear_term(x, p):
        B_t = model.control_matrix(x).T if BT is None else BT
        lin = B_t @ p
        if coupling is not None:
            lin = lin + p0 * np.asarray(coupling(x), dtype=float)
        return lin

    if isinstance(u_set, BoxControlSet) \
            and np.allclose(R, np.diag(diag), rtol=0.0, atol=1e-12):
        scale = 1.0 / (-2.0 * p0 * diag)
        lower, upper = u_set.lower, u_set.upper

        def maximize_box(x, p):
            return np.clip(linear_term(x, p) * scale, lower, upper)

        return maximize_box

    if isinstance(u_set, BallControlSet) \
            and np.allclose(R, R[0, 0] * np.eye(cost.m), rtol=0.0, atol=1e-12):
        scale = 1.0 / (-2.0 * p0 * R[0, 0])
        center, radius = u_set.center, u_set.radius

        def maximize_ball(x, p):
            u_hat = linear_term(x, p) * scale
            d = u_hat - center
            nd = np.linalg.norm(d)
            if nd <= radius:
                return u_hat
            return center + (radius / nd) * d

        return maximize_ball

    return lambda x, p: maximize_hamiltonian(problem, x, p, p0)


def _maximize_general(lin: Array, Q: Array, u_set, u_hat: Array) -> Array:
    """Fallback concave maximization of lin.u + u'Qu over the set (Q < 0)."""
    from scipy import optimize

    def neg(u):
        return -(lin @ u + u @ Q @ u)

    def neg_grad(u):
        return -(lin + 2.0 * Q @ u)

    if isinstance(u_set, BoxControlSet):
        res = optimize.minimize(neg, u_set.project(u_hat), jac=neg_grad,
                                method="L-BFGS-B",
                                bounds=list(zip(u_set.lower, u_set.upper)),
                                options={"ftol": 1e-14, "gtol": 1e-12})
        return res.x
    if isinstance(u_set, BallControlSet):
        con = {"type": "ineq",
               "fun": lambda u: u_set.radius ** 2 - np.sum((u - u_set.center) ** 2),
               "jac": lambda u: -2.0 * (u - u_set.center)}
        res = optimize.minimize(neg, u_set.project(u_hat), jac=neg_grad,
                                method="SLSQP", constraints=[con],
                                options={"ftol": 1e-14, "maxiter": 200})
        return res.x
    raise TypeError(f"unsupported control set {type(u_set).__name__}")


def adjoint_rhs(problem: OCProblem, x: Array, p: Array, p0: float,
                u: Array, omega: float) -> Array:
    """Costate velocity -dH/dx at (x, p, u)."""
    A, _ = eval_dynamics_jacobians(problem.model, x, u)
    cost = problem.cost
    n = problem.n
    state_grad: Optional[Array] = None
    if cost.coupling_jac is not None:
        state_grad = cost.coupling_jacobian(x, n).T @ u
    if cost.g1_grad is not None:
        grad = cost.g1_gradient(x, n)
        state_grad = grad if state_grad is None else state_grad + grad
    if problem.state_penalty is not None:
        pen = omega * g2_penalty(problem.state_penalty, x)[1]
        state_grad = pen if state_grad is None else state_grad + pen
    if state_grad is None:
        return -A.T @ p
    return -A.T @ p - p0 * state_grad


def _check_scope(problem: OCProblem):
    if not isinstance(problem.time, FixedFinalTime):
        raise NotImplementedError("shooting handles fixed final time only")
    if not isinstance(problem.goal, PointGoal):
        raise NotImplementedError("shooting handles point goals only")


def shoot(problem: OCProblem, p0_init: Array, omega: float,
          config: ShootingConfig, *, num_nodes: int):
    """Integrate the state-adjoint system from (x0, p0_init) over [0, t_f].

    Fixed-step RK4 on the coupled system, with the control re-maximized at
    every integrator stage.  Returns (terminal_state, residual, fine) where
    fine = (times, states, costates, controls) on the integrator grid and
    residual = x(t_f) - x_f.  On state blow-up the remaining grid is frozen
    at the last value and the residual is non-finite.
    """
    _check_scope(problem)
    n = problem.n
    p0_init = np.asarray(p0_init, dtype=float)
    if p0_init.shape != (n,):
        raise ValueError("initial costate dimension mismatch")
    t_f = problem.time.t_f
    steps = (num_nodes - 1) * config.steps_per_interval
    h = t_f / steps
    scale = max(1.0, np.abs(problem.x0).max(),
                np.abs(problem.goal.representative()).max())
    bound = config.blowup_factor * scale

    maximize = _pointwise_maximizer(problem)

    def rhs(y):
        x, p = y[:n], y[n:]
        u = maximize(x, p)
        return np.concatenate([eval_dynamics(problem.model, x, u),
                               adjoint_rhs(problem, x, p, -1.0, u, omega)]), u

    times = np.linspace(0.0, t_f, steps + 1)
    states = np.empty((steps + 1, n))
    costates = np.empty((steps + 1, n))
    controls = np.empty((steps + 1, problem.m))
    y = np.concatenate([problem.x0, p0_init])
    diverged = False
    for i in range(steps + 1):
        states[i], costates[i] = y[:n], y[n:]
        k1, u_node = rhs(y)
        controls[i] = u_node
        if i == steps:
            break
        if not np.all(np.isfinite(y)) or np.abs(y[:n]).max() > bound:
            diverged = True
            states[i + 1:] = y[:n]
            costates[i + 1:] = y[n:]
            controls[i + 1:] = u_node
            break
        k2, _ = rhs(y + 0.5 * h * k1)
        k3, _ = rhs(y + 0.5 * h * k2)
        k4, _ = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    terminal = states[-1]
    if diverged or not np.all(np.isfinite(terminal)):
        residual = np.full(n, np.inf)
        diverged = True
    else:
        residual = terminal - problem.goal.x_f
    fine = (times, states, costates, controls)
    return terminal, residual, fine, diverged


def _drift(problem: OCProblem, fine, omega: float) -> Tuple[float, float]:
    times, states, costates, controls = fine
    h0 = hamiltonian(problem, states[0], costates[0], -1.0, controls[0], omega)
    drift = 0.0
    for i in range(1, len(times)):
        hi = hamiltonian(problem, states[i], costates[i], -1.0, controls[i], omega)
        drift = max(drift, abs(hi - h0))
    return drift, h0


def newton_shoot(problem: OCProblem, warm_start: Array, omega: float,
                 config: ShootingConfig, *, num_nodes: int) -> ShootingResult:
    """Damped Newton on the terminal residual, starting from warm_start.

    The Jacobian comes from forward differences (n extra shoots per
    iteration); each step is backtracked until the residual norm decreases.
    Failure (singular Jacobian, no decrease, divergence) is reported in the
    result, never raised: callers treat a failed attempt as a no-op.
    """
    p = np.asarray(warm_start, dtype=float).copy()
    n = problem.n

    def eval_at(pv):
        _, residual, fine, diverged = shoot(problem, pv, omega, config,
                                            num_nodes=num_nodes)
        rnorm = float(np.linalg.norm(residual)) if not diverged else np.inf
        return rnorm, residual, fine, diverged

    rnorm, residual, fine, diverged = eval_at(p)
    iters = 0
    failed = diverged
    while not failed and rnorm > config.newton_tol and iters < config.max_newton_iters:
        iters += 1
        jac = np.empty((n, n))
        for j in range(n):
            dp = config.fd_step * max(1.0, abs(p[j]))
            trial = p.copy()
            trial[j] += dp
            _, res_j, _, div_j = shoot(problem, trial, omega, config,
                                       num_nodes=num_nodes)
            if div_j or not np.all(np.isfinite(res_j)):
                failed = True
                break
            jac[:, j] = (res_j - residual) / dp
        if failed:
            break
        try:
            step = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError:
            logger.debug("singular shooting Jacobian")
            failed = True
            break
        if not np.all(np.isfinite(step)):
            failed = True
            break
        # backtrack until the residual norm decreases
        t = 1.0
        improved = False
        for _ in range(config.max_backtracks):
            cand = p + t * step
            c_rnorm, c_res, c_fine, c_div = eval_at(cand)
            if not c_div and c_rnorm < rnorm:
                p, rnorm, residual, fine = cand, c_rnorm, c_res, c_fine
                improved = True
                break
            t *= config.damping
        if not improved:
            failed = True
            break

    converged = bool(np.isfinite(rnorm) and rnorm <= config.newton_tol)
    drift, h0 = _drift(problem, fine, omega) if np.all(np.isfinite(fine[1])) \
        else (np.inf, np.nan)
    times, states, costates, controls = fine
    return ShootingResult(converged=converged, p0_init=p,
                          fine_times=times, fine_states=states,
                          fine_costates=costates, fine_controls=controls,
                          residual_norm=rnorm, newton_iters=iters,
                          hamiltonian_drift=drift, hamiltonian_ref=h0,
                          diverged=bool(diverged))


def resample_to_grid(result: ShootingResult, num_nodes: int,
                     config: ShootingConfig) -> DiscreteTrajectory:
    """Shooting solution restricted to the outer-loop grid.

    Node controls are the trapezoid average of the fine extremal control
    over the following interval, so a zero-order-hold rollout of the
    returned controls tracks the extremal to second order instead of
    first.  Averaging stays inside any convex control set.  The last
    node's control drives no dynamics interval under the zero-order
    hold, so it is zeroed here; this matches how the discrete problem
    treats that variable (cost-only, optimized to zero).
    """
    spi = config.steps_per_interval
    idx = np.arange(num_nodes) * spi
    U = np.zeros((num_nodes, result.fine_controls.shape[1]))
    for i in range(num_nodes - 1):
        block = result.fine_controls[i * spi:(i + 1) * spi + 1]
        U[i] = (0.5 * (block[0] + block[-1]) + block[1:-1].sum(axis=0)) / spi
    return DiscreteTrajectory(X=result.fine_states[idx], U=U,
                              t_f=float(result.fine_times[-1]))


def transversality_residual(problem: OCProblem, x_tf: Array, p_tf: Array,
                            hamiltonian_tf: Optional[float] = None) -> Array:
    """Boundary-condition residual of the extremal at the final time.

    Point goal: terminal state mismatch (the Newton driver's residual).
    Ball goal: boundary membership plus the costate component tangent to
    the sphere.  Affine goal: constraint mismatch plus the costate
    component in the null space of the constraint map.  When the problem
    has a free final time and hamiltonian_tf is supplied, its value is
    appended (it must vanish).  Only the point-goal case drives a Newton
    iteration; the rest are diagnostics.
    """
    goal = problem.goal
    if isinstance(goal, PointGoal):
        parts = [x_tf - goal.x_f]
    elif isinstance(goal, BallGoal):
        d = x_tf - goal.center
        nd = float(np.linalg.norm(d))
        if nd > 1e-12:
            d_hat = d / nd
            tangential = p_tf - (p_tf @ d_hat) * d_hat
        else:
            tangential = p_tf
        parts = [np.array([nd - goal.radius]), tangential]
    elif isinstance(goal, AffineGoal):
        mismatch = goal.A @ x_tf - goal.b
        null_proj = np.eye(problem.n) - np.linalg.pinv(goal.A) @ goal.A
        parts = [mismatch, null_proj @ p_tf]
    else:
        raise TypeError(f"unsupported goal {type(goal).__name__}")
    if not isinstance(problem.time, FixedFinalTime) and hamiltonian_tf is not None:
        parts.append(np.array([hamiltonian_tf]))
    return np.concatenate(parts)
