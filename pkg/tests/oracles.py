"""Independent reference implementations used to check the package.

Everything in this module is deliberately written from scratch against the
math, not against the package code: finite differences, a dense KKT solve for
equality-constrained QPs, a hand-built trapezoidal collocation of linear
problems, quaternion slerp, and the closed-form scalar two-point LQ adjoint.
Keep it free of scptraj imports so the checks stay independent.
"""

import numpy as np
from scipy.linalg import expm

# ---------------------------------------------------------------------------
# frozen reference values

# scalar LQ boundary-transfer fixture: xdot = a x + b u, cost int r u^2 dt,
# x(0)=x0 -> x(tf)=xf.  p0 computed from the closed-loop Hamiltonian matrix
# exponential; frozen so a regression in the oracle itself is caught.
LQ_FIXTURE = dict(a=-0.6, b=1.0, r=0.5, x0=0.8, xf=0.0, tf=1.5)
LQ_FIXTURE_P0 = -0.19011228145440567

# modified Rodrigues parameters for a 90 degree yaw and the geodesic midpoint
# (45 degree yaw): p = tan(angle/4) * axis.
MRP_YAW_90 = np.array([0.0, 0.0, 0.41421356237309503])
MRP_YAW_45 = np.array([0.0, 0.0, 0.198912367379658])

# axis-aligned box signed distance cases: (center, half_extents, point, sd)
BOX_SDF_CASES = [
    (np.zeros(3), np.ones(3), np.array([2.0, 0.0, 0.0]), 1.0),
    (np.zeros(3), np.ones(3), np.array([0.5, 0.0, 0.0]), -0.5),
    (np.zeros(3), np.ones(3), np.array([2.0, 2.0, 0.0]), np.sqrt(2.0)),
    (np.array([1.0, 0.0, -1.0]), np.array([0.5, 1.0, 2.0]),
     np.array([2.0, 0.5, 0.0]), 0.5),
    (np.array([1.0, 0.0, -1.0]), np.array([0.5, 1.0, 2.0]),
     np.array([1.2, 0.3, 0.1]), -0.3),
]


# ---------------------------------------------------------------------------
# finite differences

def fd_jacobian(fun, x, h=1e-6):
    """Central-difference Jacobian of fun: R^n -> R^k at x."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x))
    jac = np.zeros((f0.size, x.size))
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        xp = x.copy(); xp[j] += step
        xm = x.copy(); xm[j] -= step
        jac[:, j] = (np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (2 * step)
    return jac


def fd_gradient(fun, x, h=1e-6):
    return fd_jacobian(lambda y: np.array([fun(y)]), x, h)[0]


# ---------------------------------------------------------------------------
# quaternion utilities (scalar-first convention)

def quat_from_mrp(p):
    p = np.asarray(p, dtype=float)
    s = p @ p
    return np.concatenate([[(1.0 - s) / (1.0 + s)], 2.0 * p / (1.0 + s)])


def mrp_from_quat(q):
    q = np.asarray(q, dtype=float)
    if q[0] < 0:
        q = -q
    return q[1:] / (1.0 + q[0])


def quat_slerp(q0, q1, tau):
    q0 = np.asarray(q0, dtype=float) / np.linalg.norm(q0)
    q1 = np.asarray(q1, dtype=float) / np.linalg.norm(q1)
    if q0 @ q1 < 0:
        q1 = -q1
    dot = min(1.0, max(-1.0, q0 @ q1))
    ang = np.arccos(dot)
    if ang < 1e-12:
        out = (1 - tau) * q0 + tau * q1
        return out / np.linalg.norm(out)
    return (np.sin((1 - tau) * ang) * q0 + np.sin(tau * ang) * q1) / np.sin(ang)


# ---------------------------------------------------------------------------
# dense KKT oracle for equality-constrained QPs

def solve_eq_qp_dense(P, q, A, b):
    """Solve min 0.5 z'Pz + q'z s.t. Az = b by one dense KKT factorization.

    Returns (z, lam) with the multiplier convention
    P z + q + A' lam = 0.
    """
    P = np.asarray(P, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n, k = P.shape[0], A.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = P
    kkt[:n, n:] = A.T
    kkt[n:, :n] = A
    rhs = np.concatenate([-np.asarray(q, dtype=float), np.asarray(b, dtype=float)])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:n], sol[n:]


# ---------------------------------------------------------------------------
# hand-built trapezoidal collocation of a linear time-invariant problem

def linear_collocation_oracle(Ad, Bd, x0, xf, t_f, N, R):
    """Discrete optimum of min sum_i w_i u_i'Ru_i over the trapezoid defects.

    Dynamics xdot = Ad x + Bd u with zero-order-hold controls: interval i uses
    u_i at both endpoints.  Node N-1 control enters only the cost.  Pinned
    x_0 = x0 and x_{N-1} = xf.  Solved densely through the KKT system; returns
    (cost, X, U, lam_init) where lam_init is the multiplier of the x_0 rows
    under the convention above.
    """
    Ad = np.atleast_2d(np.asarray(Ad, dtype=float))
    Bd = np.atleast_2d(np.asarray(Bd, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = Bd.shape
    dt = t_f / (N - 1)
    w = np.full(N, dt); w[0] = w[-1] = dt / 2

    nz = N * n + N * m
    xi = lambda i: slice(i * n, (i + 1) * n)
    ui = lambda i: slice(N * n + i * m, N * n + (i + 1) * m)

    P = np.zeros((nz, nz))
    for i in range(N):
        P[ui(i), ui(i)] = 2.0 * w[i] * R

    # x0 rows first so the multiplier block sits at the front
    Arows = []
    brows = []
    blk = np.zeros((n, nz)); blk[:, xi(0)] = np.eye(n)
    Arows.append(blk); brows.append(np.asarray(x0, dtype=float))
    for i in range(N - 1):
        blk = np.zeros((n, nz))
        blk[:, xi(i + 1)] = np.eye(n) - (dt / 2) * Ad
        blk[:, xi(i)] = -np.eye(n) - (dt / 2) * Ad
        blk[:, ui(i)] = -dt * Bd
        Arows.append(blk); brows.append(np.zeros(n))
    blk = np.zeros((n, nz)); blk[:, xi(N - 1)] = np.eye(n)
    Arows.append(blk); brows.append(np.asarray(xf, dtype=float))

    A = np.vstack(Arows)
    b = np.concatenate(brows)
    z, lam = solve_eq_qp_dense(P, np.zeros(nz), A, b)
    X = z[:N * n].reshape(N, n)
    U = z[N * n:].reshape(N, m)
    cost = float(sum(w[i] * U[i] @ R @ U[i] for i in range(N)))
    return cost, X, U, lam[:n]


# ---------------------------------------------------------------------------
# scalar two-point LQ adjoint (boundary transfer, control cost only)

def lq_boundary_p0(a, b, r, x0, xf, tf):
    """Initial costate for xdot = ax + bu, cost int r u^2, x(0)=x0, x(tf)=xf.

    Maximized Hamiltonian H = p(ax+bu) - ru^2 gives u = pb/(2r) and the linear
    closed loop d/dt (x,p) = M (x,p) with M = [[a, b^2/2r], [0, -a]].
    """
    M = np.array([[a, b * b / (2 * r)], [0.0, -a]])
    Phi = expm(M * tf)
    return (xf - Phi[0, 0] * x0) / Phi[0, 1]


# ---------------------------------------------------------------------------
# independent rollout

def rk4_rollout(f, x0, U, t_f, substeps=20):
    """RK4 integration of xdot = f(x, u) with zero-order-hold controls.

    U has one row per grid node; row i is held on interval i (the final row
    is unused).  Returns states at the N grid nodes.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    N = U.shape[0]
    dt = t_f / (N - 1)
    h = dt / substeps
    X = np.zeros((N, np.asarray(x0).size))
    x = np.asarray(x0, dtype=float).copy()
    X[0] = x
    for i in range(N - 1):
        u = U[i]
        for _ in range(substeps):
            k1 = f(x, u)
            k2 = f(x + 0.5 * h * k1, u)
            k3 = f(x + 0.5 * h * k2, u)
            k4 = f(x + h * k3, u)
            x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        X[i + 1] = x
    return X
