"""Model builders: Dubins car, free-flyer, fixed-wing airplane, double integrator.

All builders return a ControlAffineModel with analytic Jacobians.  The double
integrator is exactly linear and exists mainly as a fixture: the
convexification is exact on it, so the trust-region machinery must accept
every step with a zero accuracy ratio.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ocp import (ControlAffineModel, DiscreteTrajectory, FixedFinalTime,
                  FreeFinalTime, OCProblem)

logger = logging.getLogger(__name__)

Array = np.ndarray

# diagnostic counter for dynamics evaluations outside the validity envelope
_clamp_counts: dict = {}


def clamp_count(name: str) -> int:
    return _clamp_counts.get(name, 0)


def reset_clamp_counts() -> None:
    _clamp_counts.clear()


def _note_clamp(name: str) -> None:
    _clamp_counts[name] = _clamp_counts.get(name, 0) + 1
    logger.debug("dynamics evaluated outside validity envelope for %s", name)


def _skew(v: Array) -> Array:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def _cross3(a: Array, b: Array) -> Array:
    # np.cross spends most of its time on axis handling; the drift sits on
    # the shooting integrator's hot path, so spell the 3-vector case out
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


# ---------------------------------------------------------------------------
# Dubins car

@dataclass(frozen=True)
class DubinsParams:
    speed: float = 1.0       # constant forward speed
    turn_gain: float = 1.0   # heading rate per unit control

    def __post_init__(self):
        if self.speed <= 0 or self.turn_gain <= 0:
            raise ValueError("speed and turn gain must be positive")


def dubins_model(params: DubinsParams = DubinsParams()) -> ControlAffineModel:
    """Planar car at constant speed; state (x, y, heading), control turn rate."""
    v, k = params.speed, params.turn_gain

    def drift(x):
        return np.array([v * np.cos(x[2]), v * np.sin(x[2]), 0.0])

    def drift_jac(x):
        return np.array([[0.0, 0.0, -v * np.sin(x[2])],
                         [0.0, 0.0, v * np.cos(x[2])],
                         [0.0, 0.0, 0.0]])

    steer = np.array([0.0, 0.0, k])
    return ControlAffineModel(
        name="dubins", n=3, m=1,
        drift=drift, drift_jac=drift_jac,
        fields=(lambda x: steer,),
        field_jacs=None,
        constant_control_matrix=steer.reshape(3, 1),
    )


# ---------------------------------------------------------------------------
# free-flyer

@dataclass(frozen=True)
class FreeFlyerParams:
    """Rigid body with thrusters; attitude as modified Rodrigues parameters.

    Mass and inertia defaults are stand-ins for a small free-flying robot and
    are meant to be overridden per scenario.
    """

    mass: float = 9.58
    inertia: Array = field(default_factory=lambda: 0.153 * np.eye(3))

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if J.ndim == 1:
            J = np.diag(J)
        if J.shape != (3, 3):
            raise ValueError("inertia must be a 3x3 matrix or 3-vector diagonal")
        if np.min(np.linalg.eigvalsh(0.5 * (J + J.T))) <= 0:
            raise ValueError("inertia must be positive definite")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        object.__setattr__(self, "inertia", J)


def freeflyer_model(params: FreeFlyerParams = FreeFlyerParams()) -> ControlAffineModel:
    """State (r, v, p, w): position, velocity, MRP attitude, body rates.

    Controls are a body force and torque (6 inputs); both enter through
    constant fields, so only the drift carries state dependence.
    """
    mass = params.mass
    J = params.inertia
    Jinv = np.linalg.inv(J)

    def drift(x):
        p = x[6:9]
        w = x[9:12]
        pdot = 0.25 * ((1.0 - p @ p) * w - 2.0 * _cross3(w, p) + 2.0 * (w @ p) * p)
        wdot = -Jinv @ _cross3(w, J @ w)
        out = np.zeros(12)
        out[0:3] = x[3:6]
        out[6:9] = pdot
        out[9:12] = wdot
        return out

    def drift_jac(x):
        p = x[6:9]
        w = x[9:12]
        A = np.zeros((12, 12))
        A[0:3, 3:6] = np.eye(3)
        A[6:9, 6:9] = 0.5 * (-np.outer(w, p) - _skew(w) + np.outer(p, w)
                             + (w @ p) * np.eye(3))
        A[6:9, 9:12] = 0.25 * ((1.0 - p @ p) * np.eye(3) + 2.0 * _skew(p)
                               + 2.0 * np.outer(p, p))
        A[9:12, 9:12] = -Jinv @ (_skew(w) @ J - _skew(J @ w))
        return A

    cols = []
    for j in range(3):
        col = np.zeros(12)
        col[3 + j] = 1.0 / mass
        cols.append(col)
    for j in range(3):
        col = np.zeros(12)
        col[9:12] = Jinv[:, j]
        cols.append(col)

    def make_field(c):
        return lambda x: c

    return ControlAffineModel(
        name="freeflyer", n=12, m=6,
        drift=drift, drift_jac=drift_jac,
        fields=tuple(make_field(c) for c in cols),
        field_jacs=None,
        mrp_slice=slice(6, 9),
        constant_control_matrix=np.column_stack(cols),
    )


# ---------------------------------------------------------------------------
# fixed-wing airplane

@dataclass(frozen=True)
class AirplaneParams:
    """Flat-plate aerodynamics; see the builder for the state layout.

    v_min/v_max and gamma_max double as the validity envelope: dynamics
    evaluated outside it use the clamped value, and the event is counted in
    the module clamp diagnostics.
    """

    mass: float = 1.0
    gravity: float = 9.81
    air_density: float = 1.225
    wing_area: float = 0.3
    c_d0: float = 0.03
    k_induced: float = 0.05
    v_min: float = 3.0
    v_max: float = 15.0
    gamma_max: float = 0.6

    def __post_init__(self):
        if not (0 < self.v_min < self.v_max):
            raise ValueError("need 0 < v_min < v_max")
        if not (0 < self.gamma_max < np.pi / 2):
            raise ValueError("gamma_max must lie in (0, pi/2)")
        for name in ("mass", "gravity", "air_density", "wing_area"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def airplane_model(params: AirplaneParams = AirplaneParams()) -> ControlAffineModel:
    """State (x, y, z, psi, v, gamma, phi, alpha); controls (accel, roll rate,
    pitch-plane alpha rate).

    Lift pi*rho*S*v^2*alpha and drag rho*S*v^2*(c_d0 + 4 pi k alpha^2).  The
    1/v and 1/cos(gamma) factors are singular, so v and gamma are clamped to
    the validity envelope before evaluation; the Jacobian zeroes the
    corresponding columns when the clamp is active so it stays the exact
    derivative of the evaluated function.
    """
    m = params.mass
    g = params.gravity
    S = params.air_density * params.wing_area
    cl = np.pi * S                      # lift = cl * v^2 * alpha
    cd0, ki = params.c_d0, params.k_induced

    def clamp(x):
        v_raw, gam_raw = x[4], x[5]
        v = min(max(v_raw, params.v_min), params.v_max)
        gam = min(max(gam_raw, -params.gamma_max), params.gamma_max)
        if v != v_raw or gam != gam_raw:
            _note_clamp("airplane")
        return v, gam

    def drift(x):
        psi, phi, alpha = x[3], x[6], x[7]
        v, gam = clamp(x)
        cg, sg = np.cos(gam), np.sin(gam)
        lift = cl * v * v * alpha
        drag = S * v * v * (cd0 + 4.0 * np.pi * ki * alpha * alpha)
        return np.array([
            v * np.cos(psi) * cg,
            v * np.sin(psi) * cg,
            v * sg,
            -lift * np.sin(phi) / (m * v * cg),
            -drag / m - g * sg,
            lift * np.cos(phi) / (m * v) - g * cg / v,
            0.0,
            0.0,
        ])

    def drift_jac(x):
        psi, phi, alpha = x[3], x[6], x[7]
        v, gam = clamp(x)
        cg, sg = np.cos(gam), np.sin(gam)
        cp, sp = np.cos(psi), np.sin(psi)
        cphi, sphi = np.cos(phi), np.sin(phi)
        A = np.zeros((8, 8))
        A[0, 3] = -v * sp * cg
        A[0, 4] = cp * cg
        A[0, 5] = -v * cp * sg
        A[1, 3] = v * cp * cg
        A[1, 4] = sp * cg
        A[1, 5] = -v * sp * sg
        A[2, 4] = sg
        A[2, 5] = v * cg
        # psi-dot = -cl v alpha sin(phi) / (m cos(gamma))
        A[3, 4] = -cl * alpha * sphi / (m * cg)
        A[3, 5] = -cl * v * alpha * sphi * sg / (m * cg * cg)
        A[3, 6] = -cl * v * alpha * cphi / (m * cg)
        A[3, 7] = -cl * v * sphi / (m * cg)
        # v-dot = -S v^2 (cd0 + 4 pi k alpha^2)/m - g sin(gamma)
        A[4, 4] = -2.0 * S * v * (cd0 + 4.0 * np.pi * ki * alpha * alpha) / m
        A[4, 5] = -g * cg
        A[4, 7] = -8.0 * np.pi * ki * S * v * v * alpha / m
        # gamma-dot = cl v alpha cos(phi)/m - g cos(gamma)/v
        A[5, 4] = cl * alpha * cphi / m + g * cg / (v * v)
        A[5, 5] = g * sg / v
        A[5, 6] = -cl * v * alpha * sphi / m
        A[5, 7] = cl * v * cphi / m
        # clamped coordinates contribute no sensitivity
        if x[4] < params.v_min or x[4] > params.v_max:
            A[:, 4] = 0.0
        if abs(x[5]) > params.gamma_max:
            A[:, 5] = 0.0
        return A

    def unit(i):
        e = np.zeros(8)
        e[i] = 1.0
        return e

    accel, roll_rate, alpha_rate = unit(4), unit(6), unit(7)
    return ControlAffineModel(
        name="airplane", n=8, m=3,
        drift=drift, drift_jac=drift_jac,
        fields=(lambda x: accel, lambda x: roll_rate, lambda x: alpha_rate),
        field_jacs=None,
        constant_control_matrix=np.column_stack([accel, roll_rate, alpha_rate]),
    )


# ---------------------------------------------------------------------------
# double integrator

def double_integrator_model(dims: int = 2) -> ControlAffineModel:
    """Exactly linear fixture: positions then velocities, acceleration inputs."""
    if dims < 1:
        raise ValueError("need at least one dimension")
    n = 2 * dims
    A = np.zeros((n, n))
    A[:dims, dims:] = np.eye(dims)

    def drift(x):
        out = np.zeros(n)
        out[:dims] = x[dims:]
        return out

    def make_field(j):
        e = np.zeros(n)
        e[dims + j] = 1.0
        return lambda x: e

    B = np.zeros((n, dims))
    B[dims:, :] = np.eye(dims)
    return ControlAffineModel(
        name=f"double_integrator{dims}d", n=n, m=dims,
        drift=drift, drift_jac=lambda x: A,
        fields=tuple(make_field(j) for j in range(dims)),
        field_jacs=None,
        constant_control_matrix=B,
    )


# ---------------------------------------------------------------------------
# modified Rodrigues parameter helpers

def mrp_to_quat(p: Array) -> Array:
    """Unit quaternion (scalar first) for an MRP vector."""
    p = np.asarray(p, dtype=float)
    s = p @ p
    return np.concatenate([[(1.0 - s) / (1.0 + s)], 2.0 * p / (1.0 + s)])


def quat_to_mrp(q: Array) -> Array:
    """MRP vector for a unit quaternion; picks the short rotation."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q[1:] / (1.0 + q[0])


def mrp_geodesic(p0: Array, p1: Array, tau: float) -> Array:
    """Point at fraction tau along the rotation geodesic between two MRPs."""
    q0 = mrp_to_quat(p0)
    q1 = mrp_to_quat(p1)
    if q0 @ q1 < 0.0:
        q1 = -q1
    dot = float(np.clip(q0 @ q1, -1.0, 1.0))
    ang = np.arccos(dot)
    if ang < 1e-12:
        q = (1.0 - tau) * q0 + tau * q1
    else:
        q = (np.sin((1.0 - tau) * ang) * q0 + np.sin(tau * ang) * q1) / np.sin(ang)
    return quat_to_mrp(q / np.linalg.norm(q))


# ---------------------------------------------------------------------------
# initial guess

def straightline_init(problem: OCProblem, N: int, t_f: float) -> DiscreteTrajectory:
    """Straight-line interpolation from x0 to a goal representative, zero controls.

    Coordinates are interpolated independently except for an MRP attitude
    block, which follows the rotation geodesic so large attitude changes do
    not pass through the MRP shadow set.
    """
    if N < 2:
        raise ValueError("need at least two grid nodes")
    xf = problem.goal.representative()
    taus = np.linspace(0.0, 1.0, N)
    X = np.outer(1.0 - taus, problem.x0) + np.outer(taus, xf)
    sl = problem.model.mrp_slice
    if sl is not None:
        p0, p1 = problem.x0[sl], xf[sl]
        for i, tau in enumerate(taus):
            X[i, sl] = mrp_geodesic(p0, p1, float(tau))
    U = np.zeros((N, problem.m))
    return DiscreteTrajectory(X=X, U=U, t_f=t_f)
