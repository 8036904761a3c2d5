"""Workspace geometry and the soft state-constraint penalty.

Obstacles are spheres and axis-aligned boxes with analytic signed distance.
Keep-out is enforced softly: the penalty g2 sums squared hinges of the safety
margin violation d_safe - sd(x) over obstacles, plus squared hinges of any
scalar state bounds (norm bounds on a state block, box bounds on a single
coordinate).  Squared hinges make g2 continuously differentiable, which the
convexification and the shooting adjoint both rely on.  Control bounds are
not handled here; they stay hard constraints in the control set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

Array = np.ndarray


# ---------------------------------------------------------------------------
# obstacles

@dataclass(frozen=True)
class SphereObstacle:
    center: Array
    radius: float
    d_safe: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.shape != (3,):
            raise ValueError("sphere center must be a 3-vector")
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        if self.d_safe < 0:
            raise ValueError("safety margin must be nonnegative")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class BoxObstacle:
    center: Array
    half_extents: Array
    d_safe: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        h = np.asarray(self.half_extents, dtype=float)
        if c.shape != (3,) or h.shape != (3,):
            raise ValueError("box center and half extents must be 3-vectors")
        if np.any(h <= 0):
            raise ValueError("box half extents must be positive")
        if self.d_safe < 0:
            raise ValueError("safety margin must be nonnegative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", h)


Obstacle = Union[SphereObstacle, BoxObstacle]


def signed_distance(obstacle: Obstacle, point: Array) -> float:
    """Signed distance to the obstacle surface; negative inside."""
    p = np.asarray(point, dtype=float)
    if isinstance(obstacle, SphereObstacle):
        return float(np.linalg.norm(p - obstacle.center) - obstacle.radius)
    q = np.abs(p - obstacle.center) - obstacle.half_extents
    outside = np.maximum(q, 0.0)
    return float(np.linalg.norm(outside) + min(np.max(q), 0.0))


def signed_distance_grad(obstacle: Obstacle, point: Array) -> Array:
    """Gradient of the signed distance with respect to the point.

    Defined almost everywhere; on the measure-zero kink sets (sphere center,
    box corner diagonals) an arbitrary subgradient is returned.
    """
    p = np.asarray(point, dtype=float)
    if isinstance(obstacle, SphereObstacle):
        d = p - obstacle.center
        nd = np.linalg.norm(d)
        if nd < 1e-12:
            return np.zeros(3)
        return d / nd
    d = p - obstacle.center
    q = np.abs(d) - obstacle.half_extents
    sgn = np.where(d >= 0.0, 1.0, -1.0)
    outside = np.maximum(q, 0.0)
    n_out = np.linalg.norm(outside)
    if n_out > 0.0:
        return sgn * outside / n_out
    j = int(np.argmax(q))
    grad = np.zeros(3)
    grad[j] = sgn[j]
    return grad


# ---------------------------------------------------------------------------
# scalar state bounds

@dataclass(frozen=True)
class NormBound:
    """Penalized bound ||x[indices]|| <= bound."""

    indices: Tuple[int, ...]
    bound: float

    def __post_init__(self):
        if self.bound <= 0:
            raise ValueError("norm bound must be positive")
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))


@dataclass(frozen=True)
class BoxBound:
    """Penalized bound lower <= x[index] <= upper."""

    index: int
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("need lower < upper")


StateBound = Union[NormBound, BoxBound]


# ---------------------------------------------------------------------------
# workspace and penalty

@dataclass(frozen=True)
class Workspace:
    """Obstacles plus penalized state bounds.

    position_slice selects the position block of the state (2 or 3 wide);
    planar models are embedded at z = 0 when evaluating 3-d obstacle
    distances.
    """

    obstacles: Tuple[Obstacle, ...] = ()
    position_slice: slice = slice(0, 3)
    state_bounds: Tuple[StateBound, ...] = ()

    def __post_init__(self):
        width = self.position_slice.stop - self.position_slice.start
        if self.obstacles and width not in (2, 3):
            raise ValueError("position block must be 2 or 3 wide")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "state_bounds", tuple(self.state_bounds))

    def position_of(self, x: Array) -> Array:
        p = np.zeros(3)
        block = np.asarray(x, dtype=float)[self.position_slice]
        p[:block.size] = block
        return p


def _hinge(s: float) -> float:
    return s if s > 0.0 else 0.0


def g2_penalty(workspace: Workspace, x: Array):
    """Soft constraint penalty value and gradient at the state x.

    g2(x) = sum_obstacles hinge(d_safe - sd(pos))^2
          + sum_bounds hinge(violation)^2
    """
    x = np.asarray(x, dtype=float)
    value = 0.0
    grad = np.zeros(x.size)
    psl = workspace.position_slice
    width = psl.stop - psl.start

    if workspace.obstacles:
        pos = workspace.position_of(x)
        for ob in workspace.obstacles:
            margin = ob.d_safe - signed_distance(ob, pos)
            if margin > 0.0:
                value += margin * margin
                gpos = -2.0 * margin * signed_distance_grad(ob, pos)
                grad[psl] += gpos[:width]

    for bound in workspace.state_bounds:
        if isinstance(bound, NormBound):
            idx = list(bound.indices)
            block = x[idx]
            nb = np.linalg.norm(block)
            excess = nb - bound.bound
            if excess > 0.0:
                value += excess * excess
                grad[idx] += 2.0 * excess * block / nb
        else:
            low = bound.lower - x[bound.index]
            if low > 0.0:
                value += low * low
                grad[bound.index] -= 2.0 * low
            high = x[bound.index] - bound.upper
            if high > 0.0:
                value += high * high
                grad[bound.index] += 2.0 * high

    return float(value), grad


def max_violation(workspace: Workspace, X: Array) -> float:
    """Largest penalty value over the trajectory nodes."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return float(max(g2_penalty(workspace, X[i])[0] for i in range(X.shape[0])))


def min_signed_distance(workspace: Workspace, X: Array) -> float:
    """Smallest obstacle signed distance over the trajectory nodes.

    Diagnostic only (ignores state bounds); +inf when there are no obstacles.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not workspace.obstacles:
        return float("inf")
    best = float("inf")
    for i in range(X.shape[0]):
        pos = workspace.position_of(X[i])
        for ob in workspace.obstacles:
            best = min(best, signed_distance(ob, pos))
    return best
