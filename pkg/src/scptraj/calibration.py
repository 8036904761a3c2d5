"""Sign calibration for the dual-to-costate warm start.

The subproblem duals approximate the adjoint vector of the penalized
problem, but the sign convention depends on how the solver orients
equality rows.  Rather than hard-coding it, a scalar linear-quadratic
problem with a known closed-form adjoint is solved once per process and
the sign giving the better match wins.  The reference adjoint comes from
the two-point boundary-value system

    d/dt [x; p] = [[a, b^2/(2r)], [0, -a]] [x; p]

whose transition matrix pins p(0) from the boundary pair (x(0), x(t_f)).
"""

from __future__ import annotations

import functools
import logging

import numpy as np
from scipy.linalg import expm

from .backend import SolveStatus, SolverConfig, solve
from .models import straightline_init
from .ocp import (BoxControlSet, ControlAffineModel, FixedFinalTime,
                  OCProblem, PointGoal, RunningCost)
from .transcription import LocpSpec, build_locp

logger = logging.getLogger(__name__)

# fixture constants; the state cost is zero so one subproblem is exact
_A, _B, _R = -0.6, 1.0, 0.5
_X0, _XF, _TF = 0.8, 0.0, 1.5
_NODES = 101


def _reference_adjoint_start() -> float:
    """p(0) of the fixture from the closed-form boundary-value system."""
    H = np.array([[_A, _B * _B / (2.0 * _R)], [0.0, -_A]])
    Phi = expm(H * _TF)
    return (_XF - Phi[0, 0] * _X0) / Phi[0, 1]


def _fixture_problem() -> OCProblem:
    model = ControlAffineModel(
        name="scalar-lq", n=1, m=1,
        drift=lambda x: _A * x,
        drift_jac=lambda x: np.array([[_A]]),
        fields=(lambda x: np.array([_B]),),
    )
    return OCProblem(model=model,
                     cost=RunningCost(R=np.array([[_R]])),
                     control_set=BoxControlSet(lower=np.array([-1e6]),
                                               upper=np.array([1e6])),
                     goal=PointGoal(np.array([_XF])),
                     x0=np.array([_X0]),
                     time=FixedFinalTime(_TF))


@functools.lru_cache(maxsize=1)
def adjoint_sign() -> float:
    """+1 or -1: factor mapping initial-state duals onto the adjoint start.

    Cached per process; costs one small subproblem solve on first use.
    """
    problem = _fixture_problem()
    prev = straightline_init(problem, _NODES, _TF)
    spec = LocpSpec(problem=problem, prev=prev, delta=1e6, omega=1.0,
                    slack_weight=1e4)
    program, _ = build_locp(spec)
    solution = solve(program, SolverConfig())
    if solution.status != SolveStatus.OPTIMAL:
        raise RuntimeError("calibration subproblem did not solve cleanly")
    lam = float(solution.dual("initial-state")[0])
    ref = _reference_adjoint_start()
    sign = 1.0 if abs(lam - ref) <= abs(-lam - ref) else -1.0
    gap = abs(sign * lam - ref)
    if gap > 0.5 * abs(ref):
        raise RuntimeError(
            f"calibration inconclusive: dual {lam:.6g} vs reference {ref:.6g}")
    logger.debug("adjoint sign %+g (gap %.3g on reference %.6g)", sign, gap, ref)
    return sign
