"""Interaction outcomes and social value orientation (SVO).

A vehicle's outcome is its speed divided by the distance left to its
conflict point.  The SVO angle ``phi`` weighs the own outcome by
``cos(phi)`` and the other vehicle's outcome by ``sin(phi)``; the optimal
angle is the one that maximizes this utility over ``[0, pi/2]``.
"""

from __future__ import annotations

import math

from .errors import NegativeVelocity, PhiOutOfRange

D_FLOOR = 0.1
HALF_PI = math.pi / 2


def outcome(v: float, d_remaining: float, d_floor: float = D_FLOOR) -> float:
    if v < 0:
        raise NegativeVelocity(f"velocity must be >= 0, got {v}")
    return v / max(d_remaining, d_floor)


def utility(u_self: float, u_other: float, phi: float) -> float:
    if not 0.0 <= phi <= HALF_PI:
        raise PhiOutOfRange(f"phi={phi} outside [0, pi/2]")
    return u_self * math.cos(phi) + u_other * math.sin(phi)


def optimal_svo(u_self: float, u_other: float) -> float:
    """Utility-maximizing SVO angle; pi/4 when both outcomes vanish."""
    if u_self == 0.0 and u_other == 0.0:
        return math.pi / 4
    return math.atan2(u_other, u_self)


def joint_optimal_svo(
    v_ego: float, d_ego: float, v_other: float, d_other: float
) -> tuple[float, float]:
    """Optimal SVO of both vehicles from speeds and remaining distances."""
    u_ego = outcome(v_ego, d_ego)
    u_other = outcome(v_other, d_other)
    return optimal_svo(u_ego, u_other), optimal_svo(u_other, u_ego)


def state_svo(state, ego_conflict: float, other_conflict: float) -> tuple[float, float]:
    """`joint_optimal_svo` evaluated on a :class:`~svodrive.env.JointState`."""
    return joint_optimal_svo(
        state.ego.v, ego_conflict - state.ego.s, state.other.v, other_conflict - state.other.s
    )
