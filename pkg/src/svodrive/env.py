"""Two-vehicle longitudinal simulator on fixed routes at 10 Hz."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ActionOutOfBounds, InvalidScenario

if TYPE_CHECKING:
    from .routes import Route
    from .scenario import Scenario

DT = 0.1
MAX_ACCEL = 3.0
VEHICLE_LENGTH = 5.0
VEHICLE_WIDTH = 2.0

POSITION_SCALE = 50.0
VELOCITY_SCALE = 10.0
HEADING_SCALE = math.pi

_ACTION_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class VehicleState:
    x: float
    y: float
    s: float
    v: float
    heading: float


@dataclass(frozen=True, slots=True)
class JointState:
    ego: VehicleState
    other: VehicleState
    t: int = 0

    def swapped(self) -> "JointState":
        return JointState(self.other, self.ego, self.t)


@dataclass(frozen=True, slots=True)
class StepOutcome:
    next_state: JointState
    collided: bool
    reached: str | None  # None, "ego", "other" or "both"
    truncated: bool

    @property
    def terminal(self) -> bool:
        """True when the episode ended for a task reason (no value bootstrap)."""
        return self.collided or self.reached is not None

    @property
    def done(self) -> bool:
        return self.terminal or self.truncated

    @property
    def cause(self) -> str:
        if self.collided:
            return "collision"
        if self.reached is not None:
            return "reached"
        if self.truncated:
            return "timeout"
        return ""


def vehicle_on_route(route: Route, s: float, v: float) -> VehicleState:
    x, y, heading = route.pose_at(s)
    return VehicleState(x=x, y=y, s=s, v=v, heading=heading)


def advance(s: float, v: float, a: float, total_length: float, dt: float = DT) -> tuple[float, float]:
    """One constant-acceleration step; vehicles stop instead of reversing."""
    v_new = v + a * dt
    if v_new >= 0.0:
        ds = v * dt + 0.5 * a * dt * dt
    else:
        ds = v * v / (2.0 * -a)
        v_new = 0.0
    return min(s + ds, total_length), v_new


def reset(scenario: Scenario) -> JointState:
    (s_e, v_e), (s_o, v_o) = scenario.initial_ego, scenario.initial_other
    if v_e < 0 or v_o < 0:
        raise InvalidScenario("initial velocities must be non-negative")
    if s_e >= scenario.ego_route.conflict_arclength or s_o >= scenario.other_route.conflict_arclength:
        raise InvalidScenario("a vehicle starts at or beyond its conflict point")
    if s_e < 0 or s_o < 0:
        raise InvalidScenario("initial arc-length must be non-negative")
    return JointState(
        vehicle_on_route(scenario.ego_route, s_e, v_e),
        vehicle_on_route(scenario.other_route, s_o, v_o),
        0,
    )


def step(state: JointState, action, scenario: Scenario) -> StepOutcome:
    a_ego, a_other = float(action[0]), float(action[1])
    if abs(a_ego) > MAX_ACCEL + _ACTION_TOL or abs(a_other) > MAX_ACCEL + _ACTION_TOL:
        raise ActionOutOfBounds(f"action ({a_ego}, {a_other}) outside [-3, 3]")
    er, orr = scenario.ego_route, scenario.other_route
    s_e, v_e = advance(state.ego.s, state.ego.v, a_ego, er.total_length, scenario.dt)
    s_o, v_o = advance(state.other.s, state.other.v, a_other, orr.total_length, scenario.dt)
    nxt = JointState(vehicle_on_route(er, s_e, v_e), vehicle_on_route(orr, s_o, v_o), state.t + 1)

    collided = check_collision(nxt)
    reached = None
    truncated = False
    if not collided:
        ego_in = s_e >= er.conflict_arclength
        other_in = s_o >= orr.conflict_arclength
        if ego_in or other_in:
            reached = "both" if ego_in and other_in else ("ego" if ego_in else "other")
        else:
            truncated = nxt.t >= 2 * scenario.l_gt
    return StepOutcome(nxt, collided, reached, truncated)


def _corners(v: VehicleState) -> np.ndarray:
    c, s = math.cos(v.heading), math.sin(v.heading)
    hl, hw = VEHICLE_LENGTH / 2, VEHICLE_WIDTH / 2
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + (v.x, v.y)


def separation(a: VehicleState, b: VehicleState) -> float:
    """Largest gap between the two footprints over the SAT axes.

    Positive means separated by at least that much along some axis; a
    negative value is the smallest penetration depth.
    """
    ca, cb = _corners(a), _corners(b)
    best = -math.inf
    for h in (a.heading, b.heading):
        for axis in ((math.cos(h), math.sin(h)), (-math.sin(h), math.cos(h))):
            pa, pb = ca @ axis, cb @ axis
            gap = max(pb.min() - pa.max(), pa.min() - pb.max())
            best = max(best, gap)
    return best


def check_collision(state: JointState) -> bool:
    a, b = state.ego, state.other
    reach = math.hypot(VEHICLE_LENGTH, VEHICLE_WIDTH)
    if math.hypot(a.x - b.x, a.y - b.y) > reach:
        return False
    return separation(a, b) < 0.0


def observe(state: JointState, origin: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Normalized observation ``[x, y, v, heading]`` for ego then other."""
    ox, oy = origin
    out = np.empty(8)
    for k, veh in enumerate((state.ego, state.other)):
        out[4 * k: 4 * k + 4] = (
            (veh.x - ox) / POSITION_SCALE,
            (veh.y - oy) / POSITION_SCALE,
            veh.v / VELOCITY_SCALE,
            veh.heading / HEADING_SCALE,
        )
    return out


class IntersectionEnv:
    """Stateful wrapper for rollouts; one instance per concurrent episode."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.state: JointState | None = None

    def reset(self) -> JointState:
        self.state = reset(self.scenario)
        return self.state

    def step(self, action) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        out = step(self.state, action, self.scenario)
        self.state = out.next_state
        return out

    def observe(self, state: JointState | None = None) -> np.ndarray:
        return observe(self.state if state is None else state, self.scenario.intersection)
