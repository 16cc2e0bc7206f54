import math

import numpy as np
import pytest

from svodrive import env
from svodrive.routes import build_route
from svodrive.scenario import DESK_SPECS, Scenario, SynthSpec, desk_scenarios, synth_scenario, synth_with_actions


@pytest.fixture(scope="session")
def desk():
    return desk_scenarios()


@pytest.fixture(scope="session")
def crossing():
    """Perpendicular crossing, both vehicles at a constant 5 m/s from 30 m out."""
    return synth_scenario(SynthSpec(ego_approach=30.0, other_approach=30.0,
                                    ego_speed=5.0, other_speed=5.0))


@pytest.fixture(scope="session")
def head_on():
    """Two vehicles on the same line driving at each other; they collide mid-way."""
    ego = build_route([(-30.0, 0.0), (30.0, 0.0)]).with_conflict(55.0)
    other = build_route([(30.0, 0.0), (-30.0, 0.0)]).with_conflict(55.0)
    n = 50
    return Scenario(
        id=(0, 1, 2), ego_route=ego, other_route=other, intersection=(0.0, 0.0),
        initial_ego=(0.0, 8.0), initial_other=(0.0, 8.0),
        gt_ego_velocities=(8.0,) * n, gt_other_velocities=(8.0,) * n,
        gt_ego_arclengths=tuple(0.8 * (k + 1) for k in range(n)),
        gt_other_arclengths=tuple(0.8 * (k + 1) for k in range(n)),
        gt_svo_sequence=(math.pi / 4,) * n, l_gt=n,
    )


class ReplayPolicy:
    """Plays back a fixed action sequence, one entry per call."""

    kind = "replay"

    def __init__(self, actions):
        self.actions = [np.asarray(a, dtype=float) for a in actions]
        self.k = 0

    def act(self, obs, rng=None, deterministic=True):
        a = self.actions[min(self.k, len(self.actions) - 1)]
        self.k += 1
        return a


class ConstantPolicy:
    kind = "constant"

    def __init__(self, a_ego, a_other):
        self.a = np.array([a_ego, a_other], dtype=float)

    def act(self, obs, rng=None, deterministic=True):
        return self.a


@pytest.fixture(scope="session")
def desk_with_actions():
    return [synth_with_actions(spec) for spec in DESK_SPECS]


TRACK_HEADER = "track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width\n"


def crossing_track_rows():
    """Ego (track 1) heads north along x=2 at 10 m/s, then turns left on a
    10 m arc; the other car (track 2) heads east along y=0 at 5 m/s."""
    rows = []
    for k in range(61):
        s = float(k)
        if s <= 45.0:
            x, y, h = 2.0, -40.0 + s, math.pi / 2
        else:
            th = (s - 45.0) / 10.0
            x, y, h = -8.0 + 10 * math.cos(th), 5.0 + 10 * math.sin(th), math.pi / 2 + th
        rows.append((1, k + 1, 100 * (k + 1), x, y, 10 * math.cos(h), 10 * math.sin(h), h))
    for k in range(100):
        rows.append((2, k + 1, 100 * (k + 1), -40.0 + 0.5 * k, 0.0, 5.0, 0.0, 0.0))
    return rows


@pytest.fixture
def tracks_csv():
    body = "".join(f"{t},{f},{ts},car,{x!r},{y!r},{vx!r},{vy!r},{h!r},4.5,1.8\n"
                   for t, f, ts, x, y, vx, vy, h in crossing_track_rows())
    return TRACK_HEADER + body


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Print and record one pass/fail line per acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(line)
        _VERDICTS.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
