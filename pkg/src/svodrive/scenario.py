"""Paired interaction scenarios: extraction from tracks, synthesis, and file I/O."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import env
from .errors import InvalidSpec, NoInteraction, NoPairsFound, ScenarioFormatError
from .routes import (
    CONFLICT_THRESHOLD,
    MERGE_THRESHOLD,
    RESAMPLE_STEP,
    Route,
    assign_conflict_points,
    build_route,
    polyline_arclength,
)
from .svo import joint_optimal_svo
from .tracks import TrackRecord, group_tracks

FORMAT_VERSION = 1
LABEL_CLAMP = 3.0


@dataclass(frozen=True, eq=False)
class Scenario:
    """One two-vehicle interaction.

    The ``gt_*`` sequences have ``l_gt`` entries; entry ``k`` is the
    ground-truth value after ``k + 1`` steps (the initial values live in
    ``initial_ego`` / ``initial_other`` as ``(arclength, velocity)``).
    """

    id: tuple[int, int, int]
    ego_route: Route
    other_route: Route
    intersection: tuple[float, float]
    initial_ego: tuple[float, float]
    initial_other: tuple[float, float]
    gt_ego_velocities: tuple[float, ...]
    gt_other_velocities: tuple[float, ...]
    gt_ego_arclengths: tuple[float, ...]
    gt_other_arclengths: tuple[float, ...]
    gt_svo_sequence: tuple[float, ...]
    l_gt: int
    dt: float = env.DT

    def __post_init__(self):
        if self.l_gt < 1:
            raise ScenarioFormatError("l_gt must be >= 1")
        for name in ("gt_ego_velocities", "gt_other_velocities", "gt_ego_arclengths",
                     "gt_other_arclengths", "gt_svo_sequence"):
            if len(getattr(self, name)) != self.l_gt:
                raise ScenarioFormatError(f"{name} must have l_gt={self.l_gt} entries")

    @property
    def name(self) -> str:
        return "{}_{}_{}".format(*self.id)

    @property
    def gt_arrival(self) -> str | None:
        """Which vehicle reaches its conflict point first in the ground truth."""
        ego = self.gt_ego_arclengths[-1] >= self.ego_route.conflict_arclength
        other = self.gt_other_arclengths[-1] >= self.other_route.conflict_arclength
        if ego and other:
            return "both"
        return "ego" if ego else ("other" if other else None)

    def gt_arclength_series(self) -> tuple[np.ndarray, np.ndarray]:
        """GT arc-lengths at steps 0..l_gt for ego and other."""
        return (
            np.array((self.initial_ego[0],) + self.gt_ego_arclengths),
            np.array((self.initial_other[0],) + self.gt_other_arclengths),
        )

    def gt_velocity_series(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array((self.initial_ego[1],) + self.gt_ego_velocities),
            np.array((self.initial_other[1],) + self.gt_other_velocities),
        )

    def gt_states(self) -> list[env.JointState]:
        se, so = self.gt_arclength_series()
        ve, vo = self.gt_velocity_series()
        return [
            env.JointState(
                env.vehicle_on_route(self.ego_route, se[k], ve[k]),
                env.vehicle_on_route(self.other_route, so[k], vo[k]),
                k,
            )
            for k in range(self.l_gt + 1)
        ]

    def gt_accelerations(self) -> np.ndarray:
        """Finite-difference acceleration labels, shape ``(l_gt, 2)``, clamped to +-3."""
        ve, vo = self.gt_velocity_series()
        acc = np.column_stack([np.diff(ve), np.diff(vo)]) / self.dt
        return np.clip(acc, -LABEL_CLAMP, LABEL_CLAMP)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "id": list(self.id),
            "ego_route": self.ego_route.to_dict(),
            "other_route": self.other_route.to_dict(),
            "intersection": list(self.intersection),
            "initial_ego": list(self.initial_ego),
            "initial_other": list(self.initial_other),
            "gt_ego_velocities": list(self.gt_ego_velocities),
            "gt_other_velocities": list(self.gt_other_velocities),
            "gt_ego_arclengths": list(self.gt_ego_arclengths),
            "gt_other_arclengths": list(self.gt_other_arclengths),
            "gt_svo_sequence": list(self.gt_svo_sequence),
            "l_gt": self.l_gt,
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if data.get("format_version") != FORMAT_VERSION:
            raise ScenarioFormatError(f"unsupported format_version {data.get('format_version')!r}")
        try:
            return cls(
                id=tuple(int(v) for v in data["id"]),
                ego_route=Route.from_dict(data["ego_route"]),
                other_route=Route.from_dict(data["other_route"]),
                intersection=tuple(data["intersection"]),
                initial_ego=tuple(data["initial_ego"]),
                initial_other=tuple(data["initial_other"]),
                gt_ego_velocities=tuple(data["gt_ego_velocities"]),
                gt_other_velocities=tuple(data["gt_other_velocities"]),
                gt_ego_arclengths=tuple(data["gt_ego_arclengths"]),
                gt_other_arclengths=tuple(data["gt_other_arclengths"]),
                gt_svo_sequence=tuple(data["gt_svo_sequence"]),
                l_gt=int(data["l_gt"]),
                dt=float(data["dt"]),
            )
        except KeyError as exc:
            raise ScenarioFormatError(f"missing scenario key {exc}") from None


def save_scenario(scenario: Scenario, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_scenario(path: str | os.PathLike) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: {exc}") from None
    return Scenario.from_dict(data)


def write_scenario_set(
    out_dir: str | os.PathLike, train: Sequence[Scenario], test: Sequence[Scenario] = ()
) -> Path:
    """Write one file per scenario plus a ``manifest.json`` holding the split."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"format_version": FORMAT_VERSION, "train": [], "test": []}
    for split, group in (("train", train), ("test", test)):
        for sc in group:
            fname = f"scenario_{sc.name}.json"
            save_scenario(sc, out / fname)
            manifest[split].append(fname)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


def load_scenario_set(scenario_dir: str | os.PathLike, split: str = "train") -> list[Scenario]:
    root = Path(scenario_dir)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    names = manifest["train"] + manifest["test"] if split == "all" else manifest[split]
    return [load_scenario(root / n) for n in names]


def split_scenarios(
    scenarios: Sequence[Scenario], test_count: int, seed: int = 0
) -> tuple[list[Scenario], list[Scenario]]:
    if not 0 <= test_count <= len(scenarios):
        raise ValueError(f"test_count {test_count} out of range for {len(scenarios)} scenarios")
    order = np.random.default_rng(seed).permutation(len(scenarios))
    test_idx = set(order[:test_count].tolist())
    train = [sc for i, sc in enumerate(scenarios) if i not in test_idx]
    test = [sc for i, sc in enumerate(scenarios) if i in test_idx]
    return train, test


def gt_svo_from_series(
    ego_route: Route, other_route: Route,
    s_ego: Sequence[float], v_ego: Sequence[float],
    s_other: Sequence[float], v_other: Sequence[float],
) -> tuple[float, ...]:
    ce, co = ego_route.conflict_arclength, other_route.conflict_arclength
    return tuple(
        joint_optimal_svo(ve, ce - se, vo, co - so)[0]
        for se, ve, so, vo in zip(s_ego, v_ego, s_other, v_other)
    )


# -- extraction from recorded tracks -----------------------------------------

MANEUVER_ANGLE = math.pi / 4


def classify_maneuver(track: Sequence[TrackRecord]) -> str:
    """``left``, ``right`` or ``straight`` from the net heading change."""
    turn = float(np.diff(np.unwrap([r.heading for r in track])).sum()) if len(track) > 1 else 0.0
    if turn > MANEUVER_ANGLE:
        return "left"
    if turn < -MANEUVER_ANGLE:
        return "right"
    return "straight"


@dataclass(frozen=True)
class PairingRules:
    ego_maneuvers: frozenset = frozenset({"left"})
    other_maneuvers: frozenset = frozenset({"straight", "right"})
    frame_step_ms: int = 100
    resample_step: float = RESAMPLE_STEP
    conflict_threshold: float = CONFLICT_THRESHOLD
    merge_threshold: float = MERGE_THRESHOLD


def extract_scenarios(
    records: Iterable[TrackRecord], rules: PairingRules = PairingRules(), file_id: int = 0
) -> list[Scenario]:
    tracks = group_tracks(records)
    maneuvers = {tid: classify_maneuver(t) for tid, t in tracks.items()}
    routes: dict[int, Route] = {}
    for tid, t in tracks.items():
        try:
            routes[tid] = build_route([(r.x, r.y) for r in t], rules.resample_step)
        except Exception:
            continue  # parked or stationary vehicles carry no route

    found = []
    for ego_id in sorted(routes):
        if maneuvers[ego_id] not in rules.ego_maneuvers:
            continue
        for other_id in sorted(routes):
            if other_id == ego_id or maneuvers[other_id] not in rules.other_maneuvers:
                continue
            sc = _pair_scenario(tracks[ego_id], tracks[other_id], routes[ego_id],
                                routes[other_id], rules, (file_id, ego_id, other_id))
            if sc is not None:
                found.append(sc)
    if not found:
        raise NoPairsFound("no interacting vehicle pairs found")
    return found


def _pair_scenario(ego_track, other_track, ego_route, other_route, rules, sid):
    try:
        ego_route, other_route, point = assign_conflict_points(
            ego_route, other_route, rules.conflict_threshold, rules.merge_threshold)
    except NoInteraction:
        return None

    def by_frame(track):
        arc = polyline_arclength([(r.x, r.y) for r in track])
        return {r.frame_id: (arc[i], r.speed, r.timestamp) for i, r in enumerate(track)}

    fe, fo = by_frame(ego_track), by_frame(other_track)
    common = sorted(set(fe) & set(fo))
    if not common:
        return None
    frames = [common[0]]
    for f in common[1:]:
        prev = frames[-1]
        if f != prev + 1 or fe[f][2] - fe[prev][2] != rules.frame_step_ms:
            break
        frames.append(f)

    ce, co = ego_route.conflict_arclength, other_route.conflict_arclength
    s_e0, v_e0, _ = fe[frames[0]]
    s_o0, v_o0, _ = fo[frames[0]]
    if s_e0 >= ce or s_o0 >= co:
        return None
    end = next((k for k, f in enumerate(frames) if fe[f][0] >= ce or fo[f][0] >= co), None)
    if end is None:
        return None

    window = frames[1:end + 1]
    s_e = tuple(float(fe[f][0]) for f in window)
    v_e = tuple(float(fe[f][1]) for f in window)
    s_o = tuple(float(fo[f][0]) for f in window)
    v_o = tuple(float(fo[f][1]) for f in window)
    return Scenario(
        id=sid,
        ego_route=ego_route,
        other_route=other_route,
        intersection=point,
        initial_ego=(float(s_e0), float(v_e0)),
        initial_other=(float(s_o0), float(v_o0)),
        gt_ego_velocities=v_e,
        gt_other_velocities=v_o,
        gt_ego_arclengths=s_e,
        gt_other_arclengths=s_o,
        gt_svo_sequence=gt_svo_from_series(ego_route, other_route, s_e, v_e, s_o, v_o),
        l_gt=end,
    )


# -- synthetic scenarios ----------------------------------------------------

MAX_SYNTH_STEPS = 5000


@dataclass(frozen=True)
class SynthSpec:
    """Geometry and speed profile of a synthetic crossing.

    The ego drives along +x through the origin, optionally turning left
    after it with ``ego_turn_radius``.  The other vehicle's straight route
    passes through the origin at ``crossing_angle_deg`` to the ego's heading.
    Acceleration profiles are ``(duration_s, accel)`` segments followed by
    zero acceleration.
    """

    ego_approach: float = 30.0
    other_approach: float = 30.0
    exit_length: float = 30.0
    crossing_angle_deg: float = 90.0
    ego_turn_radius: float | None = None
    ego_speed: float = 5.0
    other_speed: float = 5.0
    ego_profile: tuple[tuple[float, float], ...] = ()
    other_profile: tuple[tuple[float, float], ...] = ()
    accel_noise: float = 0.0
    id: tuple[int, int, int] = (0, 1, 2)
    resample_step: float = RESAMPLE_STEP
    conflict_threshold: float = CONFLICT_THRESHOLD

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        data = dict(data)
        for key in ("ego_profile", "other_profile"):
            if key in data:
                data[key] = tuple(tuple(seg) for seg in data[key])
        if "id" in data:
            data["id"] = tuple(data["id"])
        return cls(**data)


def _ego_path(spec: SynthSpec) -> np.ndarray:
    if spec.ego_turn_radius is None:
        return np.array([[-spec.ego_approach, 0.0], [0.0, 0.0], [spec.exit_length, 0.0]])
    r = spec.ego_turn_radius
    theta = np.linspace(0.0, math.pi / 2, 91)
    arc = np.column_stack([r * np.sin(theta), r - r * np.cos(theta)])
    tail = np.array([[r, r + spec.exit_length]])
    return np.vstack([[[-spec.ego_approach, 0.0]], arc, tail])


def _other_path(spec: SynthSpec) -> np.ndarray:
    ang = math.radians(spec.crossing_angle_deg)
    d = np.array([math.cos(ang), math.sin(ang)])
    return np.vstack([-spec.other_approach * d, [0.0, 0.0], spec.exit_length * d])


def _profile_accel(profile, t: float) -> float:
    elapsed = 0.0
    for duration, accel in profile:
        if t < elapsed + duration - 1e-12:
            return float(accel)
        elapsed += duration
    return 0.0


def synth_scenario(spec: SynthSpec, seed: int = 0) -> Scenario:
    """Build a scenario whose GT is generated by the simulator's own kinematics."""
    return synth_with_actions(spec, seed)[0]


def synth_with_actions(spec: SynthSpec, seed: int = 0) -> tuple[Scenario, np.ndarray]:
    """Like :func:`synth_scenario`, also returning the exact GT accelerations ``(l_gt, 2)``."""
    if spec.ego_speed < 0 or spec.other_speed < 0:
        raise InvalidSpec("speeds must be non-negative")
    if min(spec.ego_approach, spec.other_approach, spec.exit_length) <= spec.conflict_threshold:
        raise InvalidSpec("approach and exit lengths must exceed the conflict threshold")
    ego_route = build_route(_ego_path(spec), spec.resample_step)
    other_route = build_route(_other_path(spec), spec.resample_step)
    ego_route, other_route, point = assign_conflict_points(
        ego_route, other_route, spec.conflict_threshold)

    rng = np.random.default_rng(seed)
    dt = env.DT
    se, ve, so, vo = 0.0, float(spec.ego_speed), 0.0, float(spec.other_speed)
    seq: dict[str, list[float]] = {k: [] for k in ("se", "ve", "so", "vo")}
    actions = []
    for k in range(MAX_SYNTH_STEPS):
        t = k * dt
        noise = rng.normal(0.0, spec.accel_noise, 2) if spec.accel_noise > 0 else (0.0, 0.0)
        ae = float(np.clip(_profile_accel(spec.ego_profile, t) + noise[0], -env.MAX_ACCEL, env.MAX_ACCEL))
        ao = float(np.clip(_profile_accel(spec.other_profile, t) + noise[1], -env.MAX_ACCEL, env.MAX_ACCEL))
        actions.append((ae, ao))
        se, ve = env.advance(se, ve, ae, ego_route.total_length, dt)
        so, vo = env.advance(so, vo, ao, other_route.total_length, dt)
        for key, val in zip(("se", "ve", "so", "vo"), (se, ve, so, vo)):
            seq[key].append(val)
        if se >= ego_route.conflict_arclength or so >= other_route.conflict_arclength:
            break
    else:
        raise InvalidSpec("neither vehicle reaches its conflict point")

    scenario = Scenario(
        id=spec.id,
        ego_route=ego_route,
        other_route=other_route,
        intersection=point,
        initial_ego=(0.0, float(spec.ego_speed)),
        initial_other=(0.0, float(spec.other_speed)),
        gt_ego_velocities=tuple(seq["ve"]),
        gt_other_velocities=tuple(seq["vo"]),
        gt_ego_arclengths=tuple(seq["se"]),
        gt_other_arclengths=tuple(seq["so"]),
        gt_svo_sequence=gt_svo_from_series(ego_route, other_route,
                                           seq["se"], seq["ve"], seq["so"], seq["vo"]),
        l_gt=len(seq["se"]),
    )
    return scenario, np.array(actions)


DESK_SPECS: tuple[SynthSpec, ...] = (
    # left-turning ego yields to a faster oncoming vehicle
    SynthSpec(ego_approach=28.0, other_approach=24.0, ego_turn_radius=12.0,
              ego_speed=6.0, other_speed=7.0, ego_profile=((2.0, -1.5),), id=(900, 1, 2)),
    # ego close and quick, other brakes
    SynthSpec(ego_approach=20.0, other_approach=30.0, ego_speed=8.0, other_speed=6.0,
              ego_profile=((1.5, 0.5),), other_profile=((2.0, -1.0),), id=(900, 3, 4)),
    # shallow crossing, other already near the junction
    SynthSpec(ego_approach=32.0, other_approach=18.0, crossing_angle_deg=60.0,
              ego_speed=5.0, other_speed=5.0, ego_profile=((1.0, -1.0),),
              other_profile=((2.0, 1.0),), id=(900, 5, 6)),
    # ego accelerates away from a slow other vehicle
    SynthSpec(ego_approach=26.0, other_approach=26.0, crossing_angle_deg=120.0,
              ego_speed=4.0, other_speed=4.0, ego_profile=((2.0, 1.5),),
              other_profile=((1.5, -0.5),), id=(900, 7, 8)),
    # left turn taken ahead of a distant oncoming vehicle
    SynthSpec(ego_approach=22.0, other_approach=36.0, ego_turn_radius=10.0,
              ego_speed=6.0, other_speed=8.0, other_profile=((2.5, -1.0),), id=(900, 9, 10)),
)


def desk_scenarios(seed: int = 0) -> list[Scenario]:
    """The five synthetic crossings used for desk-scale training runs."""
    return [synth_scenario(spec, seed) for spec in DESK_SPECS]
