"""Closed-loop evaluation metrics, reward curves and s-t curve exports."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agent import Episode, run_episode, svo_step_rewards
from .errors import EmptyLog, NoCompletedEpisodes, NoScenarios
from .rewards import RewardWeights, replay_recompute
from .scenario import Scenario

FACE_OFF_SPEED = 0.2


@dataclass
class ScenarioResult:
    scenario: str
    cause: str
    arrival: str | None
    gt_arrival: str | None
    l_episode: int
    l_gt: int
    priority_ok: bool
    face_off: bool
    collided: bool


@dataclass
class EvalReport:
    model: str
    split: str
    results: list[ScenarioResult]
    priority_accuracy: float
    episode_length_error: float | None
    collisions: int
    face_off_count: int
    episodes: list[Episode] = field(default_factory=list, repr=False, compare=False)

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def collision_times(self) -> str:
        return f"{self.collisions}/{self.total}"

    def table_row(self) -> dict:
        """Summary in the shape of a results-table row."""
        return {
            "model": self.model,
            "split": self.split,
            "priority_accuracy": self.priority_accuracy,
            "episode_length_error": self.episode_length_error,
            "collision_times": self.collision_times,
        }

    def to_dict(self) -> dict:
        return {
            **self.table_row(),
            "collisions": self.collisions,
            "total": self.total,
            "face_off_count": self.face_off_count,
            "scenarios": [asdict(r) for r in self.results],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n",
                              encoding="utf-8")


def is_face_off(ep: Episode) -> bool:
    """Timed out with both vehicles (nearly) stopped short of their conflict points."""
    if ep.cause != "timeout":
        return False
    ve, vo = ep.final_state_velocities
    sc = ep.scenario
    return (ve < FACE_OFF_SPEED and vo < FACE_OFF_SPEED
            and ep.s_ego[-1] < sc.ego_route.conflict_arclength
            and ep.s_other[-1] < sc.other_route.conflict_arclength)


def episode_length_error(pairs: Iterable[tuple[int, int]]) -> float:
    """Mean relative error ``|l_episode - l_gt| / l_gt`` over ``(l_episode, l_gt)`` pairs."""
    errs = [abs(l_ep - l_gt) / l_gt for l_ep, l_gt in pairs]
    if not errs:
        raise NoCompletedEpisodes("no completed episodes to average")
    return float(np.mean(errs))


def summarize(episodes: Sequence[Episode], model: str = "", split: str = "",
              exclude_collisions: bool = True) -> EvalReport:
    results = []
    for ep in episodes:
        sc = ep.scenario
        results.append(ScenarioResult(
            scenario=sc.name, cause=ep.cause, arrival=ep.reached, gt_arrival=sc.gt_arrival,
            l_episode=ep.l_episode, l_gt=sc.l_gt,
            priority_ok=ep.reached is not None and ep.reached == sc.gt_arrival,
            face_off=is_face_off(ep), collided=ep.collided,
        ))
    pairs = [(r.l_episode, r.l_gt) for r in results if not (exclude_collisions and r.collided)]
    try:
        length_err = episode_length_error(pairs)
    except NoCompletedEpisodes:
        length_err = None
    return EvalReport(
        model=model,
        split=split,
        results=results,
        priority_accuracy=sum(r.priority_ok for r in results) / len(results),
        episode_length_error=length_err,
        collisions=sum(r.collided for r in results),
        face_off_count=sum(r.face_off for r in results),
        episodes=list(episodes),
    )


def evaluate(policy, scenarios: Sequence[Scenario], seed: int = 0, model: str = "",
             split: str = "", exclude_collisions: bool = True) -> EvalReport:
    """Deterministic rollouts of ``policy`` on every scenario."""
    if not scenarios:
        raise NoScenarios("nothing to evaluate")
    rng = np.random.default_rng(seed)  # unused by deterministic policies
    episodes = [run_episode(policy, sc, rng, deterministic=True) for sc in scenarios]
    return summarize(episodes, model, split, exclude_collisions)


# -- curves -------------------------------------------------------------------


def moving_average(values: Sequence[float], window: int = 200) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what is available."""
    x = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    # direct window means rather than cumulative-sum differences, so window 1
    # and constant series come back exactly
    out = np.empty(len(x))
    head = min(window - 1, len(x))
    for i in range(head):
        out[i] = x[:i + 1].mean()
    if len(x) >= window:
        out[window - 1:] = np.lib.stride_tricks.sliding_window_view(x, window).mean(axis=1)
    return out


def reward_curve(log_rows: Sequence[dict], window: int = 200,
                 column: str = "avg_step_reward") -> np.ndarray:
    if not log_rows:
        raise EmptyLog("training log is empty")
    return moving_average([float(r[column]) for r in log_rows], window)


def rescore_episode(ep: Episode, weights: RewardWeights = RewardWeights()) -> list[float]:
    """Per-step SVO-reward totals of a rollout, regardless of the reward it was trained with."""
    return svo_step_rewards(ep, weights)


# -- exports ------------------------------------------------------------------

TRAJECTORY_FIELDS = ("t", "s_ego", "v_ego", "a_ego", "s_other", "v_other", "a_other",
                     "phi_ego", "r1", "r2", "r3", "r4", "total")


def trajectory_rows(ep: Episode, weights: RewardWeights = RewardWeights()) -> list[dict]:
    """Per-step log records with finalized reward terms."""
    final = replay_recompute(ep.transitions, ep.l_episode, ep.scenario.l_gt, weights)
    rows = []
    for k, tr in enumerate(final):
        rows.append({
            "t": k + 1, "s_ego": ep.s_ego[k + 1], "v_ego": ep.v_ego[k + 1],
            "a_ego": float(ep.actions[k][0]), "s_other": ep.s_other[k + 1],
            "v_other": ep.v_other[k + 1], "a_other": float(ep.actions[k][1]),
            "phi_ego": ep.phi_ego[k + 1], "r1": tr.r1, "r2": tr.r2, "r3": tr.r3,
            "r4": tr.r4, "total": tr.total,
        })
    return rows


def _write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_trajectory_log(ep: Episode, path, weights: RewardWeights = RewardWeights()) -> None:
    _write_csv(path, TRAJECTORY_FIELDS, trajectory_rows(ep, weights))


ST_FIELDS = ("t", "policy_s_ego", "policy_s_other", "gt_s_ego", "gt_s_other",
             "conflict_s_ego", "conflict_s_other")


def st_rows(ep: Episode, scenario: Scenario) -> list[dict]:
    gt_e, gt_o = scenario.gt_arclength_series()
    n = max(len(ep.s_ego), len(gt_e))
    rows = []
    for k in range(n):
        rows.append({
            "t": round(k * scenario.dt, 10),
            "policy_s_ego": ep.s_ego[k] if k < len(ep.s_ego) else "",
            "policy_s_other": ep.s_other[k] if k < len(ep.s_other) else "",
            "gt_s_ego": float(gt_e[k]) if k < len(gt_e) else "",
            "gt_s_other": float(gt_o[k]) if k < len(gt_o) else "",
            "conflict_s_ego": scenario.ego_route.conflict_arclength,
            "conflict_s_other": scenario.other_route.conflict_arclength,
        })
    return rows


def export_st_curves(ep: Episode, scenario: Scenario, path, svg_path=None) -> None:
    """Write the s-t curves of a rollout and its ground truth as CSV (optionally SVG)."""
    rows = st_rows(ep, scenario)
    _write_csv(path, ST_FIELDS, rows)
    if svg_path is not None:
        render_st_svg(rows, svg_path, title=scenario.name)


def read_st_curves(path) -> dict[str, list[float]]:
    cols: dict[str, list[float]] = {f: [] for f in ST_FIELDS}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for f in ST_FIELDS:
                if row[f] != "":
                    cols[f].append(float(row[f]))
    return cols


def render_st_svg(rows: Sequence[dict], path, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, style in (("policy_s_ego", "b-"), ("policy_s_other", "r-"),
                       ("gt_s_ego", "b--"), ("gt_s_other", "r--")):
        pts = [(r["t"], r[key]) for r in rows if r[key] != ""]
        ax.plot(*zip(*pts), style, label=key)
    for key, color in (("conflict_s_ego", "b"), ("conflict_s_other", "r")):
        ax.axhline(rows[0][key], color=color, lw=0.6, ls=":")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("s [m]")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
