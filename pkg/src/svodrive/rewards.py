"""Per-step reward terms and the episode-replay recomputation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import EmptyEpisode, LengthOutOfRange

SVO_ERROR_SCALE = 0.5
OVERTIME_PENALTY = 0.5
VELOCITY_SCALE = 20.0
COLLISION_PENALTY = -10.0


@dataclass(frozen=True)
class RewardWeights:
    alpha1: float = -1.0
    alpha2: float = -2.0
    alpha3: float = -1.0
    alpha4: float = 1.0


@dataclass(frozen=True)
class RewardBreakdown:
    r1: float
    r2: float
    r3: float
    r4: float

    def total(self, weights: RewardWeights = RewardWeights()) -> float:
        return combine(self, weights)


@dataclass(frozen=True, eq=False)
class Transition:
    """One stored environment step.

    ``r2``, ``r3`` and ``total`` stay ``None`` until the episode finishes and
    :func:`replay_recompute` fills them in.  ``terminal`` marks task endings
    (collision, conflict point reached) whose value is not bootstrapped;
    ``done`` also covers time-limit truncation.
    """

    step: int
    obs: np.ndarray
    action: np.ndarray
    r1: float
    r4: float
    next_obs: np.ndarray
    done: bool
    terminal: bool
    v_ego_next: float
    v_other_next: float
    r2: float | None = None
    r3: float | None = None
    total: float | None = None


def svo_reward(phi_agent: float, t_next: int, gt_svo: Sequence[float], horizon: int) -> float:
    """SVO error magnitude, clipped to [0, 1]; 0.5 once past the GT horizon.

    ``gt_svo[k]`` holds the ground-truth SVO after ``k + 1`` steps.
    """
    if t_next <= horizon:
        return min(1.0, abs(gt_svo[t_next - 1] - phi_agent) / SVO_ERROR_SCALE)
    return OVERTIME_PENALTY


def velocity_deviation_reward(
    v_next: float, v_other_next: float, t_next: int,
    gt_ego_v: Sequence[float], gt_other_v: Sequence[float], horizon: int,
) -> float:
    """Velocity-tracking replacement for the SVO term (SACER-V baseline)."""
    if t_next <= horizon:
        dev = abs(gt_ego_v[t_next - 1] - v_next) + abs(gt_other_v[t_next - 1] - v_other_next)
        return min(1.0, dev / VELOCITY_SCALE)
    return OVERTIME_PENALTY


def episode_length_reward(l_episode: int, l_gt: int) -> float:
    if not 1 <= l_episode <= 2 * l_gt:
        raise LengthOutOfRange(f"episode length {l_episode} outside [1, {2 * l_gt}]")
    return abs(l_episode - l_gt) / l_gt


def velocity_reward(v_next: float, v_other_next: float, l_episode: int, l_gt: int) -> float:
    raw = -((v_next + v_other_next) / VELOCITY_SCALE) * ((l_episode - l_gt) / l_gt)
    return min(1.0, max(-1.0, raw))


def safety_reward(collided: bool) -> float:
    return COLLISION_PENALTY if collided else 0.0


def combine(b: RewardBreakdown, weights: RewardWeights = RewardWeights()) -> float:
    return weights.alpha1 * b.r1 + weights.alpha2 * b.r2 + weights.alpha3 * b.r3 + weights.alpha4 * b.r4


def replay_recompute(
    episode: Sequence[Transition], l_episode: int, l_gt: int,
    weights: RewardWeights = RewardWeights(),
) -> list[Transition]:
    """Fill in the episode-level terms of every stored step, keeping order."""
    if not episode:
        raise EmptyEpisode("episode buffer is empty")
    r2 = episode_length_reward(l_episode, l_gt)
    out = []
    for tr in episode:
        r3 = velocity_reward(tr.v_ego_next, tr.v_other_next, l_episode, l_gt)
        total = combine(RewardBreakdown(tr.r1, r2, r3, tr.r4), weights)
        out.append(replace(tr, r2=r2, r3=r3, total=total))
    return out
