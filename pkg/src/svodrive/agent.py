"""Soft actor-critic with episode-replay rewards, plus the two baselines.

The trainer follows the post-episode update schedule: an episode is rolled
out with the current stochastic policy, its rewards are finalized once its
length is known, and every finalized step is pushed to the global buffer
followed by one gradient update (critics, actor, temperature, targets).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import env
from .config import TrainConfig
from .errors import BufferUnderfilled, CheckpointError, ConfigInvalid, EmptyDataset
from .nn import (
    ACTION_SCALE,
    AdamState,
    DenseNetwork,
    adam_step,
    deterministic_action,
    head_gradients,
    load_checkpoint,
    mlp,
    sample_action,
    save_checkpoint,
    soft_update,
    split_head,
)
from .rewards import (
    RewardBreakdown,
    RewardWeights,
    Transition,
    combine,
    replay_recompute,
    safety_reward,
    svo_reward,
    velocity_deviation_reward,
)
from .scenario import Scenario
from .svo import state_svo

log = logging.getLogger(__name__)

OBS_DIM = 8
ACT_DIM = 2
VARIANTS = ("svo", "velocity")


# -- replay buffer ------------------------------------------------------------


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.reward)


class ReplayBuffer:
    """Fixed-capacity FIFO store of finalized transitions."""

    def __init__(self, capacity: int = 100000, min_size: int = 1000):
        self.capacity = capacity
        self.min_size = min_size
        self.obs = np.zeros((capacity, OBS_DIM))
        self.action = np.zeros((capacity, ACT_DIM))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, OBS_DIM))
        self.terminal = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def ready(self) -> bool:
        return self._size >= self.min_size

    def add(self, obs, action, reward: float, next_obs, terminal: bool) -> None:
        i = self._next
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = float(terminal)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def add_transition(self, tr: Transition) -> None:
        self.add(tr.obs, tr.action, tr.total, tr.next_obs, tr.terminal)

    def _take(self, idx: np.ndarray) -> Batch:
        return Batch(self.obs[idx], self.action[idx], self.reward[idx],
                     self.next_obs[idx], self.terminal[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if not self.ready or self._size == 0:
            raise BufferUnderfilled(f"buffer holds {self._size} < {self.min_size} transitions")
        return self._take(rng.integers(0, self._size, batch_size))

    def ordered(self) -> Batch:
        """Contents from oldest to newest."""
        start = self._next if self._size == self.capacity else 0
        return self._take((start + np.arange(self._size)) % self.capacity)


# -- policies -----------------------------------------------------------------


class GaussianPolicy:
    """Tanh-squashed Gaussian policy over the two accelerations."""

    kind = "sac"

    def __init__(self, net: DenseNetwork):
        self.net = net

    def act(self, obs, rng: np.random.Generator | None = None, deterministic: bool = False):
        mean, log_std, _ = split_head(self.net(obs))
        if deterministic:
            return deterministic_action(mean)
        return sample_action(mean, log_std, rng.standard_normal(ACT_DIM)).action


class DeterministicPolicy:
    """Behavior-cloning policy: the network output is the pre-squash mean."""

    kind = "bc"

    def __init__(self, net: DenseNetwork):
        self.net = net

    def act(self, obs, rng=None, deterministic: bool = True):
        return deterministic_action(self.net(obs))


# -- ensemble and losses ------------------------------------------------------


class AgentEnsemble:
    """Actor, twin critics, their targets, and the learned temperature."""

    def __init__(self, config: TrainConfig, rng: np.random.Generator):
        h, n = config.hidden_width, config.hidden_layers
        self.policy = mlp(OBS_DIM, 2 * ACT_DIM, h, n, rng)
        self.q1 = mlp(OBS_DIM + ACT_DIM, 1, h, n, rng)
        self.q2 = mlp(OBS_DIM + ACT_DIM, 1, h, n, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = np.array([math.log(config.init_alpha)])
        self.policy_opt = AdamState.like(self.policy.params)
        self.q1_opt = AdamState.like(self.q1.params)
        self.q2_opt = AdamState.like(self.q2.params)
        self.alpha_opt = AdamState.like([self.log_alpha])

    @property
    def alpha(self) -> float:
        return float(math.exp(self.log_alpha[0]))

    def networks(self) -> dict[str, DenseNetwork]:
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target}

    def optimizers(self) -> dict[str, AdamState]:
        return {"policy": self.policy_opt, "q1": self.q1_opt, "q2": self.q2_opt,
                "alpha": self.alpha_opt}

    def actor(self) -> GaussianPolicy:
        return GaussianPolicy(self.policy)


def critic_input(obs, action) -> np.ndarray:
    return np.concatenate([obs, np.asarray(action) / ACTION_SCALE], axis=-1)


def q_target(ens: AgentEnsemble, reward, next_obs, terminal, noise,
             gamma: float = 0.99, mask_terminal: bool = True) -> np.ndarray:
    """Soft Bellman target using the smaller of the two target critics."""
    mean, log_std, _ = split_head(ens.policy(next_obs))
    nxt = sample_action(mean, log_std, noise)
    qin = critic_input(next_obs, nxt.action)
    q_next = np.minimum(ens.q1_target(qin)[:, 0], ens.q2_target(qin)[:, 0])
    bootstrap = q_next - ens.alpha * nxt.log_prob
    if mask_terminal:
        bootstrap = bootstrap * (1.0 - np.asarray(terminal, dtype=float))
    return np.asarray(reward, dtype=float) + gamma * bootstrap


def q_loss(ens: AgentEnsemble, obs, action, y):
    """Half mean squared TD error of each critic; targets are constants."""
    qin = critic_input(obs, action)
    losses, grads = [], []
    for net in (ens.q1, ens.q2):
        q, cache = net.forward(qin)
        diff = q[:, 0] - y
        losses.append(0.5 * float(np.mean(diff * diff)))
        grads.append(net.backward(cache, (diff / len(diff))[:, None])[0])
    return losses, grads


def policy_loss(ens: AgentEnsemble, obs, noise):
    """Returns ``(loss, policy_grads, log_prob)`` for reparameterized actions."""
    n = len(obs)
    alpha = ens.alpha
    out, pcache = ens.policy.forward(obs)
    mean, log_std, mask = split_head(out)
    smp = sample_action(mean, log_std, noise)
    qin = critic_input(obs, smp.action)
    q1, c1 = ens.q1.forward(qin)
    q2, c2 = ens.q2.forward(qin)
    use_q1 = q1[:, 0] <= q2[:, 0]
    q_min = np.where(use_q1, q1[:, 0], q2[:, 0])
    loss = float(np.mean(alpha * smp.log_prob - q_min))

    w1 = use_q1.astype(float)
    _, g1 = ens.q1.backward(c1, (-w1 / n)[:, None], param_grads=False)
    _, g2 = ens.q2.backward(c2, (-(1.0 - w1) / n)[:, None], param_grads=False)
    grad_action = (g1 + g2)[:, OBS_DIM:] / ACTION_SCALE
    dlp_dm, dlp_ds, da_dm, da_ds = head_gradients(smp)
    g_mean = alpha / n * dlp_dm + grad_action * da_dm
    g_logstd = (alpha / n * dlp_ds + grad_action * da_ds) * mask
    grads, _ = ens.policy.backward(pcache, np.concatenate([g_mean, g_logstd], axis=1))
    return loss, grads, smp.log_prob


def alpha_loss(ens: AgentEnsemble, log_prob, target_entropy: float = -2.0):
    """Temperature loss and its derivative with respect to ``log(alpha)``."""
    alpha = ens.alpha
    loss = float(np.mean(-alpha * np.asarray(log_prob) - alpha * target_entropy))
    # d/dlog(alpha) of alpha * c equals alpha * c, i.e. the loss itself
    return loss, np.array([loss])


def update(ens: AgentEnsemble, batch: Batch, config: TrainConfig, rng: np.random.Generator) -> dict:
    """One gradient step on critics, actor and temperature, then target tracking."""
    n = len(batch)
    y = q_target(ens, batch.reward, batch.next_obs, batch.terminal,
                 rng.standard_normal((n, ACT_DIM)), config.gamma, config.mask_terminal_bootstrap)
    (l1, l2), (g1, g2) = q_loss(ens, batch.obs, batch.action, y)
    adam_step(ens.q1.params, g1, ens.q1_opt, config.lr_q)
    adam_step(ens.q2.params, g2, ens.q2_opt, config.lr_q)
    ens.q1.touch()
    ens.q2.touch()

    lp, gp, log_prob = policy_loss(ens, batch.obs, rng.standard_normal((n, ACT_DIM)))
    adam_step(ens.policy.params, gp, ens.policy_opt, config.lr_policy)
    ens.policy.touch()

    la, ga = alpha_loss(ens, log_prob, config.target_entropy)
    adam_step([ens.log_alpha], [ga], ens.alpha_opt, config.lr_alpha)

    soft_update(ens.q1, ens.q1_target, config.tau)
    soft_update(ens.q2, ens.q2_target, config.tau)
    return {"q1_loss": l1, "q2_loss": l2, "policy_loss": lp, "alpha_loss": la}


# -- rollouts -----------------------------------------------------------------


@dataclass
class Episode:
    scenario: Scenario
    transitions: list[Transition]
    cause: str
    reached: str | None
    collided: bool
    s_ego: list[float]
    v_ego: list[float]
    s_other: list[float]
    v_other: list[float]
    phi_ego: list[float]  # per state, steps 0..l_episode
    actions: list[np.ndarray]
    r1_svo: list[float]
    r1_velocity: list[float]

    @property
    def l_episode(self) -> int:
        return len(self.transitions)

    @property
    def final_state_velocities(self) -> tuple[float, float]:
        return self.v_ego[-1], self.v_other[-1]


def run_episode(policy, scenario: Scenario, rng: np.random.Generator | None = None,
                deterministic: bool = False, variant: str = "svo") -> Episode:
    """Roll one episode to termination, storing steps with their online reward terms."""
    if variant not in VARIANTS:
        raise ConfigInvalid(f"unknown reward variant {variant!r}")
    ce = scenario.ego_route.conflict_arclength
    co = scenario.other_route.conflict_arclength
    gt_svo, l_gt = scenario.gt_svo_sequence, scenario.l_gt
    state = env.reset(scenario)
    obs = env.observe(state, scenario.intersection)
    ep = Episode(scenario, [], "", None, False, [state.ego.s], [state.ego.v],
                 [state.other.s], [state.other.v], [state_svo(state, ce, co)[0]], [], [], [])
    while True:
        action = np.asarray(policy.act(obs, rng, deterministic), dtype=float)
        out = env.step(state, action, scenario)
        nxt = out.next_state
        phi = state_svo(nxt, ce, co)[0]
        r1_svo = svo_reward(phi, nxt.t, gt_svo, l_gt)
        r1_vel = velocity_deviation_reward(nxt.ego.v, nxt.other.v, nxt.t,
                                           scenario.gt_ego_velocities,
                                           scenario.gt_other_velocities, l_gt)
        next_obs = env.observe(nxt, scenario.intersection)
        ep.transitions.append(Transition(
            step=state.t, obs=obs, action=action,
            r1=r1_svo if variant == "svo" else r1_vel,
            r4=safety_reward(out.collided), next_obs=next_obs,
            done=out.done, terminal=out.terminal,
            v_ego_next=nxt.ego.v, v_other_next=nxt.other.v,
        ))
        ep.actions.append(action)
        ep.r1_svo.append(r1_svo)
        ep.r1_velocity.append(r1_vel)
        ep.s_ego.append(nxt.ego.s)
        ep.v_ego.append(nxt.ego.v)
        ep.s_other.append(nxt.other.s)
        ep.v_other.append(nxt.other.v)
        ep.phi_ego.append(phi)
        state, obs = nxt, next_obs
        if out.done:
            ep.cause, ep.reached, ep.collided = out.cause, out.reached, out.collided
            return ep


def svo_step_rewards(ep: Episode, weights: RewardWeights = RewardWeights()) -> list[float]:
    """Score an episode's steps with the SVO reward, whatever it was trained on."""
    tr = [replace_r1(t, r1) for t, r1 in zip(ep.transitions, ep.r1_svo)]
    return [t.total for t in replay_recompute(tr, ep.l_episode, ep.scenario.l_gt, weights)]


def replace_r1(tr: Transition, r1: float) -> Transition:
    return replace(tr, r1=r1, r2=None, r3=None, total=None)


# -- training -----------------------------------------------------------------

LOG_FIELDS = ("episode", "scenario", "l_episode", "l_gt", "cause",
              "avg_step_reward", "svo_avg_step_reward", "alpha", "updates")


@dataclass
class TrainResult:
    ensemble: AgentEnsemble
    config: TrainConfig
    seed: int
    variant: str
    log: list[dict] = field(default_factory=list)
    rngs: dict[str, np.random.Generator] = field(default_factory=dict)


def make_rngs(seed: int) -> dict[str, np.random.Generator]:
    names = ("init", "explore", "sample", "schedule")
    return {n: np.random.default_rng(s) for n, s in zip(names, np.random.SeedSequence(seed).spawn(4))}


def train(config: TrainConfig, scenarios: Sequence[Scenario], seed: int | None = None,
          variant: str = "svo", progress: Callable[[dict], None] | None = None) -> TrainResult:
    """Train SACER; ``variant='velocity'`` gives the SACER-V baseline."""
    if not scenarios:
        raise ConfigInvalid("training needs at least one scenario")
    if variant not in VARIANTS:
        raise ConfigInvalid(f"unknown reward variant {variant!r}")
    seed = config.seed if seed is None else seed
    rngs = make_rngs(seed)
    ens = AgentEnsemble(config, rngs["init"])
    buffer = ReplayBuffer(config.buffer_size, config.buffer_min_size)
    weights = config.weights
    actor = ens.actor()
    result = TrainResult(ens, config, seed, variant, rngs=rngs)
    updates = 0

    for episode in range(config.episodes):
        sc = scenarios[int(rngs["schedule"].integers(len(scenarios)))]
        ep = run_episode(actor, sc, rngs["explore"], deterministic=False, variant=variant)
        finalized = replay_recompute(ep.transitions, ep.l_episode, sc.l_gt, weights)
        for tr in finalized:
            buffer.add_transition(tr)
            if buffer.ready:
                update(ens, buffer.sample(config.batch_size, rngs["sample"]), config, rngs["sample"])
                updates += 1
        avg = sum(t.total for t in finalized) / ep.l_episode
        svo_avg = avg if variant == "svo" else sum(svo_step_rewards(ep, weights)) / ep.l_episode
        row = {"episode": episode, "scenario": sc.name, "l_episode": ep.l_episode,
               "l_gt": sc.l_gt, "cause": ep.cause, "avg_step_reward": avg,
               "svo_avg_step_reward": svo_avg, "alpha": ens.alpha, "updates": updates}
        result.log.append(row)
        if progress is not None:
            progress(row)
    return result


# -- behavior cloning ---------------------------------------------------------


@dataclass
class BCResult:
    policy: DeterministicPolicy
    optimizer: AdamState
    config: TrainConfig
    seed: int
    log: list[dict] = field(default_factory=list)


def bc_dataset(scenarios: Sequence[Scenario]) -> tuple[np.ndarray, np.ndarray]:
    """GT observations at steps 0..l_gt-1 with finite-difference acceleration labels."""
    obs, labels = [], []
    for sc in scenarios:
        states = sc.gt_states()[:-1]
        obs.extend(env.observe(s, sc.intersection) for s in states)
        labels.append(sc.gt_accelerations())
    if not obs:
        raise EmptyDataset("no ground-truth steps to learn from")
    return np.array(obs), np.concatenate(labels)


def bc_loss(net: DenseNetwork, obs, labels):
    """Mean squared action error and its parameter gradients."""
    out, cache = net.forward(obs)
    th = np.tanh(out)
    err = ACTION_SCALE * th - labels
    loss = float(np.mean(err * err))
    grad_out = 2.0 * err / err.size * ACTION_SCALE * (1.0 - th * th)
    return loss, net.backward(cache, grad_out)[0]


def train_bc(scenarios: Sequence[Scenario], config: TrainConfig, seed: int | None = None,
             epochs: int | None = None, data: tuple[np.ndarray, np.ndarray] | None = None) -> BCResult:
    seed = config.seed if seed is None else seed
    epochs = config.bc_epochs if epochs is None else epochs
    obs, labels = data if data is not None else bc_dataset(scenarios)
    if len(obs) == 0:
        raise EmptyDataset("no ground-truth steps to learn from")
    rngs = make_rngs(seed)
    net = mlp(OBS_DIM, ACT_DIM, config.hidden_width, config.hidden_layers, rngs["init"])
    opt = AdamState.like(net.params)
    result = BCResult(DeterministicPolicy(net), opt, config, seed)
    for epoch in range(epochs):
        order = rngs["sample"].permutation(len(obs))
        for start in range(0, len(obs), config.bc_batch_size):
            idx = order[start:start + config.bc_batch_size]
            _, grads = bc_loss(net, obs[idx], labels[idx])
            adam_step(net.params, grads, opt, config.bc_lr)
            net.touch()
        loss, _ = bc_loss(net, obs, labels)
        result.log.append({"epoch": epoch, "loss": loss})
    return result


# -- persistence --------------------------------------------------------------


def _adam_arrays(opt: AdamState, prefix: str) -> dict[str, np.ndarray]:
    arrays = {}
    for i, (m, v) in enumerate(zip(opt.m, opt.v)):
        arrays[f"{prefix}.m.{i}"] = m
        arrays[f"{prefix}.v.{i}"] = v
    return arrays


def _load_adam(opt: AdamState, arrays, prefix: str, t: int) -> None:
    for i, (m, v) in enumerate(zip(opt.m, opt.v)):
        m[...] = arrays[f"{prefix}.m.{i}"]
        v[...] = arrays[f"{prefix}.v.{i}"]
    opt.t = t


def save_sac(path, result: TrainResult) -> None:
    ens = result.ensemble
    arrays = {"log_alpha": ens.log_alpha}
    for name, net in ens.networks().items():
        arrays.update(net.state_arrays(name))
    for name, opt in ens.optimizers().items():
        arrays.update(_adam_arrays(opt, f"adam.{name}"))
    meta = {
        "model": "sacer-svo" if result.variant == "svo" else "sacer-v",
        "config": result.config.to_dict(),
        "config_fingerprint": result.config.fingerprint(),
        "seed": result.seed,
        "alpha": ens.alpha,
        "adam_steps": {n: o.t for n, o in ens.optimizers().items()},
        "rng_states": {n: g.bit_generator.state for n, g in result.rngs.items()},
    }
    save_checkpoint(path, arrays, meta)


def save_bc(path, result: BCResult) -> None:
    arrays = result.policy.net.state_arrays("policy")
    arrays.update(_adam_arrays(result.optimizer, "adam.policy"))
    meta = {"model": "bc", "config": result.config.to_dict(),
            "config_fingerprint": result.config.fingerprint(), "seed": result.seed,
            "adam_steps": {"policy": result.optimizer.t}}
    save_checkpoint(path, arrays, meta)


def load_sac(path) -> TrainResult:
    from .config import from_dict
    arrays, meta = load_checkpoint(path)
    if meta.get("model") not in ("sacer-svo", "sacer-v"):
        raise CheckpointError(f"{path} holds a {meta.get('model')!r} model, not SACER")
    config = from_dict(meta["config"])
    ens = AgentEnsemble(config, np.random.default_rng(0))
    for name, net in ens.networks().items():
        net.load_arrays(arrays, name)
    ens.log_alpha[...] = arrays["log_alpha"]
    for name, opt in ens.optimizers().items():
        _load_adam(opt, arrays, f"adam.{name}", meta["adam_steps"][name])
    rngs = {}
    for name, state in meta["rng_states"].items():
        g = np.random.default_rng()
        g.bit_generator.state = state
        rngs[name] = g
    variant = "svo" if meta["model"] == "sacer-svo" else "velocity"
    return TrainResult(ens, config, meta["seed"], variant, rngs=rngs)


def load_policy(path):
    """Evaluation-time policy from any checkpoint; returns ``(policy, meta)``."""
    from .config import from_dict
    arrays, meta = load_checkpoint(path)
    config = from_dict(meta["config"])
    if meta.get("model") == "bc":
        net = mlp(OBS_DIM, ACT_DIM, config.hidden_width, config.hidden_layers)
        net.load_arrays(arrays, "policy")
        return DeterministicPolicy(net), meta
    if meta.get("model") in ("sacer-svo", "sacer-v"):
        net = mlp(OBS_DIM, 2 * ACT_DIM, config.hidden_width, config.hidden_layers)
        net.load_arrays(arrays, "policy")
        return GaussianPolicy(net), meta
    raise CheckpointError(f"{path}: unknown model kind {meta.get('model')!r}")


def write_log(rows: Sequence[dict], path, fields: Sequence[str] | None = None) -> None:
    fields = list(fields or (rows[0].keys() if rows else LOG_FIELDS))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_log(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
