"""Independent reference implementations used as test oracles."""

import math

import numpy as np

from svodrive.env import VehicleState
from svodrive.rewards import Transition

_GRID_CACHE = {}


def _local_grid(step):
    if step not in _GRID_CACHE:
        xs = np.arange(-2.5, 2.5 + step / 2, step)
        ys = np.arange(-1.0, 1.0 + step / 2, step)
        gx, gy = np.meshgrid(xs, ys)
        _GRID_CACHE[step] = np.column_stack([gx.ravel(), gy.ravel()])
    return _GRID_CACHE[step]


def _to_world(v, pts):
    c, s = math.cos(v.heading), math.sin(v.heading)
    return pts @ np.array([[c, s], [-s, c]]) + (v.x, v.y)


def _inside(v, pts):
    c, s = math.cos(v.heading), math.sin(v.heading)
    d = pts - (v.x, v.y)
    lx = d[:, 0] * c + d[:, 1] * s
    ly = -d[:, 0] * s + d[:, 1] * c
    return (np.abs(lx) <= 2.5) & (np.abs(ly) <= 1.0)


def rectangles_overlap_sampled(a: VehicleState, b: VehicleState, step=0.05) -> bool:
    """Overlap test by point containment on a grid covering each 5 x 2 m footprint."""
    grid = _local_grid(step)
    return bool(_inside(b, _to_world(a, grid)).any() or _inside(a, _to_world(b, grid)).any())


def random_rectangle_pair(rng, spread=7.0):
    a = VehicleState(0.0, 0.0, 0.0, 0.0, rng.uniform(-math.pi, math.pi))
    x, y = rng.uniform(-spread, spread, 2)
    b = VehicleState(x, y, 0.0, 0.0, rng.uniform(-math.pi, math.pi))
    return a, b


def random_episode(rng, length=None):
    """Online-stage transitions with r1, r4 and next velocities filled in."""
    n = int(length or rng.integers(1, 60))
    collide_last = rng.random() < 0.3
    out = []
    for k in range(n):
        done = k == n - 1
        out.append(Transition(
            step=k,
            obs=rng.normal(size=8),
            action=rng.uniform(-3, 3, 2),
            r1=float(rng.uniform(0, 1)),
            r4=-10.0 if done and collide_last else 0.0,
            next_obs=rng.normal(size=8),
            done=done,
            terminal=done,
            v_ego_next=float(rng.uniform(0, 15)),
            v_other_next=float(rng.uniform(0, 15)),
        ))
    return out


def recompute_oracle(episode, l_episode, l_gt, a=(-1.0, -2.0, -1.0, 1.0)):
    """Per-step totals written straight from the reward definitions."""
    r2 = abs(l_episode - l_gt) / l_gt
    totals = []
    for tr in episode:
        r3 = -((tr.v_ego_next + tr.v_other_next) / 20.0) * ((l_episode - l_gt) / l_gt)
        r3 = max(-1.0, min(1.0, r3))
        totals.append((r2, r3, a[0] * tr.r1 + a[1] * r2 + a[2] * r3 + a[3] * tr.r4))
    return totals


def central_difference(f, arrays, h=1e-5, coords=None, rng=None):
    """Numerical gradient of scalar ``f()`` w.r.t. every array in ``arrays``.

    ``coords`` limits each array to that many randomly chosen entries; the
    result then holds ``(flat_indices, values)`` pairs instead of full arrays.
    """
    out = []
    for arr in arrays:
        flat = arr.reshape(-1)
        if coords is None or coords >= flat.size:
            idx = np.arange(flat.size)
        else:
            idx = np.sort(rng.choice(flat.size, coords, replace=False))
        vals = np.empty(len(idx))
        for j, i in enumerate(idx):
            keep = flat[i]
            flat[i] = keep + h
            up = f()
            flat[i] = keep - h
            down = f()
            flat[i] = keep
            vals[j] = (up - down) / (2 * h)
        out.append((idx, vals))
    return out


def gradient_mismatch(analytic, numeric, rel=1e-4, floor=1e-8):
    """Worst violation of ``|a - n| <= rel * max(|a|, |n|) + floor``; <= 0 means all pass."""
    worst = -np.inf
    for a, (idx, n) in zip(analytic, numeric):
        a = np.asarray(a).reshape(-1)[idx]
        gap = np.abs(a - n) - (rel * np.maximum(np.abs(a), np.abs(n)) + floor)
        worst = max(worst, float(gap.max()) if gap.size else -np.inf)
    return worst


def max_relative_error(analytic, numeric, negligible=1e-6):
    """Largest ``|a - n| / max(|a|, |n|)`` over entries that are not negligibly small."""
    worst = 0.0
    for a, (idx, n) in zip(analytic, numeric):
        a = np.asarray(a).reshape(-1)[idx]
        scale = np.maximum(np.abs(a), np.abs(n))
        keep = scale > negligible
        if keep.any():
            worst = max(worst, float((np.abs(a - n)[keep] / scale[keep]).max()))
    return worst


def dense_forward_oracle(weights, biases, x):
    """Affine chain written with explicit loops over layers and units."""
    h = [float(v) for v in x]
    for li, (w, b) in enumerate(zip(weights, biases)):
        nxt = []
        for j in range(w.shape[1]):
            acc = float(b[j])
            for i in range(w.shape[0]):
                acc += h[i] * float(w[i, j])
            nxt.append(acc if li == len(weights) - 1 else max(acc, 0.0))
        h = nxt
    return np.array(h)


def ensemble_gradient_mismatch(ens, rng, batch=3, coords=None, h=1e-5, stats=None):
    """Worst finite-difference violation over the critic, actor and temperature losses.

    When ``stats`` is a list, the worst relative error of each check is appended to it.
    """
    from svodrive.agent import alpha_loss, policy_loss, q_loss

    obs = rng.normal(size=(batch, 8))
    action = rng.uniform(-3, 3, (batch, 2))
    y = rng.normal(size=batch)
    noise = rng.normal(size=(batch, 2))
    worst = -np.inf

    _, (g1, g2) = q_loss(ens, obs, action, y)
    for j, (net, g) in enumerate(((ens.q1, g1), (ens.q2, g2))):
        num = central_difference(lambda: q_loss(ens, obs, action, y)[0][j], net.params, h, coords, rng)
        worst = max(worst, gradient_mismatch(g, num))
        if stats is not None:
            stats.append(max_relative_error(g, num))

    _, gp, logp = policy_loss(ens, obs, noise)
    num = central_difference(lambda: policy_loss(ens, obs, noise)[0], ens.policy.params, h, coords, rng)
    worst = max(worst, gradient_mismatch(gp, num))
    if stats is not None:
        stats.append(max_relative_error(gp, num))

    _, ga = alpha_loss(ens, logp)
    num = central_difference(lambda: alpha_loss(ens, logp)[0], [ens.log_alpha], h)
    worst = max(worst, gradient_mismatch([ga], num))
    if stats is not None:
        stats.append(max_relative_error([ga], num))
    return worst
