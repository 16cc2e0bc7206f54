"""Small float64 dense-network engine with manual backprop and Adam."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, DimensionMismatch, ShapeMismatch, StaleCache

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
ACTION_SCALE = 3.0
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class Cache:
    version: int
    network_id: int
    inputs: list  # input to each layer
    batched: bool


class DenseNetwork:
    """ReLU multilayer perceptron with an identity output layer."""

    def __init__(self, sizes, rng: np.random.Generator | None = None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = sizes
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            if rng is None:
                w, b = np.zeros((fan_in, fan_out)), np.zeros(fan_out)
            else:
                bound = 1.0 / math.sqrt(fan_in)
                w = rng.uniform(-bound, bound, (fan_in, fan_out))
                b = rng.uniform(-bound, bound, fan_out)
            self.weights.append(w)
            self.biases.append(b)
        self.version = 0

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def touch(self) -> None:
        """Mark parameters as modified; outstanding caches become stale."""
        self.version += 1

    def copy(self) -> "DenseNetwork":
        clone = DenseNetwork(self.sizes)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def forward(self, x) -> tuple[np.ndarray, Cache]:
        x = np.asarray(x, dtype=float)
        batched = x.ndim == 2
        h = x if batched else x[None, :]
        if h.shape[1] != self.sizes[0]:
            raise DimensionMismatch(f"expected input width {self.sizes[0]}, got {h.shape[1]}")
        inputs = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return (h if batched else h[0]), Cache(self.version, id(self), inputs, batched)

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: Cache, grad_out, param_grads: bool = True):
        """Reverse pass; returns ``(grads, grad_input)``.

        ``grads`` follows the ordering of :attr:`params` and is ``None`` when
        ``param_grads`` is false.
        """
        if cache.network_id != id(self) or cache.version != self.version:
            raise StaleCache("forward cache does not match current parameters")
        g = np.asarray(grad_out, dtype=float)
        if not cache.batched:
            g = g[None, :]
        grads = [None] * (2 * len(self.weights)) if param_grads else None
        for i in range(len(self.weights) - 1, -1, -1):
            inp = cache.inputs[i]
            if param_grads:
                grads[2 * i] = inp.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (inp > 0.0)
        return grads, (g if cache.batched else g[0])

    # -- persistence ---------------------------------------------------------

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.{i}": p for i, p in enumerate(self.params)}

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str) -> None:
        for i, p in enumerate(self.params):
            src = arrays[f"{prefix}.{i}"]
            if src.shape != p.shape:
                raise ShapeMismatch(f"{prefix}.{i}: {src.shape} != {p.shape}")
            p[...] = src
        self.touch()


def mlp(in_dim: int, out_dim: int, hidden: int = 256, layers: int = 2,
        rng: np.random.Generator | None = None) -> DenseNetwork:
    return DenseNetwork([in_dim] + [hidden] * layers + [out_dim], rng)


def soft_update(online: DenseNetwork, target: DenseNetwork, tau: float) -> None:
    if online.sizes != target.sizes:
        raise ShapeMismatch("online and target networks differ in shape")
    for po, pt in zip(online.params, target.params):
        pt *= 1.0 - tau
        pt += tau * po
    target.touch()


# -- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float):
    """In-place Adam update with bias correction; returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("parameter, gradient and moment lists differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"shape mismatch {p.shape} vs {np.shape(g)}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# -- squashed Gaussian head ------------------------------------------------------


def split_head(out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split policy output into mean, clamped log-std and the clamp's pass-through mask."""
    mean, raw = np.split(out, 2, axis=-1)
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std, (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)


def _log_dtanh(u: np.ndarray) -> np.ndarray:
    """``log(1 - tanh(u)**2)`` without cancellation for large |u|."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class HeadSample:
    action: np.ndarray
    log_prob: np.ndarray  # summed over action dimensions
    pre_squash: np.ndarray
    noise: np.ndarray
    std: np.ndarray


def sample_action(mean, log_std, noise) -> HeadSample:
    mean, log_std, noise = (np.asarray(a, dtype=float) for a in (mean, log_std, noise))
    std = np.exp(log_std)
    u = mean + std * noise
    action = ACTION_SCALE * np.tanh(u)
    per_dim = -0.5 * noise**2 - log_std - _HALF_LOG_2PI - math.log(ACTION_SCALE) - _log_dtanh(u)
    return HeadSample(action, per_dim.sum(axis=-1), u, noise, std)


def log_prob(mean, log_std, action) -> np.ndarray:
    """Density of an already-squashed action (inverse of :func:`sample_action`)."""
    mean, log_std, action = (np.asarray(a, dtype=float) for a in (mean, log_std, action))
    u = np.arctanh(action / ACTION_SCALE)
    noise = (u - mean) / np.exp(log_std)
    per_dim = -0.5 * noise**2 - log_std - _HALF_LOG_2PI - math.log(ACTION_SCALE) - _log_dtanh(u)
    return per_dim.sum(axis=-1)


def deterministic_action(mean) -> np.ndarray:
    return ACTION_SCALE * np.tanh(np.asarray(mean, dtype=float))


def head_gradients(sample: HeadSample):
    """Pathwise derivatives with the noise held fixed.

    Returns ``(dlogp_dmean, dlogp_dlogstd, da_dmean, da_dlogstd)``, each
    elementwise per action dimension.
    """
    th = np.tanh(sample.pre_squash)
    dlogp_dmean = 2.0 * th
    dlogp_dlogstd = -1.0 + 2.0 * th * sample.std * sample.noise
    da_dmean = ACTION_SCALE * (1.0 - th * th)
    da_dlogstd = da_dmean * sample.std * sample.noise
    return dlogp_dmean, dlogp_dlogstd, da_dmean, da_dlogstd


# -- checkpoint files ---------------------------------------------------------

MAGIC = b"SVODRIVE-CKPT\n"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write arrays and JSON metadata; byte-identical for identical inputs.

    The file is written next to ``path`` and renamed into place.
    """
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    payload = b"".join(blobs)
    header = {
        "version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "arrays": entries,
        "meta": meta,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(head + b"\n")
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    nl = data.find(b"\n", len(MAGIC))
    try:
        header = json.loads(data[len(MAGIC):nl].decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        raise CheckpointError(f"{path}: corrupted header (checksum cannot be verified)") from None
    payload = data[nl + 1:]
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    arrays = {}
    for e in header["arrays"]:
        chunk = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(tuple(e["shape"])).copy()
    return arrays, header["meta"]
