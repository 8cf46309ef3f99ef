"""Discrete-action deep Q-network in plain numpy.

MLP with ReLU hidden layers, Huber TD loss with a target network, Adam,
uniform replay, epsilon-greedy training, and a JSON policy file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

FEATURE_ORDER = (
    "x_gnb", "x_gnb_ue", "y_gnb_ue", "x_gnb_obs", "y_gnb_obs",
    "vx_gnb", "vx_ue", "vy_ue", "vx_obs", "vy_obs", "L_status",
)
N_FEATURES = len(FEATURE_ORDER)
N_ACTIONS = 3
POLICY_FORMAT = "visionran-dqn-policy"
POLICY_VERSION = 1


class DimensionMismatch(ValueError):
    pass


class Diverged(RuntimeError):
    pass


class CorruptPolicy(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


class QNetwork:
    def __init__(self, sizes=(N_FEATURES, 64, 64, N_ACTIONS), seed: int | None = 0, weights=None):
        self.sizes = tuple(int(s) for s in sizes)
        if weights is not None:
            self.weights = [np.array(w, dtype=np.float64) for w in weights[0]]
            self.biases = [np.array(b, dtype=np.float64) for b in weights[1]]
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                    raise DimensionMismatch(f"layer {i}: {w.shape}, {b.shape} vs sizes {self.sizes}")
            return
        rng = np.random.default_rng(seed)
        self.weights, self.biases = [], []
        for n_in, n_out in zip(self.sizes, self.sizes[1:]):
            # He-uniform
            lim = math.sqrt(6.0 / n_in)
            self.weights.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> QNetwork:
        return QNetwork(self.sizes, weights=([w.copy() for w in self.weights], [b.copy() for b in self.biases]))

    def load_from(self, other: QNetwork) -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def _forward(self, x):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)


def forward(net: QNetwork, x) -> np.ndarray:
    """Q-values for a normalized state (shape (11,)) or a batch (shape (n, 11))."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.sizes[0]:
        raise DimensionMismatch(f"expected {net.sizes[0]} features, got {x.shape[-1]}")
    return net._forward(x)[-1]


def huber(x, delta: float = 1.0):
    a = np.abs(x)
    return np.where(a <= delta, 0.5 * x * x, delta * (a - 0.5 * delta))


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray


def td_loss(net: QNetwork, target_net: QNetwork, batch: Batch, gamma: float):
    """Mean Huber TD error and its gradients w.r.t. ``net.params`` (same order)."""
    n = len(batch.a)
    q_next = forward(target_net, batch.s2)
    y = batch.r + gamma * (1.0 - batch.done) * q_next.max(axis=1)
    acts = net._forward(batch.s)
    q = acts[-1]
    idx = np.arange(n)
    err = q[idx, batch.a] - y
    loss = float(huber(err).mean())

    grad_q = np.zeros_like(q)
    grad_q[idx, batch.a] = np.clip(err, -1.0, 1.0) / n
    grads = [None] * (2 * len(net.weights))
    g = grad_q
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = (g @ net.weights[i].T) * (acts[i] > 0.0)
    return loss, grads


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


class ReplayBuffer:
    def __init__(self, capacity: int, n_features: int = N_FEATURES, seed: int = 0):
        self.capacity = capacity
        self.s = np.zeros((capacity, n_features))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, n_features))
        self.done = np.zeros(capacity)
        self.pos = 0
        self.size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return self.size

    def push(self, s, a, r, s2, done) -> None:
        i = self.pos
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch:
        idx = self.rng.integers(0, self.size, size=batch_size)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx])


@dataclass
class TrainConfig:
    gamma: float = 0.99
    lr: float = 1e-3
    batch_size: int = 64
    buffer_size: int = 50_000
    target_sync: int = 500  # in gradient updates
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 20_000
    episodes: int = 160
    learning_starts: int = 500
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    norm_offset: tuple[float, ...] = (0.0,) * N_FEATURES
    norm_scale: tuple[float, ...] = (1.0,) * N_FEATURES

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1):
            raise ValueError("epsilon must lie in [0, 1]")

    def epsilon(self, step: int) -> float:
        if self.eps_decay_steps <= 0:
            return self.eps_end
        frac = min(1.0, step / self.eps_decay_steps)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


def _obs_array(obs) -> np.ndarray:
    if hasattr(obs, "to_array"):
        return obs.to_array()
    return np.asarray(obs, dtype=np.float64)


@dataclass
class EpisodeLog:
    episode: int
    ret: float
    nlos_fraction: float
    epsilon: float
    loss: float


def train(env_factory: Callable, cfg: TrainConfig, on_episode: Callable | None = None):
    """Train a Q-network; returns (net, list of EpisodeLog).

    ``env_factory()`` builds an environment with ``reset(seed) -> (info, obs)``
    and ``step(a) -> (obs, reward, done)``; an optional ``nlos`` attribute is
    read after each step for the NLoS-fraction log.
    """
    env = env_factory()
    n_in = len(cfg.norm_offset)
    offset = np.asarray(cfg.norm_offset, dtype=np.float64)
    scale = np.asarray(cfg.norm_scale, dtype=np.float64)
    norm = lambda o: (_obs_array(o) - offset) / scale  # noqa: E731

    net = QNetwork((n_in, *cfg.hidden, N_ACTIONS), seed=cfg.seed)
    target = net.copy()
    opt = Adam(net.params, lr=cfg.lr)
    buf = ReplayBuffer(cfg.buffer_size, n_in, seed=cfg.seed + 1)
    act_rng = np.random.default_rng(cfg.seed + 2)
    ep_seeds = np.random.default_rng(cfg.seed + 3).integers(0, 2**31 - 1, size=cfg.episodes)

    step = 0
    updates = 0
    log: list[EpisodeLog] = []
    for ep in range(cfg.episodes):
        _, obs = env.reset(int(ep_seeds[ep]))
        s = norm(obs)
        ret, nlos, n_steps, losses = 0.0, 0, 0, []
        done = False
        while not done:
            eps = cfg.epsilon(step)
            if act_rng.random() < eps:
                a = int(act_rng.integers(N_ACTIONS))
            else:
                a = int(np.argmax(forward(net, s)))
            obs2, r, done = env.step(a)
            s2 = norm(obs2)
            buf.push(s, a, r, s2, done)
            s = s2
            ret += r
            nlos += int(getattr(env, "nlos", 0))
            n_steps += 1
            step += 1
            if len(buf) >= max(cfg.batch_size, cfg.learning_starts):
                loss, grads = td_loss(net, target, buf.sample(cfg.batch_size), cfg.gamma)
                if not math.isfinite(loss):
                    raise Diverged(f"non-finite loss at episode {ep}, step {step}, update {updates}")
                opt.step(grads)
                losses.append(loss)
                updates += 1
                if updates % cfg.target_sync == 0:
                    target.load_from(net)
        entry = EpisodeLog(ep, ret, nlos / max(n_steps, 1), cfg.epsilon(step),
                           float(np.mean(losses)) if losses else float("nan"))
        log.append(entry)
        if on_episode is not None:
            on_episode(entry)
    return net, log


# ---------------------------------------------------------------------------
# policy files

@dataclass
class Policy:
    """A trained network plus the header needed to feed it raw state vectors."""

    net: QNetwork
    norm_offset: tuple[float, ...]
    norm_scale: tuple[float, ...]
    delta: float
    T_ctrl: float
    v_max: float
    feature_order: tuple[str, ...] = FEATURE_ORDER
    meta: dict = field(default_factory=dict)

    def normalize(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - np.asarray(self.norm_offset)) / np.asarray(self.norm_scale)

    def q_values(self, features) -> np.ndarray:
        return forward(self.net, self.normalize(features))


def save_policy(policy: Policy, path) -> None:
    doc = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "feature_order": list(policy.feature_order),
        "delta": policy.delta,
        "T_ctrl": policy.T_ctrl,
        "v_max": policy.v_max,
        "norm_offset": [float(v) for v in policy.norm_offset],
        "norm_scale": [float(v) for v in policy.norm_scale],
        "sizes": list(policy.net.sizes),
        "activation": "relu",
        "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in zip(policy.net.weights, policy.net.biases)],
        "meta": policy.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=None, separators=(",", ":")) + "\n")


def load_policy(path, feature_order=FEATURE_ORDER) -> Policy:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPolicy(f"{path}: {exc}") from exc
    try:
        if doc["format"] != POLICY_FORMAT or doc["version"] != POLICY_VERSION:
            raise SchemaMismatch(f"unsupported policy format {doc['format']!r} v{doc['version']}")
        if tuple(doc["feature_order"]) != tuple(feature_order):
            raise SchemaMismatch("feature order differs from this build")
        sizes = tuple(doc["sizes"])
        if sizes[0] != len(feature_order) or sizes[-1] != N_ACTIONS:
            raise SchemaMismatch(f"network sizes {sizes} do not fit {len(feature_order)} -> {N_ACTIONS}")
        if len(doc["norm_offset"]) != sizes[0] or len(doc["norm_scale"]) != sizes[0]:
            raise SchemaMismatch("normalization constants do not match input size")
        if doc.get("activation") != "relu":
            raise SchemaMismatch(f"unsupported activation {doc.get('activation')!r}")
        layers = doc["layers"]
        net = QNetwork(sizes, weights=([l["W"] for l in layers], [l["b"] for l in layers]))
        return Policy(
            net=net,
            norm_offset=tuple(float(v) for v in doc["norm_offset"]),
            norm_scale=tuple(float(v) for v in doc["norm_scale"]),
            delta=float(doc["delta"]),
            T_ctrl=float(doc["T_ctrl"]),
            v_max=float(doc["v_max"]),
            feature_order=tuple(doc["feature_order"]),
            meta=doc.get("meta", {}),
        )
    except SchemaMismatch:
        raise
    except DimensionMismatch as exc:
        raise SchemaMismatch(str(exc)) from exc
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptPolicy(f"{path}: {exc!r}") from exc


def write_train_log(log, path) -> None:
    lines = ["episode,return,nlos_fraction,epsilon,loss"]
    for e in log:
        lines.append(f"{e.episode},{e.ret:.6f},{e.nlos_fraction:.6f},{e.epsilon:.6f},{e.loss:.6g}")
    Path(path).write_text("\n".join(lines) + "\n")
