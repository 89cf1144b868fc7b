"""Proximal policy optimization for compressor-tree construction.

Policy and value are separate ReLU MLPs written directly in NumPy with
hand-derived backpropagation.  The policy sees the 8 compressor features and
chooses FA (0) or HA (1) at the action digit.  An HA action costs ``p`` in
the following reward; the terminal reward is ``-delay`` of the finished
multiplier.
"""

from __future__ import annotations

import json
import logging
import math
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._validation import check_features, check_positive_int, make_rng
from .compressor_tree import (
    N_FEATURES,
    Compressor,
    CompressorState,
    apply_compress,
    features,
    init_state,
)
from .cost_eval import EvalResult, proxy_eval_multiplier
from .exceptions import EpisodeAborted, NonFiniteGradient, ParseError
from .prefix_tree import generate_seed

logger = logging.getLogger(__name__)

__all__ = [
    "POLICY_SIZES",
    "VALUE_SIZES",
    "PPOConfig",
    "AgentParams",
    "AdamState",
    "Batch",
    "StepRecord",
    "Trajectory",
    "TrainResult",
    "init_params",
    "policy_forward",
    "value_forward",
    "compute_returns",
    "clipped_surrogate",
    "policy_loss_and_grad",
    "value_loss_and_grad",
    "collect_episode",
    "ppo_update",
    "train",
    "default_evaluator",
    "save_checkpoint",
    "load_checkpoint",
]

POLICY_SIZES = (N_FEATURES, 64, 16, 2)
VALUE_SIZES = (N_FEATURES, 64, 8, 1)
CHECKPOINT_FORMAT = "arithtree-ppo"
CHECKPOINT_VERSION = 1


@dataclass
class PPOConfig:
    gamma: float = 0.8
    clip_eps: float = 0.2
    ha_penalty: float = 0.1
    batch_size: int = 64
    buffer_capacity: int | None = None  # None -> 6 N^2
    learning_rate: float = 1e-3
    epochs: int = 4
    alpha: float = 0.0  # area weight when ranking finished designs

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 < self.clip_eps < 1:
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if self.ha_penalty < 0 or self.alpha < 0:
            raise ValueError("ha_penalty and alpha must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.epochs, "epochs")
        if self.buffer_capacity is not None:
            check_positive_int(self.buffer_capacity, "buffer_capacity")

    def capacity(self, width: int) -> int:
        return self.buffer_capacity if self.buffer_capacity is not None else 6 * width * width


@dataclass
class AgentParams:
    """Policy weights ``[W1, b1, W2, b2, W3, b3]`` and value weights likewise.

    ``W`` has shape ``(fan_in, fan_out)``.  ``version`` counts applied updates.
    """

    policy: list[np.ndarray]
    value: list[np.ndarray]
    version: int = 0

    def copy(self) -> "AgentParams":
        return AgentParams([p.copy() for p in self.policy], [v.copy() for v in self.value], self.version)

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.policy + self.value)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AgentParams):
            return NotImplemented
        return self.version == other.version and all(
            np.array_equal(x, y) for x, y in zip(self.policy + self.value, other.policy + other.value)
        )


def _glorot(rng, sizes) -> list[np.ndarray]:
    out = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        out.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        out.append(np.zeros(fan_out))
    return out


def init_params(seed=0) -> AgentParams:
    rng = make_rng(seed)
    return AgentParams(_glorot(rng, POLICY_SIZES), _glorot(rng, VALUE_SIZES))


def zero_params() -> AgentParams:
    def zeros(sizes):
        out = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            out += [np.zeros((a, b)), np.zeros(b)]
        return out

    return AgentParams(zeros(POLICY_SIZES), zeros(VALUE_SIZES))


# ------------------------------------------------------------------ networks


def _forward(layers: Sequence[np.ndarray], x: np.ndarray):
    """Return the linear output and the cached layer inputs for backprop."""
    acts = [x]
    h = x
    n_layers = len(layers) // 2
    for k in range(n_layers):
        z = h @ layers[2 * k] + layers[2 * k + 1]
        if k < n_layers - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            h = z
    return h, acts


def _backward(layers: Sequence[np.ndarray], acts: list[np.ndarray], d_out: np.ndarray) -> list[np.ndarray]:
    grads = [None] * len(layers)
    delta = d_out
    for k in range(len(layers) // 2 - 1, -1, -1):
        h_in = acts[k]
        grads[2 * k] = h_in.T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ layers[2 * k].T) * (h_in > 0)
    return grads


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_forward(params: AgentParams, feats) -> np.ndarray:
    """Action probabilities ``(P[FA], P[HA])``; batched for 2-D input."""
    single = np.ndim(feats) == 1
    x = check_features(feats)
    probs = _softmax(_forward(params.policy, x)[0])
    return probs[0] if single else probs


def value_forward(params: AgentParams, feats):
    single = np.ndim(feats) == 1
    x = check_features(feats)
    v = _forward(params.value, x)[0][:, 0]
    return float(v[0]) if single else v


# ------------------------------------------------------------------- returns


def compute_returns(rewards, gamma: float) -> np.ndarray:
    """Discounted returns ``G_t = r_t + gamma * G_{t+1}``; accepts a Trajectory."""
    if isinstance(rewards, Trajectory):
        rewards = rewards.rewards
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def clipped_surrogate(ratio, advantage, eps: float):
    """Elementwise ``min(r * A, clip(r, 1 - eps, 1 + eps) * A)``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantage)


# -------------------------------------------------------------------- losses


@dataclass
class Batch:
    features: np.ndarray  # (B, 8)
    actions: np.ndarray  # (B,) int
    old_log_probs: np.ndarray
    returns: np.ndarray
    values: np.ndarray  # value estimates at collection time

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def advantages(self) -> np.ndarray:
        return self.returns - self.values

    @classmethod
    def from_records(cls, records: Sequence[tuple]) -> "Batch":
        f, a, lp, g, v = zip(*records)
        return cls(np.array(f), np.array(a, dtype=np.int64), np.array(lp), np.array(g), np.array(v))


def policy_loss_and_grad(params: AgentParams, batch: Batch, eps: float) -> tuple[float, list[np.ndarray]]:
    """Negative mean clipped surrogate and its gradient w.r.t. the policy weights."""
    logits, acts = _forward(params.policy, batch.features)
    logp_all = _log_softmax(logits)
    idx = np.arange(len(batch))
    logp = logp_all[idx, batch.actions]
    ratio = np.exp(logp - batch.old_log_probs)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    loss = -float(np.mean(np.minimum(unclipped, clipped)))
    # the clipped branch is flat in the parameters whenever it is the minimum
    active = unclipped <= clipped
    d_logp = np.where(active, -unclipped, 0.0) / len(batch)
    onehot = np.zeros_like(logits)
    onehot[idx, batch.actions] = 1.0
    d_logits = d_logp[:, None] * (onehot - np.exp(logp_all))
    return loss, _backward(params.policy, acts, d_logits)


def value_loss_and_grad(params: AgentParams, batch: Batch) -> tuple[float, list[np.ndarray]]:
    """Mean smooth-L1 between value estimates and returns."""
    out, acts = _forward(params.value, batch.features)
    diff = out[:, 0] - batch.returns
    absd = np.abs(diff)
    loss = float(np.mean(np.where(absd < 1.0, 0.5 * diff**2, absd - 0.5)))
    d_out = (np.clip(diff, -1.0, 1.0) / len(batch))[:, None]
    return loss, _backward(params.value, acts, d_out)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def copy(self) -> "AdamState":
        m = None if self.m is None else [x.copy() for x in self.m]
        v = None if self.v is None else [x.copy() for x in self.v]
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.t, m, v)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Optimizers:
    policy: AdamState
    value: AdamState

    @classmethod
    def create(cls, lr: float) -> "Optimizers":
        return cls(AdamState(lr=lr), AdamState(lr=lr))

    def copy(self) -> "Optimizers":
        return Optimizers(self.policy.copy(), self.value.copy())


def ppo_update(
    params: AgentParams,
    batch: Batch,
    config: PPOConfig | None = None,
    optimizers: Optimizers | None = None,
) -> AgentParams:
    """Run ``config.epochs`` gradient steps on one batch and return new params.

    The input params are left untouched (they are the pre-update snapshot).
    ``optimizers`` is advanced in place only when the whole update succeeds;
    a non-finite gradient raises NonFiniteGradient and changes nothing.
    """
    config = config or PPOConfig()
    if len(batch) == 0:
        return params.copy()
    if len(batch) > config.batch_size:
        raise ValueError(f"batch of {len(batch)} exceeds batch_size {config.batch_size}")
    new = params.copy()
    opt = optimizers.copy() if optimizers is not None else Optimizers.create(config.learning_rate)
    for _ in range(config.epochs):
        _, g_pi = policy_loss_and_grad(new, batch, config.clip_eps)
        _, g_v = value_loss_and_grad(new, batch)
        if not all(np.isfinite(g).all() for g in g_pi + g_v):
            raise NonFiniteGradient("non-finite gradient in PPO update; parameters kept")
        opt.policy.step(new.policy, g_pi)
        opt.value.step(new.value, g_v)
    if not new.all_finite():
        raise NonFiniteGradient("update produced non-finite parameters; parameters kept")
    new.version = params.version + 1
    if optimizers is not None:
        optimizers.policy, optimizers.value = opt.policy, opt.value
    return new


# ------------------------------------------------------------------ episodes


@dataclass
class StepRecord:
    features: np.ndarray
    action: int
    log_prob: float
    reward: float
    value: float


@dataclass
class Trajectory:
    width: int
    records: list[StepRecord]
    terminal_reward: float | None
    final_state: CompressorState
    eval_result: EvalResult | None

    @property
    def length(self) -> int:
        return len(self.records)

    @property
    def complete(self) -> bool:
        return self.terminal_reward is not None

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records], dtype=np.float64)

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


def default_evaluator(width: int) -> Callable[[CompressorState], EvalResult]:
    """Proxy multiplier cost with a Sklansky final adder."""
    n_adder = 2 * width
    family = "sklansky" if n_adder & (n_adder - 1) == 0 else "ripple"
    tree = generate_seed(family, n_adder)
    return lambda state: proxy_eval_multiplier(state, tree)


def collect_episode(
    env_width: int,
    params: AgentParams,
    rng,
    evaluator: Callable[[CompressorState], EvalResult] | None = None,
    *,
    config: PPOConfig | None = None,
    max_steps: int | None = None,
    policy: Callable[[np.ndarray], int] | None = None,
) -> Trajectory:
    """Roll out one episode.

    Actions are sampled from the policy unless ``policy`` overrides them
    (log-probs still come from the network).  An episode cut short by
    ``max_steps`` has no terminal reward and is not evaluated.
    """
    config = config or PPOConfig()
    rng = make_rng(rng)
    evaluator = evaluator or default_evaluator(env_width)
    state = init_state(env_width)
    records: list[StepRecord] = []
    while not state.is_terminal():
        if max_steps is not None and len(records) >= max_steps:
            return Trajectory(env_width, records, None, state, None)
        x = features(state)
        probs = policy_forward(params, x)
        value = value_forward(params, x)
        if policy is not None:
            action = int(policy(x))
        else:
            action = int(rng.random() < probs[1])
        reward = -config.ha_penalty if action == Compressor.HA else 0.0
        records.append(StepRecord(x, action, float(np.log(probs[action])), reward, value))
        state = apply_compress(state, action)
    try:
        result = evaluator(state)
    except Exception as exc:  # noqa: BLE001 - reported with episode context
        raise EpisodeAborted(f"evaluator failed on finished episode: {exc}") from exc
    terminal = -float(result.delay)
    if records:
        records[-1].reward += terminal
    return Trajectory(env_width, records, terminal, state, result)


# ------------------------------------------------------------------ training


@dataclass
class TrainResult:
    params: AgentParams
    optimizers: Optimizers
    best_actions: tuple[Compressor, ...]
    best_state: CompressorState | None
    best_eval: EvalResult | None
    best_score: float
    episode_returns: list[float] = field(default_factory=list)
    env_steps: int = 0
    updates: int = 0
    skipped_updates: int = 0
    records: list[dict] = field(default_factory=list)


def train(
    width: int,
    steps: int,
    config: PPOConfig | None = None,
    evaluator: Callable[[CompressorState], EvalResult] | None = None,
    rng=0,
    *,
    params: AgentParams | None = None,
    optimizers: Optimizers | None = None,
) -> TrainResult:
    """Train for exactly ``steps`` environment steps.

    After every finished episode the records (with returns) enter a FIFO
    buffer of capacity ``6 N^2`` and one PPO update runs on a random batch
    drawn from it.  An episode still running when the budget ends is
    discarded.  ``episode_returns`` holds the undiscounted reward sum of each
    finished episode.  The best design maximizes ``-delay - alpha * area``.
    """
    config = config or PPOConfig()
    check_positive_int(steps, "steps", allow_zero=True)
    rng = make_rng(rng)
    evaluator = evaluator or default_evaluator(width)
    params = params.copy() if params is not None else init_params(rng)
    optimizers = optimizers if optimizers is not None else Optimizers.create(config.learning_rate)
    buffer: deque = deque(maxlen=config.capacity(width))
    result = TrainResult(params, optimizers, (), None, None, -math.inf)

    if init_state(width).is_terminal():
        # nothing to compress (N = 2): the empty schedule is the only design
        state = init_state(width)
        ev = evaluator(state)
        result.best_state, result.best_eval = state, ev
        result.best_score = -ev.delay - config.alpha * ev.area
        return result

    used = 0
    while used < steps:
        traj = collect_episode(width, params, rng, evaluator, config=config, max_steps=steps - used)
        used += traj.length
        if not traj.complete:
            break
        returns = compute_returns(traj.rewards, config.gamma)
        for rec, g in zip(traj.records, returns):
            buffer.append((rec.features, rec.action, rec.log_prob, g, rec.value))
        ev = traj.eval_result
        score = -ev.delay - config.alpha * ev.area
        result.episode_returns.append(traj.total_reward)
        result.records.append(
            {
                "episode": len(result.episode_returns) - 1,
                "env_steps": used,
                "length": traj.length,
                "delay": ev.delay,
                "area": ev.area,
                "return": traj.total_reward,
            }
        )
        if score > result.best_score:
            result.best_score = score
            result.best_actions = traj.final_state.actions
            result.best_state = traj.final_state
            result.best_eval = ev
        k = min(config.batch_size, len(buffer))
        picks = rng.choice(len(buffer), size=k, replace=False)
        batch = Batch.from_records([buffer[i] for i in sorted(picks)])
        try:
            params = ppo_update(params, batch, config, optimizers)
            result.updates += 1
        except NonFiniteGradient as exc:
            logger.warning("%s", exc)
            result.skipped_updates += 1
    result.params = params
    result.env_steps = used
    return result


# ---------------------------------------------------------------- checkpoint


def _flatten(params: AgentParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.policy + params.value])


def save_checkpoint(path: str | os.PathLike, params: AgentParams) -> None:
    """Flat float64 parameter vector plus a JSON shape header (npz)."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "version": params.version,
        "policy_shapes": [list(a.shape) for a in params.policy],
        "value_shapes": [list(a.shape) for a in params.value],
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), flat=_flatten(params))


def load_checkpoint(path: str | os.PathLike) -> AgentParams:
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            flat = np.array(data["flat"], dtype=np.float64)
    except (OSError, KeyError, ValueError) as exc:
        raise ParseError(f"unreadable checkpoint {path}: {exc}") from None
    if header.get("format") != CHECKPOINT_FORMAT or header.get("format_version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint header {header}")
    arrays, pos = [], 0
    shapes = header["policy_shapes"] + header["value_shapes"]
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(flat[pos : pos + size].reshape(shape))
        pos += size
    if pos != flat.size:
        raise ParseError("checkpoint length does not match its shape header")
    k = len(header["policy_shapes"])
    return AgentParams(arrays[:k], arrays[k:], int(header["version"]))
