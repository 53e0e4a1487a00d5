"""Centralized double-Q allocator: state encoding, exploration, reward, replay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import QNetwork, copy_weights, make_optimizer, train_step


class InsufficientExperience(Exception):
    """Replay buffer holds fewer samples than the requested batch."""


@dataclass
class AgentState:
    action_fractions: np.ndarray
    distance_norm: float

    def vector(self) -> np.ndarray:
        return np.append(self.action_fractions, self.distance_norm)


@dataclass
class Experience:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool = False

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ValueError("reward must be finite")
        if self.a < 0:
            raise ValueError("action index must be non-negative")


@dataclass
class RewardWeights:
    alpha: float = 1.0
    beta: float = 0.01
    gamma_power: float = 0.2

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma_power) < 0:
            raise ValueError("reward weights must be >= 0")


@dataclass
class AgentConfig:
    discount: float = 0.7
    eps_initial: float = 1.0
    eps_final: float = 0.05
    eps_decrement: float = 0.00005
    target_update_interval: int = 3000
    batch_size: int = 128
    memory_capacity: int = 30000
    learning_rate: float = 0.0005
    hidden: list = field(default_factory=lambda: [16, 16])
    target_rule: str = "double_q"
    optimizer: str = "adam"
    loss: str = "mse"
    warmup: int = 1000
    train_every: int = 1

    def __post_init__(self):
        if not 0.0 <= self.eps_final <= self.eps_initial <= 1.0:
            raise ValueError("need 0 <= eps_final <= eps_initial <= 1")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if self.target_rule not in ("double_q", "literal_alg1"):
            raise ValueError(f"unknown target rule {self.target_rule!r}")
        if self.batch_size < 1 or self.memory_capacity < self.batch_size:
            raise ValueError("memory capacity must hold at least one batch")
        if self.train_every < 1 or self.target_update_interval < 1:
            raise ValueError("intervals must be >= 1")


def encode_state(action_counts, distance_m: float, radius_m: float) -> AgentState:
    counts = np.asarray(action_counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("counts must be >= 0")
    total = counts.sum()
    fractions = counts / total if total > 0 else np.zeros_like(counts)
    return AgentState(fractions, min(max(distance_m, 0.0) / radius_m, 1.0))


def epsilon(step: int, cfg: AgentConfig) -> float:
    return max(cfg.eps_final, cfg.eps_initial - cfg.eps_decrement * step)


def greedy(q: np.ndarray, mask=None) -> int:
    """Argmax with ties to the lowest index, optionally restricted to ``mask``."""
    if mask is None:
        return int(np.argmax(q))
    allowed = np.fromiter(sorted(mask), dtype=np.int64)
    if allowed.size == 0:
        raise ValueError("empty mask")
    return int(allowed[np.argmax(q[allowed])])


def select_action(state, net: QNetwork, eps: float, mask=None, rng=None) -> int:
    """Epsilon-greedy choice over ``net``'s outputs (or the masked subset)."""
    rng = rng if rng is not None else np.random.default_rng()
    if mask is not None and len(mask) == 0:
        raise ValueError("empty mask")
    if eps > 0.0 and rng.random() < eps:
        if mask is None:
            return int(rng.integers(net.action_count))
        allowed = sorted(mask)
        return int(allowed[rng.integers(len(allowed))])
    vec = state.vector() if isinstance(state, AgentState) else state
    return greedy(net.forward(vec), mask)


def power_reward(power_dbm: float, p_min: float, p_max: float) -> float:
    if not p_min < p_max:
        raise ValueError("need p_min < p_max")
    if not p_min <= power_dbm <= p_max:
        raise ValueError(f"power {power_dbm} outside [{p_min}, {p_max}]")
    return (p_max - power_dbm) / (p_max - p_min)


def reward(pdr: float, airtime_s: float, power_dbm: float, p_min: float, p_max: float,
           w: RewardWeights, power_term_enabled: bool = False) -> float:
    """alpha*PDR - beta*airtime, plus the scaled power saving when enabled."""
    if not 0.0 <= pdr <= 1.0:
        raise ValueError("pdr must be in [0, 1]")
    r = w.alpha * pdr - w.beta * airtime_s
    p_term = power_reward(power_dbm, p_min, p_max)
    if power_term_enabled:
        r += w.gamma_power * p_term
    return r


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored as flat arrays."""

    def __init__(self, capacity: int, state_dim: int, rng: np.random.Generator | None = None):
        self.capacity = int(capacity)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.s = np.zeros((self.capacity, state_dim))
        self.s_next = np.zeros((self.capacity, state_dim))
        self.a = np.zeros(self.capacity, dtype=np.int64)
        self.r = np.zeros(self.capacity)
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self._next = 0
        self.size = 0
        self.pushed = 0

    def __len__(self) -> int:
        return self.size

    def push(self, exp: Experience) -> None:
        i = self._next
        self.s[i] = exp.s
        self.s_next[i] = exp.s_next
        self.a[i] = exp.a
        self.r[i] = exp.r
        self.terminal[i] = exp.terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def oldest(self) -> Experience:
        i = self._next if self.size == self.capacity else 0
        return self.get(i)

    def get(self, i: int) -> Experience:
        return Experience(self.s[i].copy(), int(self.a[i]), float(self.r[i]),
                          self.s_next[i].copy(), bool(self.terminal[i]))

    def sample_indices(self, batch_size: int, rng=None) -> np.ndarray:
        if self.size < batch_size:
            raise InsufficientExperience(f"{self.size} < {batch_size}")
        rng = rng if rng is not None else self.rng
        return rng.choice(self.size, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng=None):
        """Uniform batch without replacement: ``(s, a, r, s_next, terminal)`` arrays."""
        idx = self.sample_indices(batch_size, rng)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx]


def td_targets(r, s_next, terminal, online: QNetwork, target: QNetwork, cfg: AgentConfig) -> np.ndarray:
    """Batched bootstrap targets under ``cfg.target_rule``."""
    r = np.asarray(r, dtype=np.float64)
    s_next = np.atleast_2d(s_next)
    q_next = target.forward(s_next)
    if cfg.target_rule == "literal_alg1":
        boot = q_next.max(axis=1)
    else:
        pick = np.argmax(online.forward(s_next), axis=1)
        boot = q_next[np.arange(len(pick)), pick]
    return np.where(np.asarray(terminal, dtype=bool), r, r + cfg.discount * boot)


def td_target(r: float, s_next, terminal: bool, online: QNetwork, target: QNetwork, cfg: AgentConfig) -> float:
    return float(td_targets([r], s_next, [terminal], online, target, cfg)[0])


class DRLAgent:
    """Online/target Q-networks, replay memory and the training schedule."""

    def __init__(self, state_dim: int, action_count: int, cfg: AgentConfig | None = None, seed: int = 0):
        self.cfg = cfg or AgentConfig()
        self.rng = np.random.default_rng(seed)
        sizes = [state_dim, *self.cfg.hidden, action_count]
        self.online = QNetwork(sizes, rng=self.rng)
        self.target = self.online.clone()
        self.optimizer = make_optimizer(self.cfg.optimizer, self.cfg.learning_rate)
        self.buffer = ReplayBuffer(self.cfg.memory_capacity, state_dim, rng=self.rng)
        self.steps = 0
        self.train_steps = 0
        self.syncs = 0

    @property
    def epsilon(self) -> float:
        return epsilon(self.steps, self.cfg)

    def act(self, state, mask=None, greedy_only: bool = False) -> int:
        eps = 0.0 if greedy_only else self.epsilon
        return select_action(state, self.online, eps, mask, self.rng)

    def step(self, transition: Experience) -> float | None:
        """Store ``transition``, maybe train once, maybe sync the target net."""
        self.buffer.push(transition)
        self.steps += 1
        loss = None
        cfg = self.cfg
        warm = len(self.buffer) >= max(cfg.warmup, cfg.batch_size)
        if warm and self.steps % cfg.train_every == 0:
            s, a, r, s_next, term = self.buffer.sample(cfg.batch_size)
            y = td_targets(r, s_next, term, self.online, self.target, cfg)
            loss = train_step(self.online, s, a, y, self.optimizer, cfg.loss)
            self.train_steps += 1
        if self.steps % cfg.target_update_interval == 0:
            copy_weights(self.online, self.target)
            self.syncs += 1
        return loss

    def save(self, path) -> None:
        self.online.save(path)

    def load(self, path) -> None:
        net = QNetwork.load(path)
        copy_weights(net, self.online)
        copy_weights(net, self.target)


agent_step = DRLAgent.step
