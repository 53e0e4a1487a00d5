"""Allocation policies behind one interface.

A policy is asked for parameters when a device joins (``allocate``), when the
gateway decides to re-plan a device (``reallocate``), and, for policies that
choose per packet, before every uplink (``tx_params``). Learning policies also
see the arriving device's measured PDR (``observe``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentConfig, DRLAgent, Experience, RewardWeights, encode_state, reward
from .phy import PhyConfig, TransmissionParams, max_range, time_on_air


class ActionSpace:
    """Bijection between action ids and ``(channel, sf, power)``; channel-major order."""

    def __init__(self, channels: int, sfs=(7, 8, 9, 10, 11, 12), powers=(14.0,), cr_den: int = 5,
                 bw_hz: int = 125_000):
        if channels < 1 or not sfs or not powers:
            raise ValueError("action space needs channels, SFs and powers")
        self.channels = int(channels)
        self.sfs = tuple(int(s) for s in sfs)
        self.powers = tuple(float(p) for p in powers)
        self.cr_den = cr_den
        self.bw_hz = bw_hz
        self._params = [TransmissionParams(c, sf, p, cr_den, bw_hz)
                        for c in range(self.channels) for sf in self.sfs for p in self.powers]
        self._index = {(t.channel, t.sf, t.power_dbm): i for i, t in enumerate(self._params)}

    def __len__(self) -> int:
        return len(self._params)

    @property
    def size(self) -> int:
        return len(self._params)

    def encode(self, channel: int, sf: int, power: float) -> int:
        try:
            return self._index[(int(channel), int(sf), float(power))]
        except KeyError:
            raise ValueError(f"({channel}, SF{sf}, {power} dBm) not in action space") from None

    def decode(self, index: int) -> tuple[int, int, float]:
        p = self.params(index)
        return p.channel, p.sf, p.power_dbm

    def params(self, index: int) -> TransmissionParams:
        if not 0 <= index < len(self._params):
            raise ValueError(f"action out of range: {index}")
        return self._params[index]

    def index_of(self, params: TransmissionParams) -> int:
        return self.encode(params.channel, params.sf, params.power_dbm)

    def with_sf_at_least(self, sf_min: int, channels=None) -> list[int]:
        chans = range(self.channels) if channels is None else channels
        return [self.encode(c, sf, p) for c in chans for sf in self.sfs if sf >= sf_min for p in self.powers]


def min_reaching_sf(distance_m: float, power_dbm: float, phy: PhyConfig, sfs=(7, 8, 9, 10, 11, 12)) -> int:
    for sf in sorted(sfs):
        if max_range(sf, power_dbm, phy) >= distance_m:
            return sf
    raise ValueError(f"out of range: {distance_m:.0f} m not reachable at SF{max(sfs)}")


def rule_based_allocate(ed_distance_m: float, radius_m: float, phy: PhyConfig, power_dbm: float = 14.0,
                        channels: int = 1, rng=None) -> TransmissionParams:
    """Smallest SF whose link budget covers the distance; channel drawn at random."""
    if ed_distance_m > radius_m:
        raise ValueError(f"out of range: {ed_distance_m:.0f} m outside the {radius_m:.0f} m cell")
    sf = min_reaching_sf(ed_distance_m, power_dbm, phy)
    channel = int(rng.integers(channels)) if rng is not None and channels > 1 else 0
    return TransmissionParams(channel, sf, power_dbm)


@dataclass
class Exp3State:
    """Per-device EXP3 over that device's allowed actions."""

    actions: list
    eta: float = 0.1
    eta_mix: float = 0.1
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.actions:
            raise ValueError("EXP3 needs at least one action")
        if self.weights is None:
            self.weights = np.ones(len(self.actions))

    @property
    def k(self) -> int:
        return len(self.actions)

    def probabilities(self) -> np.ndarray:
        w = self.weights
        return (1.0 - self.eta_mix) * w / w.sum() + self.eta_mix / self.k


def exp3_select(state: Exp3State, rng) -> tuple[int, float]:
    """Draw an arm; returns ``(position in state.actions, its probability)``."""
    p = state.probabilities()
    i = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    i = min(i, state.k - 1)
    return i, float(p[i])


def exp3_update(state: Exp3State, arm: int, reward_value: float, prob: float) -> None:
    if not 0.0 <= reward_value <= 1.0:
        raise ValueError("EXP3 reward must be in [0, 1]")
    if reward_value == 0.0:
        return
    state.weights[arm] *= math.exp(state.eta * (reward_value / prob) / state.k)
    top = state.weights.max()
    if top > 1e200:
        state.weights /= top


class Policy:
    """Base class; also the uniform-random allocator's skeleton."""

    name = "base"
    learns = False
    centralized = True

    def bind(self, space: ActionSpace, phy: PhyConfig, radius_m: float, rng) -> None:
        self.space = space
        self.phy = phy
        self.radius_m = radius_m
        self.rng = rng

    def begin_episode(self, devices) -> None:
        self.devices = devices

    def end_episode(self) -> None:
        pass

    def allocate(self, ed, distance_m: float) -> TransmissionParams:
        raise NotImplementedError

    def reallocate(self, ed, distance_m: float) -> TransmissionParams:
        return self.allocate(ed, distance_m)

    def tx_params(self, ed) -> TransmissionParams:
        return ed.params

    def on_outcome(self, ed, params: TransmissionParams, delivered: bool) -> None:
        pass

    def observe(self, ed, pdr: float, params: TransmissionParams) -> float | None:
        return None

    def _allowed(self, ed):
        return getattr(ed, "mask", None)


class RandomPolicy(Policy):
    name = "random"

    def allocate(self, ed, distance_m):
        mask = self._allowed(ed)
        if mask:
            allowed = sorted(mask)
            a = allowed[int(self.rng.integers(len(allowed)))]
        else:
            a = int(self.rng.integers(self.space.size))
        ed.action = a
        return self.space.params(a)


class RuleBasedPolicy(Policy):
    """Distance tiers from the link budget, worked out by the device itself.

    There is no gateway feedback: before every uplink the device picks the
    smallest SF that reaches from where it is now and a random channel.
    """

    name = "rule_based"
    centralized = False

    def __init__(self, power_dbm: float | None = None):
        self.power_dbm = power_dbm

    def _power(self):
        return self.power_dbm if self.power_dbm is not None else max(self.space.powers)

    def allocate(self, ed, distance_m):
        params = rule_based_allocate(min(distance_m, self.radius_m), self.radius_m, self.phy,
                                     self._power(), self.space.channels, self.rng)
        mask = self._allowed(ed)
        if mask:
            ok = [a for a in sorted(mask) if self.space.params(a).sf >= params.sf]
            a = ok[0] if ok else max(mask, key=lambda i: self.space.params(i).sf)
            params = self.space.params(a)
        ed.action = self.space.index_of(params)
        return params

    def tx_params(self, ed):
        if self._allowed(ed):
            return ed.params
        params = self.allocate(ed, math.hypot(ed.x_m, ed.y_m))
        ed.params = ed.assigned = params
        return params


class Exp3Policy(Policy):
    """Decentralized per-device EXP3; each device only considers SFs able to
    reach the gateway from where it joined."""

    name = "exp3"
    centralized = False

    def __init__(self, eta: float = 0.1, eta_mix: float = 0.1):
        self.eta = eta
        self.eta_mix = eta_mix

    def allocate(self, ed, distance_m):
        power = max(self.space.powers)
        try:
            sf_min = min_reaching_sf(distance_m, power, self.phy, self.space.sfs)
        except ValueError:
            sf_min = max(self.space.sfs)
        actions = self.space.with_sf_at_least(sf_min)
        mask = self._allowed(ed)
        if mask:
            actions = [a for a in actions if a in mask] or sorted(mask)
        ed.exp3 = Exp3State(actions, self.eta, self.eta_mix)
        return self._draw(ed)

    def _draw(self, ed):
        arm, prob = exp3_select(ed.exp3, self.rng)
        ed.exp3_last = (arm, prob)
        ed.action = ed.exp3.actions[arm]
        return self.space.params(ed.action)

    def reallocate(self, ed, distance_m):
        return ed.params

    def tx_params(self, ed):
        params = self._draw(ed)
        ed.params = params
        return params

    def on_outcome(self, ed, params, delivered):
        arm, prob = ed.exp3_last
        exp3_update(ed.exp3, arm, 1.0 if delivered else 0.0, prob)


class DRLPolicy(Policy):
    """Gateway-side Q-learning allocator.

    The state is the fraction of devices currently holding each action plus
    the newcomer's normalized distance. A decision's transition is closed at
    the next decision, whose state becomes ``s_next``.
    """

    name = "drl"

    def __init__(self, agent_cfg: AgentConfig | None = None, reward_weights: RewardWeights | None = None,
                 power_term: bool = False, payload_bytes: int = 50, seed: int = 0, train: bool = True,
                 reach_mask: bool = False):
        self.reach_mask = reach_mask
        self.agent_cfg = agent_cfg or AgentConfig()
        self.weights = reward_weights or RewardWeights()
        self.power_term = power_term
        self.payload_bytes = payload_bytes
        self.seed = seed
        self.train = train
        self.agent: DRLAgent | None = None
        self.losses: list[float] = []

    @property
    def learns(self) -> bool:
        return self.train

    def bind(self, space, phy, radius_m, rng):
        super().bind(space, phy, radius_m, rng)
        if self.agent is None:
            self.agent = DRLAgent(space.size + 1, space.size, self.agent_cfg, seed=self.seed)
        elif self.agent.online.action_count != space.size:
            raise ValueError("agent was built for a different action space")
        self._airtime = [time_on_air(space.params(a), self.payload_bytes, phy) for a in range(space.size)]
        self.p_min = min(space.powers)
        self.p_max = max(space.powers) if max(space.powers) > min(space.powers) else min(space.powers) + 1.0

    def begin_episode(self, devices):
        super().begin_episode(devices)
        self.counts = np.zeros(self.space.size)
        self._pending = None

    def state(self, distance_m: float) -> np.ndarray:
        return encode_state(self.counts, distance_m, self.radius_m).vector()

    def _choose(self, ed, distance_m, greedy_only):
        s = self.state(distance_m)
        mask = self._allowed(ed)
        if self.reach_mask:
            reach = self._reachable(distance_m)
            mask = reach if mask is None else (set(mask) & reach) or set(mask)
        a = self.agent.act(s, mask, greedy_only=greedy_only or not self.train)
        if not 0 <= a < self.space.size:
            raise ValueError(f"action out of range: {a}")
        return s, a

    def _reachable(self, distance_m: float) -> set:
        """Actions whose SF/power link budget covers ``distance_m``; the top SF if none does."""
        ok = {a for a in range(self.space.size)
              if max_range(self.space.params(a).sf, self.space.params(a).power_dbm, self.phy) >= distance_m}
        return ok or set(self.space.with_sf_at_least(max(self.space.sfs)))

    def allocate(self, ed, distance_m):
        s, a = self._choose(ed, distance_m, greedy_only=False)
        self._close_pending(s, terminal=False)
        self._pending = [s, a, None]
        self.counts[a] += 1
        ed.action = a
        return self.space.params(a)

    def reallocate(self, ed, distance_m):
        _, a = self._choose(ed, distance_m, greedy_only=True)
        old = getattr(ed, "action", None)
        if old is not None:
            self.counts[old] -= 1
        self.counts[a] += 1
        ed.action = a
        return self.space.params(a)

    def observe(self, ed, pdr, params):
        a = self._pending[1]
        r = reward(pdr, self._airtime[a], self.space.params(a).power_dbm,
                   self.p_min, self.p_max, self.weights, self.power_term)
        self._pending[2] = r
        return r

    def _close_pending(self, s_next, terminal):
        if self._pending is None or self._pending[2] is None or not self.train:
            self._pending = None
            return
        s, a, r = self._pending
        loss = self.agent.step(Experience(s, a, r, s_next, terminal))
        if loss is not None:
            self.losses.append(loss)
        self._pending = None

    def end_episode(self):
        self._close_pending(self.state(0.0), terminal=True)


POLICIES = {"drl": DRLPolicy, "rule_based": RuleBasedPolicy, "exp3": Exp3Policy, "random": RandomPolicy}


def make_policy(name: str, **kwargs) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    return cls(**kwargs)
