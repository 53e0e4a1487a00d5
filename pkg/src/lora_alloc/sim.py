"""Discrete-event simulation of one LoRa cell with a single gateway.

An episode starts from an empty cell. Devices join one per step; for
learning policies each join is followed by a probe window in which the
newcomer sends ``reward_window_tx`` packets against the background traffic of
the devices already present (their assignments held fixed), which yields the
newcomer's PDR for the reward. After the last join, the full population is
simulated event by event for one measurement epoch, with gateway feedback,
device fallback and mobility, and the epoch metrics are collected from that.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .medium import Outcome, RadioMedium, Transmission
from .mobility import MobilityConfig, gauss_markov_update
from .phy import SF_RANGE, PhyConfig, TransmissionParams, distance_from_rssi, time_on_air
from .policies import ActionSpace, Policy
from .traffic import MACS, csma_clear, next_arrival, tx_delay

PDR_WINDOW = 5

_ARRIVAL, _START, _END, _MOBILITY = 0, 1, 2, 3


@dataclass
class SimConfig:
    n_eds: int = 100
    radius_m: float = 4500.0
    channels: int = 1
    mean_interarrival_s: float = 240.0
    payload_bytes: int = 50
    epoch_rates: float = 50.0
    mac: str = "aloha"
    u_d_us: float = 1000.0
    csma_sense_dbm: float = -110.0
    csma_backoff_s: float = 1.0
    csma_max_attempts: int = 10
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    seed: int = 0
    sfs: tuple = SF_RANGE
    powers: tuple = (14.0,)
    reward_window_tx: int = 5
    fallback: str = "max"
    control_loss_prob: float = 0.0
    reassign_distance_m: float = 250.0
    retransmissions: int = 0
    retx_backoff_s: float = 10.0
    phy: PhyConfig = field(default_factory=PhyConfig)

    def __post_init__(self):
        if self.n_eds < 1 or self.channels < 1 or self.payload_bytes < 0 or self.reward_window_tx < 1:
            raise ValueError("counts must be positive")
        if self.mean_interarrival_s <= 0 or self.radius_m <= 0 or self.epoch_rates <= 0:
            raise ValueError("times and radius must be positive")
        if self.mac not in MACS:
            raise ValueError(f"unknown MAC {self.mac!r}; choose from {MACS}")
        if self.fallback not in ("max", "last"):
            raise ValueError("fallback must be 'max' or 'last'")
        if not 0.0 <= self.control_loss_prob <= 1.0:
            raise ValueError("control_loss_prob must be a probability")
        self.sfs = tuple(int(s) for s in self.sfs)
        self.powers = tuple(float(p) for p in self.powers)

    @property
    def epoch_s(self) -> float:
        """Simulated duration of one measurement epoch."""
        return self.epoch_rates * self.mean_interarrival_s


@dataclass(eq=False)
class EndDevice:
    id: int
    x_m: float = 0.0
    y_m: float = 0.0
    velocity_kmh: float = 0.0
    heading_rad: float = 0.0
    mean_velocity_kmh: float = 0.0
    velocity_sigma: float = 0.0
    mean_heading_rad: float = 0.0
    heading_sigma: float = 0.0
    params: TransmissionParams | None = None
    assigned: TransmissionParams | None = None
    fallback: bool = False
    assign_distance_m: float = 0.0
    pdr_window: deque = field(default_factory=lambda: deque(maxlen=PDR_WINDOW))
    tx_count: int = 0
    delivered_count: int = 0
    energy_j: float = 0.0
    busy_until: float = 0.0
    action: int | None = None
    mask: set | None = None

    @property
    def lost_count(self) -> int:
        return self.tx_count - self.delivered_count

    @property
    def distance_m(self) -> float:
        return math.hypot(self.x_m, self.y_m)

    @property
    def pdr_estimate(self) -> float | None:
        if not self.pdr_window:
            return None
        return sum(self.pdr_window) / len(self.pdr_window)

    def record(self, delivered: bool, energy_j: float) -> None:
        self.tx_count += 1
        self.delivered_count += int(delivered)
        self.energy_j += energy_j
        self.pdr_window.append(1.0 if delivered else 0.0)


@dataclass
class EpisodeMetrics:
    n_eds: int
    sent_by_sf: np.ndarray
    delivered_by_sf: np.ndarray
    alloc_by_sf: np.ndarray
    energy_j: np.ndarray  # per device, measurement epoch only
    sent: np.ndarray  # per device
    delivered: np.ndarray  # per device
    mean_reward: float = float("nan")
    epsilon: float = float("nan")
    mean_loss: float = float("nan")

    @property
    def total_sent(self) -> int:
        return int(self.sent_by_sf.sum())

    @property
    def total_delivered(self) -> int:
        return int(self.delivered_by_sf.sum())

    @property
    def mean_energy_j(self) -> float:
        return float(self.energy_j.mean()) if self.energy_j.size else 0.0


def network_pdr(metrics: EpisodeMetrics) -> float:
    if metrics.total_sent == 0:
        raise ValueError("no data: zero transmissions")
    return metrics.total_delivered / metrics.total_sent


def per_sf_pdr(metrics: EpisodeMetrics) -> dict[int, float]:
    """PDR per SF; NaN for an SF that carried no traffic."""
    if metrics.total_sent == 0:
        raise ValueError("no data: zero transmissions")
    out = {}
    for k, sf in enumerate(SF_RANGE):
        s = metrics.sent_by_sf[k]
        out[sf] = float(metrics.delivered_by_sf[k] / s) if s else float("nan")
    return out


def sf_allocation(metrics: EpisodeMetrics) -> dict[int, float]:
    """Fraction of devices per assigned SF."""
    total = metrics.alloc_by_sf.sum()
    if total == 0:
        raise ValueError("no data: no devices")
    return {sf: float(metrics.alloc_by_sf[k] / total) for k, sf in enumerate(SF_RANGE)}


class Network:
    """One cell: devices, kinematics arrays, gateway feedback, and the event loop.

    Owns all mutable simulation state; strictly single-threaded.
    """

    def __init__(self, cfg: SimConfig, policy: Policy, medium: RadioMedium, seed=0):
        if medium.n_channels != cfg.channels:
            raise ValueError("medium and config disagree on channel count")
        self.cfg = cfg
        self.phy = cfg.phy
        self.policy = policy
        self.medium = medium
        self.space = ActionSpace(cfg.channels, cfg.sfs, cfg.powers)
        ss = np.random.SeedSequence(seed if isinstance(seed, (list, tuple)) else [seed])
        place, traffic, mob, gw, pol = (np.random.default_rng(s) for s in ss.spawn(5))
        self.rng_place, self.rng_traffic, self.rng_mob, self.rng_gw = place, traffic, mob, gw
        policy.bind(self.space, self.phy, cfg.radius_m, pol)
        self.devices: list[EndDevice] = []
        n = cfg.n_eds
        self.kx, self.ky, self.kv, self.kh = (np.zeros(n) for _ in range(4))
        self.kmv, self.ksv, self.kmh, self.ksh = (np.zeros(n) for _ in range(4))
        self.now = 0.0
        self.airtime = {sf: time_on_air(TransmissionParams(0, sf), cfg.payload_bytes, self.phy) for sf in SF_RANGE}
        self.max_airtime = max(self.airtime[sf] for sf in cfg.sfs + (12,))
        self.sensitivity = dict(self.phy.sensitivity_dbm)
        self.p_max = max(cfg.powers)
        self._fallback_params = {}
        self._energy = {}

    # ------------------------------------------------------------------
    @property
    def k(self) -> int:
        return len(self.devices)

    def sync_devices(self) -> list[EndDevice]:
        """Copy kinematic arrays back onto the device objects."""
        for i, ed in enumerate(self.devices):
            ed.x_m, ed.y_m = float(self.kx[i]), float(self.ky[i])
            ed.velocity_kmh, ed.heading_rad = float(self.kv[i]), float(self.kh[i])
            ed.mean_heading_rad = float(self.kmh[i])
        return self.devices

    def _rssi(self, power: float, x: float, y: float) -> float:
        d = max(math.hypot(x, y), 1.0)
        phy = self.phy
        rssi = power - (phy.ref_loss_db + 10.0 * phy.path_loss_exponent * math.log10(d / phy.ref_distance_m))
        if phy.shadowing_sigma_db > 0:
            rssi += phy.shadowing_sigma_db * self.rng_gw.standard_normal()
        return rssi

    def _tx_energy(self, params: TransmissionParams) -> float:
        key = (params.sf, params.power_dbm)
        e = self._energy.get(key)
        if e is None:
            current = self.phy.tx_current_ma[float(params.power_dbm)]
            e = self.phy.supply_voltage_v * current / 1000.0 * self.airtime[params.sf]
            self._energy[key] = e
        return e

    def _fallback(self, ed: EndDevice) -> None:
        if self.cfg.fallback == "last":
            return
        ch = ed.params.channel
        p = self._fallback_params.get(ch)
        if p is None:
            p = TransmissionParams(ch, max(self.cfg.sfs), self.p_max)
            self._fallback_params[ch] = p
        ed.params = p
        ed.fallback = True

    def _feedback(self, ed: EndDevice, delivered: bool, rssi: float, params: TransmissionParams) -> None:
        """Gateway reply after an uplink: ack, restore, or re-plan on drift."""
        if not self.policy.centralized:
            return
        if not delivered:
            self._fallback(ed)
            return
        d_est = distance_from_rssi(params.power_dbm, rssi, self.phy)
        if abs(d_est - ed.assign_distance_m) > self.cfg.reassign_distance_m:
            ed.assigned = self.policy.reallocate(ed, min(d_est, self.cfg.radius_m))
            ed.assign_distance_m = d_est
        if self.cfg.control_loss_prob > 0 and self.rng_gw.random() < self.cfg.control_loss_prob:
            self._fallback(ed)
            return
        ed.params = ed.assigned
        ed.fallback = False

    # ------------------------------------------------------------------
    def add_device(self) -> EndDevice:
        """Place a newcomer uniformly in the disc and ask the policy for parameters."""
        cfg = self.cfg
        i = self.k
        if i >= cfg.n_eds:
            raise ValueError("cell is full")
        rng = self.rng_place
        r = max(cfg.radius_m * math.sqrt(rng.random()), 1.0)
        theta = 2.0 * math.pi * rng.random()
        ed = EndDevice(i, r * math.cos(theta), r * math.sin(theta))
        mob = cfg.mobility
        if mob.moving:
            ed.mean_velocity_kmh = mob.mean_kmh
            ed.velocity_sigma = mob.sigma_kmh
            ed.velocity_kmh = mob.mean_kmh + mob.sigma_kmh * rng.standard_normal()
            ed.heading_rad = ed.mean_heading_rad = theta + math.pi + rng.uniform(-math.pi, math.pi)
            ed.heading_sigma = mob.heading_sigma_rad
        for arr, val in ((self.kx, ed.x_m), (self.ky, ed.y_m), (self.kv, ed.velocity_kmh),
                         (self.kh, ed.heading_rad), (self.kmv, ed.mean_velocity_kmh),
                         (self.ksv, ed.velocity_sigma), (self.kmh, ed.mean_heading_rad),
                         (self.ksh, ed.heading_sigma)):
            arr[i] = val
        self.devices.append(ed)
        join_rssi = self._rssi(self.p_max, ed.x_m, ed.y_m)
        d_est = min(distance_from_rssi(self.p_max, join_rssi, self.phy), cfg.radius_m)
        params = self.policy.allocate(ed, d_est)
        params.check_channel(cfg.channels)
        ed.params = ed.assigned = params
        ed.assign_distance_m = d_est
        return ed

    def _move(self, step_s: float, upto: int | None = None) -> None:
        n = self.k if upto is None else upto
        if n == 0:
            return
        sl = slice(0, n)
        noise = self.rng_mob.standard_normal((2, n))
        kx, ky, kv, kh, kmh = self.kx[sl], self.ky[sl], self.kv[sl], self.kh[sl], self.kmh[sl]
        gauss_markov_update(kx, ky, kv, kh, self.kmv[sl], self.ksv[sl], kmh, self.ksh[sl],
                            self.cfg.mobility.alpha, step_s, self.cfg.radius_m, noise)

    # ------------------------------------------------------------------
    def _background(self, others: int, t0: float, t1: float, bg: list) -> None:
        """Poisson background packets of devices ``0..others-1`` starting in [t0, t1)."""
        if others == 0 or t1 <= t0:
            return
        cfg = self.cfg
        rng = self.rng_traffic
        counts = rng.poisson((t1 - t0) / cfg.mean_interarrival_s, others)
        total = int(counts.sum())
        if total == 0:
            return
        idx = np.repeat(np.arange(others), counts)
        start = rng.uniform(t0, t1, total)
        chans = np.empty(total, dtype=np.int64)
        sfs = np.empty(total, dtype=np.int64)
        pw = np.empty(total)
        devs = self.devices
        for j, d in enumerate(idx.tolist()):
            p = devs[d].params
            chans[j] = p.channel
            sfs[j] = p.sf
            pw[j] = p.power_dbm
        if cfg.mac == "delay_before_transmit":
            start = start + np.fmod(idx * cfg.u_d_us / 1e6, cfg.mean_interarrival_s)
        air = np.array([self.airtime[s] for s in SF_RANGE])[sfs - 7]
        d = np.maximum(np.hypot(self.kx[idx], self.ky[idx]), 1.0)
        phy = self.phy
        rssi = pw - (phy.ref_loss_db + 10.0 * phy.path_loss_exponent * np.log10(d / phy.ref_distance_m))
        if phy.shadowing_sigma_db > 0:
            rssi = rssi + phy.shadowing_sigma_db * rng.standard_normal(total)
        bg.append((start, start + air, chans, sfs, rssi, self.kx[idx], self.ky[idx], pw))

    def probe(self, ed: EndDevice) -> float:
        """Newcomer's reward window; returns its PDR estimate over the window."""
        cfg = self.cfg
        i = ed.id
        n_tx = cfg.reward_window_tx
        t0 = self.now
        gaps = self.rng_traffic.exponential(cfg.mean_interarrival_s, n_tx)
        arrivals = t0 + np.cumsum(gaps)
        slack = (n_tx + 1) * self.max_airtime + cfg.csma_max_attempts * cfg.csma_backoff_s
        slack += tx_delay(cfg.mac, i, cfg.u_d_us, cfg.mean_interarrival_s)
        horizon = float(arrivals[-1]) + slack
        mob = cfg.mobility
        step = mob.step_s if mob.moving else horizon - t0 + self.max_airtime
        bg: list = []
        seg_starts = []
        positions = []
        u0 = t0 - self.max_airtime
        while u0 < horizon:
            u1 = min(u0 + step, horizon)
            self._background(i, u0, u1, bg)
            seg_starts.append(u0)
            positions.append((float(self.kx[i]), float(self.ky[i])))
            if mob.moving:
                self._move(u1 - u0)
            u0 = u1
        if bg:
            b_start, b_end, b_ch, b_sf, b_rssi, b_x, b_y, b_pw = (np.concatenate(c) for c in zip(*bg))
        else:
            b_start = b_end = b_rssi = b_x = b_y = b_pw = np.zeros(0)
            b_ch = b_sf = np.zeros(0, dtype=np.int64)
        seg_starts = np.asarray(seg_starts)

        prev_end = max(t0, ed.busy_until)
        for a in arrivals.tolist():
            start = max(a, prev_end) + tx_delay(cfg.mac, i, cfg.u_d_us, cfg.mean_interarrival_s)
            seg = max(int(np.searchsorted(seg_starts, start, side="right")) - 1, 0)
            x, y = positions[seg]
            ed.x_m, ed.y_m = x, y
            params = self.policy.tx_params(ed)
            ch = params.channel
            if cfg.mac == "csma":
                for _ in range(cfg.csma_max_attempts):
                    on_air = (b_ch == ch) & (b_start <= start) & (b_end > start)
                    if not on_air.any():
                        break
                    dd = np.maximum(np.hypot(b_x[on_air] - x, b_y[on_air] - y), 1.0)
                    heard = b_pw[on_air] - (self.phy.ref_loss_db + 10.0 * self.phy.path_loss_exponent
                                            * np.log10(dd / self.phy.ref_distance_m))
                    if not np.any(heard > cfg.csma_sense_dbm):
                        break
                    start += cfg.csma_backoff_s
            end = start + self.airtime[params.sf]
            rssi = self._rssi(params.power_dbm, x, y)
            delivered = False
            if rssi >= self.sensitivity[params.sf]:
                hit = (b_ch == ch) & (b_start < end) & (b_end > start)
                interferers = zip(b_rssi[hit].tolist(), b_sf[hit].tolist())
                delivered = self.medium.decodes(rssi, params.sf, ch, start, interferers)
            ed.record(delivered, self._tx_energy(params))
            self.policy.on_outcome(ed, params, delivered)
            self._feedback(ed, delivered, rssi, params)
            prev_end = end
        ed.busy_until = prev_end
        self.now = max(horizon, prev_end)
        return ed.pdr_estimate

    # ------------------------------------------------------------------
    def run(self, duration_s: float) -> EpisodeMetrics:
        """Event-driven simulation of the whole population for ``duration_s``."""
        cfg = self.cfg
        t_begin = self.now
        t_stop = t_begin + duration_s
        n = self.k
        rng = self.rng_traffic
        policy = self.policy
        medium = self.medium
        heap: list = []
        seq = 0

        def push(t, kind, a, b=0):
            nonlocal seq
            heapq.heappush(heap, (t, seq, kind, a, b))
            seq += 1

        for i in range(n):
            push(t_begin + next_arrival(cfg.mean_interarrival_s, rng), _ARRIVAL, i, 0)
        moving = cfg.mobility.moving
        if moving:
            push(t_begin + cfg.mobility.step_s, _MOBILITY, 0)
        active: list[list[Transmission]] = [[] for _ in range(cfg.channels)]
        sent_sf = np.zeros(6, dtype=np.int64)
        deliv_sf = np.zeros(6, dtype=np.int64)
        sent = np.zeros(n, dtype=np.int64)
        deliv = np.zeros(n, dtype=np.int64)
        energy = np.zeros(n)
        held = {}  # parameters chosen at carrier sense, used at the matching start
        devs = self.devices
        max_air = self.max_airtime
        kx, ky = self.kx, self.ky

        while heap:
            t, _, kind, a, b = heapq.heappop(heap)
            if kind == _END:
                tx = a
                ed = devs[tx.ed_id]
                lst = active[tx.channel]
                if tx.outcome is Outcome.PENDING:
                    interferers = [(u.rssi_dbm, u.params.sf) for u in lst
                                   if u is not tx and u.start_s < tx.end_s and u.end_s > tx.start_s]
                    ok = medium.decodes(tx.rssi_dbm, tx.params.sf, tx.channel, tx.start_s, interferers)
                    tx.outcome = Outcome.DELIVERED if ok else Outcome.LOST
                delivered = tx.outcome is Outcome.DELIVERED
                k = tx.params.sf - 7
                e = self._tx_energy(tx.params)
                sent_sf[k] += 1
                deliv_sf[k] += delivered
                sent[tx.ed_id] += 1
                deliv[tx.ed_id] += delivered
                energy[tx.ed_id] += e
                ed.record(delivered, e)
                policy.on_outcome(ed, tx.params, delivered)
                self._feedback(ed, delivered, tx.rssi_dbm, tx.params)
                if not delivered and cfg.retransmissions > b:
                    push(t + rng.uniform(0.0, cfg.retx_backoff_s), _ARRIVAL, tx.ed_id, -(b + 1))
                if len(lst) > 64:
                    horizon = t - max_air
                    active[tx.channel] = [u for u in lst if u.end_s > horizon]
                continue
            if t >= t_stop:
                continue
            if kind == _MOBILITY:
                self._move(cfg.mobility.step_s)
                push(t + cfg.mobility.step_s, _MOBILITY, 0)
            elif kind == _ARRIVAL:
                i = a
                attempt = b
                if attempt == 0:
                    push(t + next_arrival(cfg.mean_interarrival_s, rng), _ARRIVAL, i, 0)
                retx = attempt < 0
                if cfg.mac == "delay_before_transmit":
                    push(t + tx_delay(cfg.mac, i, cfg.u_d_us, cfg.mean_interarrival_s), _START, i, attempt)
                elif cfg.mac == "csma" and not retx and attempt < cfg.csma_max_attempts:
                    ed = devs[i]
                    if i not in held:
                        ed.x_m, ed.y_m = float(kx[i]), float(ky[i])
                        held[i] = policy.tx_params(ed)
                    ch = held[i].channel
                    if csma_clear((kx[i], ky[i]), ch, active[ch], cfg.csma_sense_dbm, self.phy, now=t):
                        push(t, _START, i, attempt)
                    else:
                        push(t + cfg.csma_backoff_s, _ARRIVAL, i, attempt + 1)
                else:
                    push(t, _START, i, attempt)
            elif kind == _START:
                i = a
                ed = devs[i]
                if ed.busy_until > t:
                    push(ed.busy_until, _START, i, b)
                    continue
                x, y = float(kx[i]), float(ky[i])
                ed.x_m, ed.y_m = x, y
                params = held.pop(i, None) or policy.tx_params(ed)
                rssi = self._rssi(params.power_dbm, x, y)
                end = t + self.airtime[params.sf]
                tx = Transmission(i, params, t, end, rssi, origin=(x, y))
                if rssi < self.sensitivity[params.sf]:
                    tx.outcome = Outcome.LOST
                active[params.channel].append(tx)
                ed.busy_until = end
                push(end, _END, tx, max(-b, 0))
        self.now = max(t_stop, self.now)
        alloc = np.zeros(6, dtype=np.int64)
        for ed in devs:
            alloc[ed.assigned.sf - 7] += 1
        self.sync_devices()
        return EpisodeMetrics(n, sent_sf, deliv_sf, alloc, energy, sent, deliv)


def run_episode(cfg: SimConfig, policy: Policy, medium: RadioMedium, episode: int = 0) -> EpisodeMetrics:
    """Fill the cell one device per step, then measure one epoch."""
    net = Network(cfg, policy, medium, seed=[cfg.seed, episode])
    policy.begin_episode(net.devices)
    rewards = []
    n_losses = len(getattr(policy, "losses", ()))
    for _ in range(cfg.n_eds):
        ed = net.add_device()
        if policy.learns:
            pdr = net.probe(ed)
            r = policy.observe(ed, pdr, ed.assigned)
            if r is not None:
                rewards.append(r)
    policy.end_episode()
    metrics = net.run(cfg.epoch_s)
    if rewards:
        metrics.mean_reward = float(np.mean(rewards))
    agent = getattr(policy, "agent", None)
    if agent is not None:
        metrics.epsilon = agent.epsilon
        losses = policy.losses[n_losses:]
        if losses:
            metrics.mean_loss = float(np.mean(losses))
    metrics.network = net
    return metrics
