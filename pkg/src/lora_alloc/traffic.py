"""Traffic generation and MAC disciplines (ALOHA, delay-before-transmit, CSMA)."""

from __future__ import annotations

import math

from .phy import PhyConfig, received_power

MACS = ("aloha", "delay_before_transmit", "csma")


def next_arrival(mean_interarrival_s: float, rng) -> float:
    """Exponential gap for a Poisson packet source."""
    if mean_interarrival_s <= 0:
        raise ValueError("mean inter-arrival must be positive")
    return float(rng.exponential(mean_interarrival_s))


def tx_delay(mac: str, ed_id: int, u_d_us: float, pkt_iat_s: float) -> float:
    """Deterministic pre-transmit delay in seconds.

    For ``delay_before_transmit`` this is ``(ed_id * u_d) mod pkt_iat`` with
    the product taken in microseconds and converted to seconds first.
    """
    if mac not in MACS:
        raise ValueError(f"unknown MAC {mac!r}")
    if mac != "delay_before_transmit":
        return 0.0
    return math.fmod(ed_id * u_d_us / 1e6, pkt_iat_s)


def csma_clear(position, channel: int, active, sense_dbm: float, phy: PhyConfig, now: float | None = None) -> bool:
    """True when no co-channel transmission is heard above ``sense_dbm`` at ``position``.

    ``active`` holds transmissions carrying an ``origin`` (x, y) and the
    transmit power in their params. With ``now`` given, only transmissions
    on air at that instant count.
    """
    x, y = position
    for tx in active:
        if tx.channel != channel:
            continue
        if now is not None and not (tx.start_s <= now < tx.end_s):
            continue
        ox, oy = tx.origin
        d = max(math.hypot(ox - x, oy - y), 1.0)
        if received_power(tx.params.power_dbm, d, phy) > sense_dbm:
            return False
    return True
