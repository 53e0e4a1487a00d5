"""Uplink collision resolution at the gateway: capture and inter-SF rejection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .phy import SF_RANGE, TransmissionParams


class Outcome(enum.Enum):
    PENDING = "pending"
    DELIVERED = "delivered"
    LOST = "lost"


@dataclass(slots=True)
class Transmission:
    ed_id: int
    params: TransmissionParams
    start_s: float
    end_s: float
    rssi_dbm: float
    outcome: Outcome = Outcome.PENDING
    origin: tuple | None = None  # transmitter position, used for carrier sensing

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError("transmission must have positive duration")

    @property
    def channel(self) -> int:
        return self.params.channel

    @property
    def sf(self) -> int:
        return self.params.sf


def default_thresholds(co_sf_db: float = 6.0, inter_sf_db: float = -8.0) -> np.ndarray:
    m = np.full((6, 6), inter_sf_db, dtype=float)
    np.fill_diagonal(m, co_sf_db)
    return m


@dataclass
class SirMatrix:
    """Required SIR in dB, indexed ``[sf_desired - 7][sf_interferer - 7]``."""

    threshold_db: np.ndarray = field(default_factory=default_thresholds)

    def __post_init__(self):
        self.threshold_db = np.asarray(self.threshold_db, dtype=float)
        if self.threshold_db.shape != (6, 6):
            raise ValueError("SIR matrix must be 6x6 (SF7..SF12)")
        for i in range(6):
            if not np.all(self.threshold_db[i, i] > np.delete(self.threshold_db[i], i)):
                raise ValueError("co-SF thresholds must exceed inter-SF thresholds")
        # plain nested lists: hot path, avoids numpy scalar overhead
        self._table = [[float(v) for v in row] for row in self.threshold_db]

    def threshold(self, sf_desired: int, sf_interferer: int) -> float:
        return self._table[sf_desired - 7][sf_interferer - 7]

    @classmethod
    def from_rows(cls, rows) -> "SirMatrix":
        return cls(np.asarray(rows, dtype=float))


def overlaps(a: Transmission, b: Transmission) -> bool:
    """Same channel and time intervals intersecting with positive measure."""
    return a.channel == b.channel and a.start_s < b.end_s and b.start_s < a.end_s


def survives(rssi: float, sf: int, interferers, sir: SirMatrix, aggregate: bool = False) -> bool:
    """Decode test for one packet against ``(rssi, sf)`` interferer pairs."""
    if not aggregate:
        for rssi_u, sf_u in interferers:
            if rssi - rssi_u < sir.threshold(sf, sf_u):
                return False
        return True
    total_mw = 0.0
    for rssi_u, sf_u in interferers:
        total_mw += 10.0 ** ((rssi_u + sir.threshold(sf, sf_u)) / 10.0)
    return total_mw == 0.0 or rssi >= 10.0 * math.log10(total_mw)


def resolve(active, sir: SirMatrix, aggregate: bool = False) -> list[Outcome]:
    """Outcome for each transmission in ``active`` (same order as given).

    Transmissions already marked LOST stay lost but still interfere.
    Uses a per-channel start-time sweep; pairwise rule, so the result does
    not depend on input order.
    """
    active = list(active)
    interferers: list[list[tuple[float, int]]] = [[] for _ in active]
    by_channel: dict[int, list[int]] = {}
    for i, tx in enumerate(active):
        by_channel.setdefault(tx.channel, []).append(i)
    for idx in by_channel.values():
        idx.sort(key=lambda i: active[i].start_s)
        live: list[int] = []
        for i in idx:
            t = active[i]
            live = [j for j in live if active[j].end_s > t.start_s]
            for j in live:
                u = active[j]
                interferers[i].append((u.rssi_dbm, u.sf))
                interferers[j].append((t.rssi_dbm, t.sf))
            live.append(i)
    out = []
    for i, tx in enumerate(active):
        if tx.outcome is Outcome.LOST:
            out.append(Outcome.LOST)
        elif survives(tx.rssi_dbm, tx.sf, interferers[i], sir, aggregate):
            out.append(Outcome.DELIVERED)
        else:
            out.append(Outcome.LOST)
    return out


class RadioMedium:
    """Channel set with a jamming schedule; owned by a single simulation."""

    def __init__(self, n_channels: int, sir: SirMatrix | None = None, aggregate: bool = False):
        if n_channels < 1:
            raise ValueError("need at least one channel")
        self.n_channels = n_channels
        self.sir = sir or SirMatrix()
        self.aggregate = aggregate
        self._jam_from: dict[int, float] = {}

    def jam(self, channel: int, from_time_s: float = 0.0) -> None:
        if not 0 <= channel < self.n_channels:
            raise ValueError(f"channel {channel} out of range")
        prev = self._jam_from.get(channel, math.inf)
        self._jam_from[channel] = min(prev, from_time_s)

    def clear_jamming(self) -> None:
        self._jam_from.clear()

    @property
    def jammed_channels(self) -> dict[int, float]:
        return dict(self._jam_from)

    def is_jammed(self, channel: int, start_s: float) -> bool:
        t = self._jam_from.get(channel)
        return t is not None and start_s >= t

    def resolve(self, active) -> list[Outcome]:
        active = list(active)
        out = resolve(active, self.sir, self.aggregate)
        return [Outcome.LOST if self.is_jammed(tx.channel, tx.start_s) else o
                for tx, o in zip(active, out)]

    def decodes(self, rssi: float, sf: int, channel: int, start_s: float, interferers) -> bool:
        if self.is_jammed(channel, start_s):
            return False
        return survives(rssi, sf, interferers, self.sir, self.aggregate)


__all__ = ["Outcome", "Transmission", "SirMatrix", "RadioMedium", "overlaps", "resolve",
           "survives", "default_thresholds", "SF_RANGE"]
