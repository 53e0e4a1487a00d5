"""LoRa link-layer arithmetic: bit rate, time-on-air, path loss, energy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

SF_RANGE = (7, 8, 9, 10, 11, 12)
CODING_RATES = (5, 6, 7, 8)
BANDWIDTHS = (125_000, 250_000, 500_000)
POWER_MIN_DBM = 2.0
POWER_MAX_DBM = 20.0

DEFAULT_SENSITIVITY = {7: -123.0, 8: -126.0, 9: -129.0, 10: -132.0, 11: -134.5, 12: -137.0}
DEFAULT_TX_CURRENT_MA = {2: 24.0, 5: 25.0, 8: 25.0, 11: 32.0, 14: 44.0, 17: 82.0, 20: 125.0}


@dataclass(frozen=True)
class TransmissionParams:
    """One PHY configuration for an uplink."""

    channel: int = 0
    sf: int = 7
    power_dbm: float = 14.0
    cr_den: int = 5
    bw_hz: int = 125_000
    cr_num: int = 4

    def __post_init__(self):
        if self.sf not in SF_RANGE:
            raise ValueError(f"sf must be in 7..12, got {self.sf}")
        if self.cr_num != 4 or self.cr_den not in CODING_RATES:
            raise ValueError(f"coding rate must be 4/5..4/8, got {self.cr_num}/{self.cr_den}")
        if self.bw_hz <= 0:
            raise ValueError("bw_hz must be positive")
        if not POWER_MIN_DBM <= self.power_dbm <= POWER_MAX_DBM:
            raise ValueError(f"power_dbm must be in [2, 20], got {self.power_dbm}")
        if self.channel < 0:
            raise ValueError("channel must be non-negative")

    def check_channel(self, n_channels: int) -> None:
        if self.channel >= n_channels:
            raise ValueError(f"channel {self.channel} >= configured count {n_channels}")


@dataclass
class PhyConfig:
    path_loss_exponent: float = 2.08
    ref_distance_m: float = 40.0
    ref_loss_db: float = 107.41
    sensitivity_dbm: dict = field(default_factory=lambda: dict(DEFAULT_SENSITIVITY))
    tx_current_ma: dict = field(default_factory=lambda: dict(DEFAULT_TX_CURRENT_MA))
    supply_voltage_v: float = 3.3
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    ldro_sf_threshold: int = 11
    shadowing_sigma_db: float = 0.0

    def __post_init__(self):
        self.sensitivity_dbm = {int(k): float(v) for k, v in self.sensitivity_dbm.items()}
        self.tx_current_ma = {float(k): float(v) for k, v in self.tx_current_ma.items()}
        sens = [self.sensitivity_dbm[sf] for sf in sorted(self.sensitivity_dbm)]
        if any(b >= a for a, b in zip(sens, sens[1:])):
            raise ValueError("sensitivity must strictly decrease as SF increases")
        cur = [self.tx_current_ma[p] for p in sorted(self.tx_current_ma)]
        if any(b < a for a, b in zip(cur, cur[1:])):
            raise ValueError("tx current must not decrease with power")
        if self.ref_distance_m <= 0 or self.path_loss_exponent <= 0:
            raise ValueError("path loss parameters must be positive")


def bit_rate(params: TransmissionParams) -> float:
    """Useful bit rate in bit/s: SF * BW / 2**SF * CR.

    Evaluated as one integer ratio so the result is the correctly rounded value.
    """
    return params.sf * params.bw_hz * params.cr_num / (params.cr_den * 2**params.sf)


def symbol_time(sf: int, bw_hz: float) -> float:
    return 2**sf / bw_hz


def time_on_air(params: TransmissionParams, payload_bytes: int, cfg: PhyConfig | None = None) -> float:
    """Packet airtime in seconds (Semtech symbol-count formula)."""
    cfg = cfg or PhyConfig()
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    sf = params.sf
    t_sym = symbol_time(sf, params.bw_hz)
    de = 1 if (sf >= cfg.ldro_sf_threshold and params.bw_hz <= 125_000) else 0
    ih = 0 if cfg.explicit_header else 1
    crc = 1 if cfg.crc_on else 0
    num = 8 * payload_bytes - 4 * sf + 28 + 16 * crc - 20 * ih
    n_payload = 8 + max(math.ceil(num / (4 * (sf - 2 * de))) * params.cr_den, 0)
    return (cfg.preamble_symbols + 4.25) * t_sym + n_payload * t_sym


def path_loss(distance_m: float, cfg: PhyConfig) -> float:
    if distance_m <= 0:
        raise ValueError("degenerate distance")
    return cfg.ref_loss_db + 10.0 * cfg.path_loss_exponent * math.log10(distance_m / cfg.ref_distance_m)


def received_power(tx_power_dbm: float, distance_m: float, cfg: PhyConfig | None = None) -> float:
    """Log-distance received power in dBm."""
    cfg = cfg or PhyConfig()
    return tx_power_dbm - path_loss(distance_m, cfg)


def distance_from_rssi(tx_power_dbm: float, rssi_dbm: float, cfg: PhyConfig) -> float:
    """Invert the path-loss model; what a gateway can infer from one RSSI sample."""
    loss = tx_power_dbm - rssi_dbm
    return cfg.ref_distance_m * 10.0 ** ((loss - cfg.ref_loss_db) / (10.0 * cfg.path_loss_exponent))


def max_range(sf: int, tx_power_dbm: float, cfg: PhyConfig) -> float:
    """Largest distance at which ``sf`` still meets sensitivity."""
    return distance_from_rssi(tx_power_dbm, cfg.sensitivity_dbm[sf], cfg)


def reachable(params: TransmissionParams, distance_m: float, cfg: PhyConfig | None = None) -> bool:
    cfg = cfg or PhyConfig()
    return received_power(params.power_dbm, distance_m, cfg) >= cfg.sensitivity_dbm[params.sf]


def tx_current(power_dbm: float, cfg: PhyConfig) -> float:
    try:
        return cfg.tx_current_ma[float(power_dbm)]
    except KeyError:
        raise KeyError(f"no current entry for {power_dbm} dBm") from None


def tx_energy(params: TransmissionParams, airtime_s: float, cfg: PhyConfig | None = None) -> float:
    """Transmit energy in joules: V * I * t."""
    cfg = cfg or PhyConfig()
    if airtime_s < 0:
        raise ValueError("airtime_s must be >= 0")
    return cfg.supply_voltage_v * tx_current(params.power_dbm, cfg) / 1000.0 * airtime_s
