"""Simulation and learned resource allocation for a single-gateway LoRa cell."""

from .medium import RadioMedium, SirMatrix
from .phy import PhyConfig, TransmissionParams, time_on_air
from .policies import ActionSpace, make_policy
from .sim import EpisodeMetrics, SimConfig, network_pdr, per_sf_pdr, run_episode, sf_allocation

__all__ = ["RadioMedium", "SirMatrix", "PhyConfig", "TransmissionParams", "time_on_air", "ActionSpace",
           "make_policy", "EpisodeMetrics", "SimConfig", "network_pdr", "per_sf_pdr", "run_episode",
           "sf_allocation"]
