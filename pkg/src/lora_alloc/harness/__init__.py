"""Experiment orchestration: scenarios, presets, runs, aggregation and output files."""

from .config import ConfigError, Scenario, dump_scenario, load_scenario, parse_scenario, preset
from .runner import CSV_HEADER, aggregate, emit_csv, emit_plotdata, run_replication, run_scenario

__all__ = ["CSV_HEADER", "ConfigError", "Scenario", "aggregate", "dump_scenario", "emit_csv", "emit_plotdata",
           "load_scenario", "parse_scenario", "preset", "run_replication", "run_scenario"]
