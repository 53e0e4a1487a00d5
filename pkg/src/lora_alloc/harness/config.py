"""Scenario definitions, presets and the YAML config loader.

Config keys mirror :class:`Scenario` fields. ``name`` selects a preset to
start from (``custom`` starts from plain defaults); every other key overrides
it. Unknown keys are errors and are reported with their line number.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field

import yaml

from ..agent import AgentConfig, RewardWeights
from ..medium import RadioMedium, SirMatrix, default_thresholds
from ..mobility import MobilityConfig
from ..phy import PhyConfig
from ..policies import POLICIES
from ..sim import SimConfig

PRESETS = ("mobility", "dense", "mac", "jamming", "custom")


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the line and field."""


@dataclass
class SirConfig:
    co_sf_db: float = 6.0
    inter_sf_db: float = -8.0
    matrix: list | None = None  # full 6x6 override, rows SF7..SF12
    aggregate: bool = False

    def build(self) -> SirMatrix:
        if self.matrix is not None:
            return SirMatrix.from_rows(self.matrix)
        return SirMatrix(default_thresholds(self.co_sf_db, self.inter_sf_db))


@dataclass
class Scenario:
    name: str = "custom"
    sim: SimConfig = field(default_factory=SimConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    sir: SirConfig = field(default_factory=SirConfig)
    policies: list = field(default_factory=lambda: ["drl"])
    policy_options: dict = field(default_factory=dict)
    variants: list = field(default_factory=lambda: [{}])
    epochs: int = 2000
    replications: int = 1
    jam_schedule: tuple | None = None  # (epoch, channel)
    power_term: bool = False
    output_dir: str = "results"

    def __post_init__(self):
        if self.name not in PRESETS:
            raise ConfigError(f"name: unknown scenario {self.name!r}; choose from {PRESETS}")
        if self.replications < 1:
            raise ConfigError("replications: must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs: must be >= 1")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"policies: unknown policy {p!r}; choose from {sorted(POLICIES)}")
        if not self.variants:
            self.variants = [{}]
        if self.jam_schedule is not None:
            self.jam_schedule = tuple(int(v) for v in self.jam_schedule)
            if len(self.jam_schedule) != 2:
                raise ConfigError("jam_schedule: expected [epoch, channel]")
            if max(self.variant_sim(i).channels for i in range(len(self.variants))) < 2:
                raise ConfigError("jam_schedule: needs at least 2 channels")

    def variant_sim(self, index: int) -> SimConfig:
        """The base SimConfig with variant ``index``'s overrides applied."""
        overrides = dict(self.variants[index])
        if "mobility" in overrides and isinstance(overrides["mobility"], dict):
            overrides["mobility"] = MobilityConfig(**overrides["mobility"])
        try:
            return dataclasses.replace(self.sim, **overrides)
        except TypeError as exc:
            raise ConfigError(f"variants[{index}]: {exc}") from None

    def medium(self, channels: int) -> RadioMedium:
        return RadioMedium(channels, self.sir.build(), aggregate=self.sir.aggregate)


# Preset allocator settings: the learner only considers parameters whose link
# budget reaches the newcomer, and airtime is weighted enough to steer it
# toward the smallest such SF.
PRESET_REWARD = RewardWeights(beta=0.1)
PRESET_OPTIONS = {"drl": {"reach_mask": True}}


def _preset(name, **kw):
    return Scenario(name, reward=copy.deepcopy(PRESET_REWARD), policy_options=copy.deepcopy(PRESET_OPTIONS), **kw)


def _gm(mean, sigma):
    return {"model": "gauss_markov", "mean_kmh": mean, "sigma_kmh": sigma}


def preset(name: str) -> Scenario:
    """Built-in experiment definitions."""
    if name == "mobility":
        return _preset(name, sim=SimConfig(n_eds=100, channels=1, powers=(14.0,)),
                        policies=["drl", "rule_based", "exp3"],
                        variants=[{}, {"mobility": _gm(5.0, 3.0)}, {"mobility": _gm(30.0, 10.0)}])
    if name == "dense":
        return _preset(name, sim=SimConfig(n_eds=250, channels=8, powers=(14.0,)), policies=["drl"],
                        variants=[{"n_eds": n} for n in (250, 500, 750, 1000)])
    if name == "mac":
        return _preset(name, sim=SimConfig(n_eds=100, channels=2, powers=(14.0,)), policies=["drl"],
                        variants=[{"mac": m} for m in ("aloha", "delay_before_transmit", "csma")])
    if name == "jamming":
        slow = _gm(0.5, 0.25)
        return _preset(name, sim=SimConfig(n_eds=100, channels=2, powers=(14.0,),
                                            mobility=MobilityConfig(**slow)),
                        policies=["drl", "rule_based"], variants=[{}, {"channels": 1}], jam_schedule=(900, 1))
    if name == "custom":
        return Scenario()
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")


# ----------------------------------------------------------------------
# YAML loading with line numbers

def _plain(node):
    """Convert a composed YAML node into Python values, keeping marks for mappings."""
    if isinstance(node, yaml.MappingNode):
        out = {}
        marks = {}
        for k, v in node.value:
            key = yaml.safe_load(yaml.serialize(k)) if not isinstance(k, yaml.ScalarNode) else k.value
            out[key] = _plain(v)
            marks[key] = k.start_mark.line + 1
        return _Mapping(out, marks)
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v) for v in node.value]
    return yaml.safe_load(yaml.serialize(node))


class _Mapping(dict):
    def __init__(self, values, marks):
        super().__init__(values)
        self.marks = marks

    def line(self, key) -> int:
        return self.marks.get(key, 0)


def _unwrap(value):
    if isinstance(value, dict):
        return {k: _unwrap(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_unwrap(v) for v in value]
    return value


def _build(cls, mapping, where: str, base=None):
    """Instantiate dataclass ``cls`` from ``mapping``, rejecting unknown keys."""
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in mapping:
        if key not in names:
            line = mapping.line(key) if isinstance(mapping, _Mapping) else 0
            raise ConfigError(f"line {line}: unknown field {where}.{key}")
    nested = {"mobility": MobilityConfig, "phy": PhyConfig}
    kwargs = {}
    for key, value in mapping.items():
        if key in nested and cls is SimConfig:
            prev = getattr(base, key) if base is not None else None
            value = _build(nested[key], value, f"{where}.{key}", prev)
        else:
            value = _unwrap(value)
        kwargs[key] = value
    try:
        if base is not None:
            return dataclasses.replace(base, **kwargs)
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        line = min((mapping.line(k) for k in mapping), default=0) if isinstance(mapping, _Mapping) else 0
        raise ConfigError(f"line {line}: {where}: {exc}") from None


def parse_scenario(text: str) -> Scenario:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError(f"line {line}: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        return preset("custom")
    doc = _plain(root)
    if not isinstance(doc, dict):
        raise ConfigError("line 1: top level must be a mapping")
    names = {f.name for f in dataclasses.fields(Scenario)}
    for key in doc:
        if key not in names:
            raise ConfigError(f"line {doc.line(key)}: unknown field {key}")
    base = preset(_unwrap(doc.get("name", "custom")))
    sections = {"sim": SimConfig, "agent": AgentConfig, "reward": RewardWeights, "sir": SirConfig}
    kwargs = {}
    for key, value in doc.items():
        if key in sections:
            kwargs[key] = _build(sections[key], value, key, getattr(base, key))
        else:
            kwargs[key] = _unwrap(value)
    try:
        return dataclasses.replace(copy.deepcopy(base), **kwargs)
    except ConfigError as exc:
        raise ConfigError(f"line {doc.line(str(exc).split(':')[0])}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scenario: {exc}") from None


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def dump_scenario(scenario: Scenario) -> str:
    """YAML text that :func:`parse_scenario` turns back into an equal scenario."""
    doc = dataclasses.asdict(scenario)
    doc["sim"]["sfs"] = list(doc["sim"]["sfs"])
    doc["sim"]["powers"] = list(doc["sim"]["powers"])
    if doc["jam_schedule"] is not None:
        doc["jam_schedule"] = list(doc["jam_schedule"])
    return yaml.safe_dump(doc, sort_keys=False)
