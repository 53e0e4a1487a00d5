"""Command line: ``train``, ``eval``, ``run <preset>`` and ``sweep``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from ..policies import POLICIES, ActionSpace
from .config import PRESETS, ConfigError, Scenario, load_scenario, preset
from .runner import RunResult, build_policy, evaluate, run_replication, run_scenario, write_outputs

log = logging.getLogger("lora_alloc")


def _scenario(args, default: str = "custom") -> Scenario:
    scenario = load_scenario(args.config) if args.config else preset(getattr(args, "preset", None) or default)
    changes = {}
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.policy:
        changes["policies"] = [args.policy]
    if args.out:
        changes["output_dir"] = args.out
    return dataclasses.replace(scenario, **changes) if changes else scenario


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario YAML file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--policy", choices=sorted(POLICIES))
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel replications")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lora-alloc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a preset experiment")
    p.add_argument("preset", choices=PRESETS)
    _common(p)
    p.add_argument("--checkpoints", action="store_true", help="save trained weights")

    p = sub.add_parser("train", help="train one policy and save its weights")
    _common(p)
    p.add_argument("--variant", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate saved weights with a frozen greedy policy")
    _common(p)
    p.add_argument("--variant", type=int, default=0)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("sweep", help="vary one simulation field")
    _common(p)
    p.add_argument("--param", required=True, help="SimConfig field, e.g. n_eds")
    p.add_argument("--values", required=True, help="comma separated values")
    return parser


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        scenario = _scenario(args)
        run_scenario(scenario, seed=args.seed, jobs=args.jobs, checkpoints=args.checkpoints)
        print(f"wrote {scenario.name} results to {scenario.output_dir}")
        return 0
    if args.command == "sweep":
        base = _scenario(args)
        values = [_parse_value(v) for v in args.values.split(",") if v]
        if args.param not in {f.name for f in dataclasses.fields(base.sim)}:
            raise ConfigError(f"--param: unknown SimConfig field {args.param!r}")
        scenario = dataclasses.replace(base, variants=[{args.param: v} for v in values])
        run_scenario(scenario, seed=args.seed, jobs=args.jobs)
        print(f"wrote sweep over {args.param} to {scenario.output_dir}")
        return 0
    scenario = _scenario(args)
    if args.variant >= len(scenario.variants):
        raise ConfigError(f"--variant: scenario has {len(scenario.variants)} variants")
    name = args.policy or scenario.policies[0]
    os.makedirs(scenario.output_dir, exist_ok=True)
    if args.command == "train":
        res = run_replication(scenario, name, args.variant, args.seed,
                              checkpoint_dir=os.path.join(scenario.output_dir, "checkpoints"))
        write_outputs(dataclasses.replace(scenario, policies=[name]), [res], args.seed, scenario.output_dir)
        print(res.checkpoint or f"trained {name}; nothing to checkpoint")
        return 0
    sim = scenario.variant_sim(args.variant)
    policy = build_policy(scenario, name, sim, args.seed)
    if not hasattr(policy, "agent"):
        raise ConfigError(f"--policy: {name} has no weights to load")
    policy.bind(*_binding(scenario, args.variant))
    policy.agent.load(args.checkpoint)
    records = evaluate(scenario, policy, args.variant, args.seed, scenario.epochs)
    out = dataclasses.replace(scenario, name=scenario.name, policies=[name])
    write_outputs(out, [RunResult(name, args.variant, args.seed, records)], args.seed, scenario.output_dir)
    mean = sum(r.pdr for r in records) / len(records)
    print(f"greedy PDR {mean:.6f} over {len(records)} epochs")
    return 0


def _binding(scenario: Scenario, variant: int):
    """Arguments that size a DRL policy's networks before weights are loaded."""
    sim = scenario.variant_sim(variant)
    return ActionSpace(sim.channels, sim.sfs, sim.powers), sim.phy, sim.radius_m, np.random.default_rng(0)


if __name__ == "__main__":
    sys.exit(main())
