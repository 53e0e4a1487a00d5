"""Training/evaluation orchestration, replication aggregation and file output."""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..phy import SF_RANGE
from ..policies import make_policy
from ..sim import SimConfig, network_pdr, per_sf_pdr, run_episode, sf_allocation
from .config import Scenario

CSV_HEADER = (
    ["epoch", "policy", "n_eds", "velocity_kmh", "channels", "pdr_mean", "pdr_ci95", "energy_mj_mean"]
    + [f"per_sf_alloc_{sf}" for sf in SF_RANGE]
    + [f"per_sf_pdr_{sf}" for sf in SF_RANGE]
    + ["seed"]
)
NOT_APPLICABLE = "NA"


@dataclass
class EpochRecord:
    epoch: int
    pdr: float
    energy_mj: float
    alloc: list
    sf_pdr: list


@dataclass
class RunResult:
    policy: str
    variant: int
    seed: int
    records: list = field(default_factory=list)
    checkpoint: str | None = None


def run_label(scenario: Scenario, policy: str, variant: int) -> str:
    """Policy column text; MAC variants carry the MAC name since the CSV has no MAC column."""
    sim = scenario.variant_sim(variant)
    if any("mac" in v for v in scenario.variants):
        return f"{policy}@{sim.mac}"
    return policy


def build_policy(scenario: Scenario, name: str, sim: SimConfig, seed: int):
    opts = dict(scenario.policy_options.get(name, {}))
    if name == "drl":
        opts.setdefault("agent_cfg", scenario.agent)
        opts.setdefault("reward_weights", scenario.reward)
        opts.setdefault("power_term", scenario.power_term)
        opts.setdefault("payload_bytes", sim.payload_bytes)
        opts.setdefault("seed", seed)
    return make_policy(name, **opts)


def record_of(epoch: int, metrics) -> EpochRecord:
    alloc = sf_allocation(metrics)
    if metrics.total_sent:
        pdr = network_pdr(metrics)
        sf_pdr = per_sf_pdr(metrics)
    else:
        pdr = float("nan")
        sf_pdr = {sf: float("nan") for sf in SF_RANGE}
    return EpochRecord(epoch, pdr, metrics.mean_energy_j * 1e3,
                       [alloc[sf] for sf in SF_RANGE], [sf_pdr[sf] for sf in SF_RANGE])


def run_replication(scenario: Scenario, policy_name: str, variant: int, seed: int,
                    epochs: int | None = None, policy=None, checkpoint_dir: str | None = None) -> RunResult:
    """Train (or just run) one policy on one variant for ``epochs`` epochs."""
    sim = scenario.variant_sim(variant)
    sim = dataclasses.replace(sim, seed=seed)
    medium = scenario.medium(sim.channels)
    policy = policy if policy is not None else build_policy(scenario, policy_name, sim, seed)
    result = RunResult(policy_name, variant, seed)
    jam = scenario.jam_schedule if sim.channels >= 2 else None
    for epoch in range(epochs if epochs is not None else scenario.epochs):
        if jam is not None and epoch == jam[0]:
            medium.jam(jam[1], 0.0)
        metrics = run_episode(sim, policy, medium, episode=epoch)
        result.records.append(record_of(epoch, metrics))
    if checkpoint_dir is not None and getattr(policy, "agent", None) is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)
        path = os.path.join(checkpoint_dir, f"{policy_name}_v{variant}_s{seed}.qnet")
        policy.agent.save(path)
        result.checkpoint = path
    return result


def evaluate(scenario: Scenario, policy, variant: int, seed: int, epochs: int) -> list[EpochRecord]:
    """Run a frozen policy (no learning, greedy for DRL)."""
    if hasattr(policy, "train"):
        policy.train = False
    return run_replication(scenario, policy.name, variant, seed, epochs, policy=policy).records


# ----------------------------------------------------------------------

def t_quantile(n: int) -> float:
    return float(stats.t.ppf(0.975, n - 1))


def aggregate(values) -> tuple[float, float | None]:
    """Mean and Student-t 95% half-width; ``None`` for the width of a single value.

    NaN entries (e.g. an SF nobody used) are ignored. Sorting first makes the
    floating-point sum independent of replication order.
    """
    vals = sorted(float(v) for v in values if not math.isnan(float(v)))
    if not vals:
        return float("nan"), None
    mean = math.fsum(vals) / len(vals)
    if len(vals) < 2:
        return mean, None
    var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    return mean, t_quantile(len(vals)) * math.sqrt(var / len(vals))


def _fmt(x) -> str:
    if x is None:
        return NOT_APPLICABLE
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def epoch_rows(scenario: Scenario, results: list[RunResult], base_seed: int) -> list[list[str]]:
    """One row per (policy, variant, epoch), aggregated over replications."""
    groups: dict = {}
    for res in sorted(results, key=lambda r: (r.policy, r.variant, r.seed)):
        groups.setdefault((res.policy, res.variant), []).append(res)
    rows = []
    for (policy, variant), runs in sorted(groups.items(), key=lambda kv: (scenario.policies.index(kv[0][0]), kv[0][1])):
        sim = scenario.variant_sim(variant)
        velocity = sim.mobility.mean_kmh if sim.mobility.moving else 0.0
        n_epochs = min(len(r.records) for r in runs)
        for e in range(n_epochs):
            recs = [r.records[e] for r in runs]
            pdr, ci = aggregate(r.pdr for r in recs)
            energy, _ = aggregate(r.energy_mj for r in recs)
            alloc = [aggregate(r.alloc[k] for r in recs)[0] for k in range(6)]
            sf_pdr = [aggregate(r.sf_pdr[k] for r in recs)[0] for k in range(6)]
            rows.append([str(e), run_label(scenario, policy, variant), str(sim.n_eds), _fmt(velocity),
                         str(sim.channels), _fmt(pdr), _fmt(ci), _fmt(energy)]
                        + [_fmt(v) for v in alloc] + [_fmt(v) for v in sf_pdr] + [str(base_seed)])
    return rows


def emit_csv(rows, path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_plotdata(series: dict, path) -> None:
    """Write ``{label: [(x, y), ...]}`` as blank-line separated two-column blocks."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for label, points in series.items():
                fh.write(f"# {label}\n")
                for x, y in points:
                    fh.write(f"{_fmt(float(x))} {_fmt(float(y))}\n")
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def summary_rows(scenario: Scenario, results: list[RunResult], tail: int) -> list[list[str]]:
    """Mean and CI of each run's average over its last ``tail`` epochs."""
    groups: dict = {}
    for res in results:
        groups.setdefault((res.policy, res.variant), []).append(res)
    out = []
    for (policy, variant), runs in sorted(groups.items(), key=lambda kv: (scenario.policies.index(kv[0][0]), kv[0][1])):
        sim = scenario.variant_sim(variant)
        velocity = sim.mobility.mean_kmh if sim.mobility.moving else 0.0
        finals = [tail_mean(r, tail) for r in runs]
        pdr, ci = aggregate(f[0] for f in finals)
        energy, _ = aggregate(f[1] for f in finals)
        alloc = [aggregate(f[2][k] for f in finals)[0] for k in range(6)]
        sf_pdr = [aggregate(f[3][k] for f in finals)[0] for k in range(6)]
        out.append([run_label(scenario, policy, variant), str(sim.n_eds), _fmt(velocity), str(sim.channels),
                    sim.mac, _fmt(pdr), _fmt(ci), _fmt(energy)] + [_fmt(v) for v in alloc + sf_pdr])
    return out


SUMMARY_HEADER = (["policy", "n_eds", "velocity_kmh", "channels", "mac", "pdr_mean", "pdr_ci95", "energy_mj_mean"]
                  + [f"per_sf_alloc_{sf}" for sf in SF_RANGE] + [f"per_sf_pdr_{sf}" for sf in SF_RANGE])


def tail_mean(result: RunResult, tail: int):
    recs = result.records[-tail:]
    pdr = float(np.nanmean([r.pdr for r in recs]))
    energy = float(np.mean([r.energy_mj for r in recs]))
    alloc = np.nanmean([r.alloc for r in recs], axis=0).tolist()
    with np.errstate(all="ignore"):
        sf = np.array([r.sf_pdr for r in recs], dtype=float)
        sf_pdr = [float(np.nanmean(col)) if np.any(~np.isnan(col)) else float("nan") for col in sf.T]
    return pdr, energy, alloc, sf_pdr


def _job(args):
    scenario, policy, variant, seed, checkpoint_dir = args
    return run_replication(scenario, policy, variant, seed, checkpoint_dir=checkpoint_dir)


def run_scenario(scenario: Scenario, seed: int = 0, jobs: int = 1, out_dir: str | None = None,
                 checkpoints: bool = False) -> list[RunResult]:
    """Run every policy x variant x replication and write CSV, summary and plot data.

    Replication ``r`` uses seed ``seed + r``. Results are merged by key, so
    the files do not depend on completion order.
    """
    out_dir = out_dir or scenario.output_dir
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "checkpoints") if checkpoints else None
    tasks = [(scenario, p, v, seed + r, ckpt)
             for p in scenario.policies for v in range(len(scenario.variants)) for r in range(scenario.replications)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, tasks))
    else:
        results = [_job(t) for t in tasks]
    write_outputs(scenario, results, seed, out_dir)
    return results


def write_outputs(scenario: Scenario, results: list[RunResult], seed: int, out_dir: str) -> None:
    name = scenario.name
    emit_csv(epoch_rows(scenario, results, seed), os.path.join(out_dir, f"{name}_epochs.csv"))
    tail = max(1, scenario.epochs // 10)
    path = os.path.join(out_dir, f"{name}_summary.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        writer.writerows(summary_rows(scenario, results, tail))
    series: dict = {}
    for res in sorted(results, key=lambda r: (r.policy, r.variant, r.seed)):
        series.setdefault((res.policy, res.variant), []).append(res)
    plot = {}
    for (policy, variant), runs in series.items():
        sim = scenario.variant_sim(variant)
        label = f"{run_label(scenario, policy, variant)} n={sim.n_eds} ch={sim.channels}"
        if sim.mobility.moving:
            label += f" v={sim.mobility.mean_kmh:g}"
        n_epochs = min(len(r.records) for r in runs)
        plot[label] = [(e, aggregate(r.records[e].pdr for r in runs)[0]) for e in range(n_epochs)]
    emit_plotdata(plot, os.path.join(out_dir, f"{name}_pdr.dat"))
