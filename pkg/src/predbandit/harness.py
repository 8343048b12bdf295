"""Experiment orchestration: configuration, replication management, result files.

Replications are paired: within a replication index every agent faces the
same realized environment, the same context stream, and counter-keyed noise,
so regret differences are attributable to the policies alone.
"""

from __future__ import annotations

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import agents as agents_mod
from .core import SeedSpec
from .envs import (ClassificationEnv, ingest_csv, sample_friedman_dgp,
                   sample_linear_dgp, sample_synbart_dgp)
from .errors import ConfigError, IncompleteResults
from .predictive import BridgeModel, ConjugateLinearModel, BetaBernoulliModel


SCENARIOS = (
    "linear", "friedman", "friedman2", "friedman3", "friedman-sparse",
    "friedman-sparse-disjoint", "friedman-hetero", "synbart", "classification",
)

AGENT_KINDS = ("pfnts", "pfn-ps", "pfn-greedy", "lints", "linucb", "uniform", "oracle")

_EXPERIMENT_KEYS = {"scenario", "horizon", "replications", "seed", "out_dir", "thin"}
_SCENARIO_KEYS = {"P", "K", "noise_variance", "csv_path", "label_column",
                  "categorical_columns", "horizon_cap"}
_AGENT_KEYS = {"name", "kind", "backend", "encoding", "b", "warmup", "v_floor",
               "v_fallback", "switch_times", "arm_threshold", "nu", "alpha",
               "lam", "prior_precision", "noise_variance", "bridge_command",
               "bridge_timeout", "draws"}


@dataclass
class ExperimentConfig:
    scenario: str
    horizon: int
    replications: int
    seed: int
    agents: list[dict]
    out_dir: str = "results"
    thin: int = 10
    scenario_params: dict = field(default_factory=dict)


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def parse_config(raw: dict) -> ExperimentConfig:
    if "experiment" not in raw:
        raise ConfigError("missing [experiment] section")
    _check_keys(raw, {"experiment", "scenario", "agents"}, "config")
    exp = raw["experiment"]
    _check_keys(exp, _EXPERIMENT_KEYS, "[experiment]")
    scenario = exp.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    horizon = int(exp.get("horizon", 0))
    replications = int(exp.get("replications", 0))
    if horizon < 1 or replications < 1:
        raise ConfigError("horizon and replications must be >= 1")
    agent_specs = raw.get("agents", [])
    if not agent_specs:
        raise ConfigError("at least one [[agents]] entry required")
    names = set()
    for spec in agent_specs:
        _check_keys(spec, _AGENT_KEYS, "[[agents]]")
        kind = spec.get("kind")
        if kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {kind!r}")
        name = spec.setdefault("name", kind)
        if name in names:
            raise ConfigError(f"duplicate agent name {name!r}")
        names.add(name)
    scenario_params = raw.get("scenario", {})
    _check_keys(scenario_params, _SCENARIO_KEYS, "[scenario]")
    return ExperimentConfig(
        scenario=scenario,
        horizon=horizon,
        replications=replications,
        seed=int(exp.get("seed", 42)),
        agents=agent_specs,
        out_dir=exp.get("out_dir", "results"),
        thin=int(exp.get("thin", 10)),
        scenario_params=dict(scenario_params),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return parse_config(raw)


# ---------------------------------------------------------------------------
# Scenario and agent factories
# ---------------------------------------------------------------------------

def realize_scenario(name: str, params: dict, seed: SeedSpec):
    if name == "linear":
        return sample_linear_dgp(seed, P=int(params.get("P", 10)),
                                 K=int(params.get("K", 3)),
                                 noise_variance=float(params.get("noise_variance", 1.0)))
    if name in ("friedman", "friedman2", "friedman3"):
        base = {"friedman": "friedman1"}.get(name, name)
        return sample_friedman_dgp(seed, scenario=base, arm2="shared",
                                   noise_variance=float(params.get("noise_variance", 1.0)))
    if name == "friedman-sparse":
        return sample_friedman_dgp(seed, arm2="shared", sparse=True,
                                   noise_variance=float(params.get("noise_variance", 1.0)))
    if name == "friedman-sparse-disjoint":
        return sample_friedman_dgp(seed, arm2="disjoint", sparse=True,
                                   noise_variance=float(params.get("noise_variance", 1.0)))
    if name == "friedman-hetero":
        return sample_friedman_dgp(seed, arm2="shared", hetero=True)
    if name == "synbart":
        return sample_synbart_dgp(seed)
    if name == "classification":
        if "csv_path" not in params or "label_column" not in params:
            raise ConfigError("classification scenario needs csv_path and label_column")
        return ingest_csv(params["csv_path"], params["label_column"],
                          params.get("categorical_columns", ()),
                          int(params.get("horizon_cap", 10_000)))
    raise ConfigError(f"unknown scenario {name!r}")


def _model_factory(spec: dict, binary_rewards: bool):
    backend = spec.get("backend", "conjugate")
    if backend == "conjugate":
        lam = float(spec.get("prior_precision", 1.0))
        sig2 = float(spec.get("noise_variance", 1.0))
        return lambda dim: ConjugateLinearModel(dim, lam, sig2)
    if backend == "beta-bernoulli":
        if not binary_rewards:
            raise ConfigError("beta-bernoulli backend requires a classification scenario")
        return lambda dim: BetaBernoulliModel()
    if backend == "bridge":
        command = spec.get("bridge_command")
        if not command:
            raise ConfigError("bridge backend needs bridge_command")
        timeout = float(spec.get("bridge_timeout", 60.0))
        return lambda dim: BridgeModel(command, dim, timeout=timeout)
    raise ConfigError(f"unknown backend {backend!r}")


def build_agent(spec: dict, env, seed: SeedSpec):
    kind = spec["kind"]
    dim, n_arms = env.dim, env.n_arms
    if kind in ("pfnts", "pfn-ps", "pfn-greedy"):
        rule = {"pfnts": "ts", "pfn-ps": "ps", "pfn-greedy": "greedy"}[kind]
        factory = _model_factory(spec, isinstance(env, ClassificationEnv))
        return agents_mod.PfnTsAgent(
            factory, dim, n_arms, seed,
            decision_rule=rule,
            encoding=spec.get("encoding", "adaptive"),
            warmup=int(spec.get("warmup", 5)),
            base=float(spec.get("b", 2.0)),
            v_floor=float(spec.get("v_floor", 1e-8)),
            v_fallback=float(spec.get("v_fallback", 1.0)),
            switch_times=spec.get("switch_times", agents_mod.DEFAULT_SWITCH_TIMES),
            arm_threshold=int(spec.get("arm_threshold", 5)),
        )
    if kind == "lints":
        return agents_mod.LinTsAgent(dim, n_arms, seed,
                                     nu=float(spec.get("nu", 1.0)),
                                     lam=float(spec.get("lam", 1.0)))
    if kind == "linucb":
        return agents_mod.LinUcbAgent(dim, n_arms, seed,
                                      alpha=float(spec.get("alpha", 1.0)),
                                      lam=float(spec.get("lam", 1.0)))
    if kind == "uniform":
        return agents_mod.UniformAgent(n_arms, seed)
    if kind == "oracle":
        return agents_mod.OracleAgent(env)
    raise ConfigError(f"unknown agent kind {kind!r}")


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

def run_cell(config: ExperimentConfig, agent_spec: dict, rep: int) -> list[dict]:
    """One (agent, replication) regret curve, thinned plus the final round."""
    root = SeedSpec(config.seed)
    env_seed = root.derive("rep", rep)
    env = realize_scenario(config.scenario, config.scenario_params, env_seed)
    agent_seed = env_seed.derive("agent-" + agent_spec["name"])
    agent = build_agent(agent_spec, env, agent_seed)
    classification = isinstance(env, ClassificationEnv)

    record_at = set(range(config.thin, config.horizon + 1, config.thin))
    record_at.add(config.horizon)
    rows = []
    cum_regret = 0.0
    for t in range(1, config.horizon + 1):
        x = env.context(t)
        arm = agent.act(x, t)
        if classification:
            reward = env.step(t, arm)
            cum_regret += 1.0 - reward
        else:
            reward = env.reward(t, x, arm)
            means = env.true_means(x)
            cum_regret += float(means.max() - means[arm])
        agent.update(x, arm, reward, t)
        if t in record_at:
            rows.append({"scenario": config.scenario, "agent": agent_spec["name"],
                         "rep": rep, "t": t, "cum_regret": cum_regret})
    return rows


def _run_cell_packed(args):
    raw, agent_index, rep = args
    config = parse_config(raw)
    return run_cell(config, config.agents[agent_index], rep)


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   raw_config: dict | None = None) -> Path:
    """Run every (agent, replication) cell and write results + aggregates."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(ai, rep) for ai in range(len(config.agents))
             for rep in range(config.replications)]
    if jobs > 1 and raw_config is not None:
        tasks = [(raw_config, ai, rep) for ai, rep in cells]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_cell_packed, tasks))
    else:
        chunks = [run_cell(config, config.agents[ai], rep) for ai, rep in cells]
    rows = [row for chunk in chunks for row in chunk]
    frame = pd.DataFrame(rows)
    order = {spec["name"]: i for i, spec in enumerate(config.agents)}
    frame = frame.sort_values(
        by=["agent", "rep", "t"],
        key=lambda col: col.map(order) if col.name == "agent" else col,
    ).reset_index(drop=True)
    frame.to_csv(out / "results.csv", index=False)
    write_aggregates(frame, out / "aggregates.json")
    return out


def write_aggregates(frame: pd.DataFrame, path) -> None:
    """Mean/SD/SE curves per agent at the recorded rounds."""
    aggregates = {}
    for (scenario, agent), group in frame.groupby(["scenario", "agent"], sort=False):
        pivot = group.pivot_table(index="t", columns="rep", values="cum_regret")
        n = pivot.shape[1]
        aggregates.setdefault(scenario, {})[agent] = {
            "t": [int(v) for v in pivot.index],
            "mean": [float(v) for v in pivot.mean(axis=1)],
            "sd": [float(v) for v in pivot.std(axis=1, ddof=1).fillna(0.0)],
            "se": [float(v) for v in (pivot.std(axis=1, ddof=1) / np.sqrt(n)).fillna(0.0)],
            "replications": n,
        }
    with open(path, "w") as fh:
        json.dump(aggregates, fh, indent=2)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def rank_table(frames) -> pd.DataFrame:
    """Mean final regret +/- SE per (scenario, agent) and average midranks.

    Raises IncompleteResults when some (scenario, agent) cell is absent.
    """
    if isinstance(frames, pd.DataFrame):
        frame = frames
    else:
        frame = pd.concat([pd.read_csv(p) for p in frames], ignore_index=True)
    finals = (frame.sort_values("t").groupby(["scenario", "agent", "rep"])
              .tail(1).reset_index(drop=True))
    scenarios = sorted(finals["scenario"].unique())
    agent_names = sorted(finals["agent"].unique())
    missing = [(s, a) for s in scenarios for a in agent_names
               if finals[(finals.scenario == s) & (finals.agent == a)].empty]
    if missing:
        raise IncompleteResults(f"missing cells: {missing}", missing)

    records = []
    for scenario in scenarios:
        sub = finals[finals.scenario == scenario]
        stats = sub.groupby("agent")["cum_regret"].agg(["mean", "sem", "count"])
        ranks = stats["mean"].rank(method="average")
        for agent in agent_names:
            records.append({
                "scenario": scenario,
                "agent": agent,
                "mean_final_regret": float(stats.loc[agent, "mean"]),
                "se_final_regret": float(np.nan_to_num(stats.loc[agent, "sem"])),
                "rank": float(ranks.loc[agent]),
            })
    table = pd.DataFrame(records)
    avg = table.groupby("agent")["rank"].mean().rename("avg_rank")
    return table.merge(avg, on="agent")
