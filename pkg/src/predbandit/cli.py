"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
The PREDBANDIT_OUT environment variable sets the default output directory.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click
import numpy as np

from . import harness, ope as ope_mod, subclt
from .agents import FixedStochasticPolicy, PfnTsAgent
from .core import SeedSpec
from .envs import LinearRegressionDgp, read_logged_csv
from .errors import ConfigError, PredbanditError
from .predictive import ConjugateLinearModel


def _default_out() -> str:
    return os.environ.get("PREDBANDIT_OUT", "results")


@click.group()
def main() -> None:
    """Contextual-bandit experiments with subsampled predictive inference."""


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2 if isinstance(exc, ConfigError) else 1)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default=None, help="Override the output directory.")
@click.option("--jobs", type=int, default=1, show_default=True)
def run(config_path, seed, out, jobs) -> None:
    """Run the experiment described by a TOML config."""
    try:
        with open(config_path, "rb") as fh:
            raw = harness.tomllib.load(fh)
        config = harness.parse_config(raw)
        if seed is not None:
            config.seed = seed
            raw.setdefault("experiment", {})["seed"] = seed
        config.out_dir = out or os.environ.get("PREDBANDIT_OUT", config.out_dir)
        raw.setdefault("experiment", {})["out_dir"] = config.out_dir
        out_dir = harness.run_experiment(config, jobs=jobs, raw_config=raw)
    except FileNotFoundError as exc:
        _fail(ConfigError(str(exc)))
    except PredbanditError as exc:
        _fail(exc)
    else:
        click.echo(f"results written to {out_dir}")


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path())
@click.option("--policy", default=None,
              help="Fixed target policy probabilities, e.g. '0.2,0.5,0.3'. "
                   "Omit to replay the adaptive default agent.")
@click.option("--estimator", type=click.Choice(["snips", "dr"]), default="snips",
              show_default=True)
@click.option("--draws", type=int, default=100, show_default=True,
              help="Monte Carlo draws per step for policy probabilities.")
@click.option("--bootstrap", "n_boot", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def ope(log_path, policy, estimator, draws, n_boot, seed, out) -> None:
    """Evaluate a target policy on logged bandit data."""
    out_dir = Path(out or _default_out())
    try:
        log = read_logged_csv(log_path)
        decisions = list(log)
        if not decisions:
            raise ConfigError("empty log")
        n_arms = len(decisions[0].propensity)
        dim = len(decisions[0].context)
        root = SeedSpec(seed)
        if policy is not None:
            try:
                probs = [float(p) for p in policy.split(",")]
            except ValueError as exc:
                raise ConfigError(f"bad --policy value: {policy!r}") from exc
            if len(probs) != n_arms or abs(sum(probs) - 1.0) > 1e-6:
                raise ConfigError(f"--policy needs {n_arms} probabilities summing to 1")
            agent = FixedStochasticPolicy(np.array(probs), root.derive("policy"))
        else:
            agent = PfnTsAgent(lambda d: ConjugateLinearModel(d), dim, n_arms,
                               root.derive("agent"))
        trace = ope_mod.replay_run(agent, decisions, n_draws=draws,
                                   rng=root.derive("replay").rng())
        est_fn = {"snips": ope_mod.snips,
                  "dr": lambda tr, lg: ope_mod.dr_estimate(
                      tr, lg, rng=root.derive("folds").rng())}[estimator]
        boot = ope_mod.cluster_bootstrap(decisions, trace, est_fn, B=n_boot,
                                         rng=root.derive("bootstrap").rng())
        summary = ope_mod.weight_summary(trace, decisions)
        out_dir.mkdir(parents=True, exist_ok=True)
        ope_mod.write_ope_report(out_dir / "ope_report.json", estimator, boot,
                                 summary, len(decisions))
        ope_mod.write_weight_histogram(out_dir / "weight_histogram.csv", summary)
    except PredbanditError as exc:
        _fail(exc)
    except FileNotFoundError as exc:
        _fail(ConfigError(str(exc)))
    else:
        click.echo(f"{estimator} = {boot['point']:.4f} "
                   f"[{boot['lo']:.4f}, {boot['hi']:.4f}] -> {out_dir}")


@main.command()
@click.option("--sizes", default="16,64,256,1024", show_default=True)
@click.option("--reps", type=int, default=20, show_default=True)
@click.option("--queries", type=int, default=5, show_default=True)
@click.option("--level", type=float, default=0.95, show_default=True)
@click.option("--dim", type=int, default=5, show_default=True)
@click.option("--noise-variance", type=float, default=0.25, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def coverage(sizes, reps, queries, level, dim, noise_variance, seed, out) -> None:
    """Interval-coverage diagnostic on a conjugate linear data generator."""
    out_dir = Path(out or _default_out())
    try:
        size_list = [int(s) for s in sizes.split(",")]
    except ValueError:
        _fail(ConfigError(f"bad --sizes value: {sizes!r}"))
    try:
        rows = subclt.coverage_diagnostic(
            dgp_factory=lambda rng: LinearRegressionDgp(
                rng, dim=dim, noise_variance=noise_variance),
            model_factory=lambda: ConjugateLinearModel(
                dim, noise_variance=noise_variance),
            sizes=size_list, reps=reps, queries_per_rep=queries, level=level,
            seed=SeedSpec(seed), dgp_name="linear-conjugate")
        out_dir.mkdir(parents=True, exist_ok=True)
        subclt.write_coverage_csv(rows, out_dir / "coverage.csv")
    except PredbanditError as exc:
        _fail(exc)
    else:
        for line in subclt.coverage_summary(rows):
            click.echo(f"n={line['n']:>6d}  coverage={line['coverage']:.3f}  "
                       f"mean_length={line['mean_length']:.4f}")
        click.echo(f"rows written to {out_dir / 'coverage.csv'}")


@main.command()
@click.option("--results", "results_dir", required=True, type=click.Path())
@click.option("--out", type=click.Path(), default=None)
def report(results_dir, out) -> None:
    """Rank table and plot-ready aggregates from completed run directories."""
    out_dir = Path(out or _default_out())
    try:
        import pandas as pd
        paths = sorted(Path(results_dir).rglob("results.csv"))
        if not paths:
            raise ConfigError(f"no results.csv under {results_dir}")
        frame = pd.concat([pd.read_csv(p) for p in paths], ignore_index=True)
        table = harness.rank_table(frame)
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_dir / "rank_table.csv", index=False)
        harness.write_aggregates(frame, out_dir / "aggregates.json")
    except PredbanditError as exc:
        _fail(exc)
    else:
        click.echo(table.to_string(index=False))
        click.echo(f"written to {out_dir}")


if __name__ == "__main__":
    main()
