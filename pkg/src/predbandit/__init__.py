"""Contextual bandits driven by subsampled predictive inference.

Thompson sampling whose arm posteriors come from a cheap variance estimate
over the trajectory of a sequential model's predictive means, plus adaptive
arm encoding, synthetic and logged-data environments, off-policy evaluation,
and an experiment harness.
"""

from .core import (BinnedPMF, Gaussian, Observation, SeedSpec, crps,
                   crps_binned, crps_gaussian, cumulative_regret,
                   derive_seed, encode_onehot, normal_cdf, normal_quantile)
from .envs import (ClassificationEnv, LoggedDataset, SyntheticEnv, ingest_csv,
                   read_logged_csv, sample_friedman_dgp, sample_linear_dgp,
                   sample_synbart_dgp, write_logged_csv)
from .predictive import (BetaBernoulliModel, BridgeModel, BridgeSession,
                         ConjugateLinearModel, SnapshotHandle)
from .subclt import (GeometricGrid, SubCltEstimate, block_weights,
                     coverage_diagnostic, geometric_grid, interval,
                     subclt_estimate, thompson_draw)
from .agents import (LinTsAgent, LinUcbAgent, OracleAgent, PfnTsAgent,
                     UniformAgent)
from .ope import (PolicyTrace, cluster_bootstrap, dr_estimate,
                  importance_weights, replay_run, snips, weight_summary)
from .harness import ExperimentConfig, load_config, rank_table, run_experiment

__version__ = "0.1.0"

__all__ = [
    "BinnedPMF", "Gaussian", "Observation", "SeedSpec", "crps", "crps_binned",
    "crps_gaussian", "cumulative_regret", "derive_seed", "encode_onehot",
    "normal_cdf", "normal_quantile",
    "ClassificationEnv", "LoggedDataset", "SyntheticEnv", "ingest_csv",
    "read_logged_csv", "sample_friedman_dgp", "sample_linear_dgp",
    "sample_synbart_dgp", "write_logged_csv",
    "BetaBernoulliModel", "BridgeModel", "BridgeSession",
    "ConjugateLinearModel", "SnapshotHandle",
    "GeometricGrid", "SubCltEstimate", "block_weights", "coverage_diagnostic",
    "geometric_grid", "interval", "subclt_estimate", "thompson_draw",
    "LinTsAgent", "LinUcbAgent", "OracleAgent", "PfnTsAgent", "UniformAgent",
    "PolicyTrace", "cluster_bootstrap", "dr_estimate", "importance_weights",
    "replay_run", "snips", "weight_summary",
    "ExperimentConfig", "load_config", "rank_table", "run_experiment",
]
