"""Off-policy evaluation on logged bandit data.

Replay simulation (agents update only on matched proposals), self-normalized
importance sampling, doubly-robust estimation with cluster-aware
cross-fitting, user-level cluster bootstrap, and weight diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .core import SeedSpec
from .errors import (ClusterError, DegenerateWeights, EmptyLog, ParamError,
                     WeightBoundError)


@dataclass
class PolicyTrace:
    """Per-decision estimated target-policy probabilities and replay outcome."""

    probabilities: np.ndarray  # (n, K)
    proposals: np.ndarray      # (n,)
    matched: np.ndarray        # (n,) booleans

    def __len__(self) -> int:
        return len(self.proposals)


def replay_run(agent, log, n_draws: int = 100,
               rng: np.random.Generator | None = None) -> PolicyTrace:
    """Replay an adaptive policy over a logged stream.

    At each step the target-policy action distribution is estimated from
    ``n_draws`` state-preserving draws (pre-update policy), one proposal is
    drawn, and the agent is updated only when its proposal matches the
    logged action.
    """
    if n_draws < 1:
        raise ParamError("n_draws must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    probs, proposals, matched = [], [], []
    t_agent = 1
    for decision in log:
        x = decision.context
        probs.append(agent.action_probabilities(x, t_agent, n_draws, rng))
        proposal = agent.act(x, t_agent)
        hit = proposal == decision.action
        if hit:
            agent.update(x, decision.action, decision.reward, t_agent)
            t_agent += 1
        proposals.append(proposal)
        matched.append(hit)
    return PolicyTrace(np.asarray(probs), np.asarray(proposals, dtype=int),
                       np.asarray(matched, dtype=bool))


def importance_weights(trace: PolicyTrace, log) -> np.ndarray:
    """w_t = pi(A_t | X_t) / pi_0(A_t) under the estimated target policy."""
    weights = np.empty(len(trace))
    for i, decision in enumerate(log):
        weights[i] = trace.probabilities[i, decision.action] / decision.propensity[decision.action]
    return weights


def snips(trace: PolicyTrace, log) -> float:
    """Self-normalized importance sampling estimate of the policy value."""
    weights = importance_weights(trace, log)
    total = weights.sum()
    if total == 0:
        raise DegenerateWeights("all importance weights are zero")
    rewards = np.array([d.reward for d in log])
    return float(np.dot(weights, rewards) / total)


def _ridge_fit(X, y, lam):
    d = X.shape[1]
    return np.linalg.solve(X.T @ X + lam * np.eye(d), X.T @ y)


def dr_estimate(trace: PolicyTrace, log, lam: float = 1.0, folds: int = 2,
                rng: np.random.Generator | None = None) -> float:
    """Doubly-robust policy value with cluster-level cross-fitting.

    Clusters are split into folds; a per-arm ridge outcome model fitted on
    the complementary folds supplies the regression term, and importance
    weighting corrects its residuals. Arms unseen in a training fold fall
    back to the training fold's mean reward.
    """
    decisions = list(log)
    if not decisions:
        raise EmptyLog("cannot run DR on an empty log")
    if folds < 2:
        raise ParamError("folds must be >= 2")
    if rng is None:
        rng = np.random.default_rng(0)
    n = len(decisions)
    K = len(decisions[0].propensity)
    X = np.array([d.context for d in decisions])
    rewards = np.array([d.reward for d in decisions])
    actions = np.array([d.action for d in decisions], dtype=int)
    clusters = np.array([d.cluster_id for d in decisions], dtype=int)
    weights = importance_weights(trace, log)

    unique = np.unique(clusters)
    order = rng.permutation(len(unique))
    fold_of_cluster = {unique[j]: order_idx % folds
                       for order_idx, j in enumerate(order)}
    fold_ids = np.array([fold_of_cluster[c] for c in clusters])

    total = 0.0
    for fold in range(folds):
        held = fold_ids == fold
        train = ~held
        if not held.any():
            continue
        fallback = rewards[train].mean() if train.any() else rewards.mean()
        qhats = []
        for a in range(K):
            sel = train & (actions == a)
            if sel.any():
                coef = _ridge_fit(X[sel], rewards[sel], lam)
                qhats.append(coef)
            else:
                qhats.append(None)

        def q(xs, a):
            if qhats[a] is None:
                return np.full(len(xs), fallback)
            return xs @ qhats[a]

        direct = np.zeros(held.sum())
        for a in range(K):
            direct += trace.probabilities[held, a] * q(X[held], a)
        resid = rewards[held] - np.array(
            [q(X[held][i:i + 1], actions[held][i])[0] for i in range(held.sum())])
        total += float(np.sum(direct + weights[held] * resid))
    return total / n


def cluster_bootstrap(log, trace: PolicyTrace, estimator, B: int = 30,
                      rng: np.random.Generator | None = None) -> dict:
    """Percentile 95% interval from resampling whole clusters with replacement."""
    decisions = list(log)
    clusters = np.array([d.cluster_id for d in decisions], dtype=int)
    unique = np.unique(clusters)
    if len(unique) < 2:
        raise ClusterError(f"need >= 2 clusters, got {len(unique)}")
    if rng is None:
        rng = np.random.default_rng(0)
    index_of = {c: np.flatnonzero(clusters == c) for c in unique}
    point = estimator(trace, decisions)
    values = np.empty(B)
    for b in range(B):
        chosen = rng.choice(unique, size=len(unique), replace=True)
        idx = np.concatenate([index_of[c] for c in chosen])
        sub_trace = PolicyTrace(trace.probabilities[idx], trace.proposals[idx],
                                trace.matched[idx])
        sub_log = [decisions[i] for i in idx]
        values[b] = estimator(sub_trace, sub_log)
    lo, hi = np.percentile(values, [2.5, 97.5])
    return {"point": point, "lo": float(lo), "hi": float(hi),
            "se": float(values.std(ddof=1)), "replicates": values}


def weight_summary(trace: PolicyTrace, log, n_bins: int = 20) -> dict:
    """Log-scale weight histogram plus the maximum weight.

    Raises when any weight exceeds 1 / min propensity (plus float slack),
    which would indicate corrupted probabilities.
    """
    weights = importance_weights(trace, log)
    min_prop = min(float(d.propensity.min()) for d in log)
    bound = 1.0 / min_prop + 1e-9
    max_w = float(weights.max()) if len(weights) else 0.0
    if max_w > bound:
        raise WeightBoundError(f"max weight {max_w} exceeds bound {bound}")
    positive = weights[weights > 0]
    if len(positive):
        edges = np.logspace(np.log10(max(positive.min(), 1e-12)),
                            np.log10(max(positive.max(), 1e-12) + 1e-12), n_bins + 1)
        counts, edges = np.histogram(positive, bins=edges)
    else:
        counts, edges = np.zeros(n_bins, dtype=int), np.zeros(n_bins + 1)
    return {"max_weight": max_w, "n_zero": int((weights == 0).sum()),
            "bin_edges": edges, "counts": counts}


def write_ope_report(path, estimator_name: str, boot: dict, summary: dict,
                     n: int, horizon_curve=()) -> None:
    report = {
        "estimator": estimator_name,
        "point": boot["point"],
        "ci_lo": boot["lo"],
        "ci_hi": boot["hi"],
        "B": len(boot["replicates"]),
        "max_weight": summary["max_weight"],
        "n": n,
        "horizon_curve": [[int(t), float(v)] for t, v in horizon_curve],
    }
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)


def write_weight_histogram(path, summary: dict) -> None:
    frame = pd.DataFrame({
        "bin_lo": summary["bin_edges"][:-1],
        "bin_hi": summary["bin_edges"][1:],
        "count": summary["counts"],
    })
    frame.to_csv(path, index=False)
