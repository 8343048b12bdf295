"""Reward-generating environments.

Synthetic DGPs (linear, the Friedman family, tree-ensemble draws), the
classification-to-bandit transform, and synthetic logged-data generation.
All synthetic environments expose the true mean reward f0, so oracle regret
is computable exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import SeedSpec
from .errors import HorizonExhausted, ParamError, ParseError, SchemaError


# ---------------------------------------------------------------------------
# Friedman test functions
# ---------------------------------------------------------------------------

def friedman1(x) -> float:
    """10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 on the first five coords."""
    x = np.asarray(x, dtype=float)
    return float(10.0 * math.sin(math.pi * x[0] * x[1])
                 + 20.0 * (x[2] - 0.5) ** 2 + 10.0 * x[3] + 5.0 * x[4])


def _rescale(x):
    x = np.asarray(x, dtype=float)
    return 100.0 * x[0], 40.0 * math.pi + 520.0 * math.pi * x[1], x[2], 1.0 + 10.0 * x[3]


def friedman2(x) -> float:
    x1, x2, x3, x4 = _rescale(x)
    return float(math.sqrt(x1**2 + (x2 * x3 - 1.0 / (x2 * x4)) ** 2) / 125.0)


def friedman3(x) -> float:
    """Arctan interaction; the x1'=0 singularity resolves to the arctan limit."""
    x1, x2, x3, x4 = _rescale(x)
    num = x2 * x3 - 1.0 / (x2 * x4)
    if x1 == 0.0:
        if num == 0.0:
            return 0.0
        return math.copysign(math.pi / 2.0, num) / 0.1
    return float(math.atan(num / x1) / 0.1)


def arm2_shared(x) -> float:
    """Second-arm mean for shared-structure variants: base plus a bump."""
    x = np.asarray(x, dtype=float)
    return friedman1(x) + 5.0 * math.sin(math.pi * x[0] * x[1])


def arm2_disjoint(x, base_fn=friedman1) -> float:
    """Second-arm mean with reversed feature order (unrelated arms)."""
    return base_fn(np.asarray(x, dtype=float)[::-1])


# ---------------------------------------------------------------------------
# Synthetic bandit environments
# ---------------------------------------------------------------------------

@dataclass
class SyntheticEnv:
    """One realized synthetic bandit replication.

    Contexts and per-(round, arm) noise are addressed by counter-derived
    streams, so two agents sharing a SeedSpec face identical environments
    regardless of the actions they take.
    """

    n_arms: int
    dim: int
    mean_fns: list          # one callable per arm
    noise_sds: np.ndarray   # per-arm noise standard deviations
    seed: SeedSpec

    def context(self, t: int) -> np.ndarray:
        return self.seed.derive("ctx", t).rng().uniform(size=self.dim)

    def f0(self, x, arm: int) -> float:
        return float(self.mean_fns[arm](x))

    def true_means(self, x) -> np.ndarray:
        return np.array([self.f0(x, a) for a in range(self.n_arms)])

    def oracle_arm(self, x) -> int:
        return int(np.argmax(self.true_means(x)))

    def reward(self, t: int, x, arm: int) -> float:
        noise = self.seed.derive("noise", t).rng().standard_normal(self.n_arms)
        return self.f0(x, arm) + self.noise_sds[arm] * noise[arm]


def sample_linear_dgp(seed: SeedSpec, P: int = 10, K: int = 3,
                      noise_variance: float = 1.0) -> SyntheticEnv:
    """Per-arm linear means with standard-normal coefficients."""
    rng = seed.derive("params").rng()
    betas = rng.standard_normal((K, P))
    mean_fns = [(lambda x, b=betas[a]: float(np.dot(b, x))) for a in range(K)]
    return SyntheticEnv(K, P, mean_fns, np.full(K, math.sqrt(noise_variance)), seed)


def hetero_noise(rng: np.random.Generator, K: int = 2) -> np.ndarray:
    """Per-arm noise variances 10^U with U ~ Unif(-1, 1), one draw per arm."""
    return 10.0 ** rng.uniform(-1.0, 1.0, size=K)


_FRIEDMAN_BASES = {"friedman1": friedman1, "friedman2": friedman2, "friedman3": friedman3}


def sample_friedman_dgp(seed: SeedSpec, scenario: str = "friedman1",
                        arm2: str = "shared", sparse: bool = False,
                        hetero: bool = False, noise_variance: float = 1.0) -> SyntheticEnv:
    """Two-arm Friedman environment.

    Arm 1 uses the scenario-specific function; arm 2 uses either the shared
    bump variant (built on the friedman1 base) or the reversed-feature
    disjoint variant. Sparse variants pad the context to P = 20 while the
    rewards keep depending on the leading coordinates only.
    """
    if scenario not in _FRIEDMAN_BASES:
        raise ParamError(f"unknown friedman scenario {scenario!r}")
    base = _FRIEDMAN_BASES[scenario]
    P = 20 if sparse else 5
    K = 2
    if arm2 == "shared":
        second = arm2_shared
    elif arm2 == "disjoint":
        second = lambda x: arm2_disjoint(x, friedman1)  # noqa: E731
    else:
        raise ParamError(f"unknown arm-2 variant {arm2!r}")
    mean_fns = [base, second]
    if hetero:
        variances = hetero_noise(seed.derive("hetero").rng(), K)
    else:
        variances = np.full(K, noise_variance)
    return SyntheticEnv(K, P, mean_fns, np.sqrt(variances), seed)


# ---------------------------------------------------------------------------
# Tree-ensemble prior draws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BartPriorSpec:
    """Ensemble prior: m trees, depth-geometric splits, Gaussian leaves."""

    n_trees: int = 100
    split_alpha: float = 0.45
    leaf_kappa: float = 2.0
    noise_variance: float = 0.01
    dim: int = 4

    @property
    def leaf_sd(self) -> float:
        return 0.5 / (self.leaf_kappa * math.sqrt(self.n_trees))


@dataclass
class _TreeNode:
    leaf_value: float = 0.0
    split_var: int = -1
    split_at: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None

    def evaluate(self, x) -> float:
        node = self
        while node.split_var >= 0:
            node = node.left if x[node.split_var] < node.split_at else node.right
        return node.leaf_value


def _sample_tree(spec: BartPriorSpec, split_probs, rng, depth=0, bounds=None) -> _TreeNode:
    if bounds is None:
        bounds = [(0.0, 1.0)] * spec.dim
    # node at depth d splits with probability alpha^(d+1)
    if rng.uniform() < spec.split_alpha ** (depth + 1):
        var = int(rng.choice(spec.dim, p=split_probs))
        lo, hi = bounds[var]
        cut = rng.uniform(lo, hi)
        lb = list(bounds)
        rb = list(bounds)
        lb[var] = (lo, cut)
        rb[var] = (cut, hi)
        return _TreeNode(
            split_var=var, split_at=cut,
            left=_sample_tree(spec, split_probs, rng, depth + 1, lb),
            right=_sample_tree(spec, split_probs, rng, depth + 1, rb),
        )
    return _TreeNode(leaf_value=rng.normal(0.0, spec.leaf_sd))


def sample_bart_function(spec: BartPriorSpec, rng: np.random.Generator):
    """Sum-of-trees mean function drawn from the ensemble prior.

    Split variables follow a flat-Dirichlet probability vector drawn once per
    call; thresholds are uniform on each node's admissible interval.
    """
    split_probs = rng.dirichlet(np.ones(spec.dim))
    trees = [_sample_tree(spec, split_probs, rng) for _ in range(spec.n_trees)]

    def mean_fn(x):
        x = np.asarray(x, dtype=float)
        return float(sum(t.evaluate(x) for t in trees))

    return mean_fn


def sample_synbart_dgp(seed: SeedSpec, spec: BartPriorSpec | None = None,
                       K: int = 3) -> SyntheticEnv:
    spec = spec or BartPriorSpec()
    rng = seed.derive("params").rng()
    mean_fns = [sample_bart_function(spec, rng) for _ in range(K)]
    return SyntheticEnv(K, spec.dim, mean_fns,
                        np.full(K, math.sqrt(spec.noise_variance)), seed)


# ---------------------------------------------------------------------------
# Offline regression DGPs (coverage diagnostics)
# ---------------------------------------------------------------------------

class LinearRegressionDgp:
    """Linear regression draw matching the conjugate model's own prior."""

    def __init__(self, rng, dim: int = 5, prior_precision: float = 1.0,
                 noise_variance: float = 1.0):
        self.dim = dim
        self.noise_sd = math.sqrt(noise_variance)
        self.beta = rng.standard_normal(dim) / math.sqrt(prior_precision)

    def f0(self, x) -> float:
        return float(np.dot(self.beta, x))

    def sample_query(self, rng) -> np.ndarray:
        return rng.uniform(size=self.dim)

    def sample(self, n: int, rng):
        X = rng.uniform(size=(n, self.dim))
        y = X @ self.beta + self.noise_sd * rng.standard_normal(n)
        return X, y


# ---------------------------------------------------------------------------
# Classification-to-bandit
# ---------------------------------------------------------------------------

@dataclass
class ClassificationEnv:
    """A classification dataset replayed as a bandit: each class is an arm."""

    features: np.ndarray
    labels: np.ndarray
    label_names: list
    horizon: int

    @property
    def n_arms(self) -> int:
        return len(self.label_names)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def context(self, t: int) -> np.ndarray:
        if t > self.horizon:
            raise HorizonExhausted(f"round {t} exceeds horizon {self.horizon}")
        return self.features[t - 1]

    def step(self, t: int, arm: int) -> float:
        if t > self.horizon:
            raise HorizonExhausted(f"round {t} exceeds horizon {self.horizon}")
        return 1.0 if arm == self.labels[t - 1] else 0.0


def ingest_csv(path, label_column: str, categorical_columns=(),
               horizon_cap: int = 10_000) -> ClassificationEnv:
    """Load a classification CSV: standardize features, one-hot categoricals.

    Labels map to 0..K-1 in first-appearance order; row order is preserved.
    Constant columns standardize with sd treated as 1.
    """
    frame = pd.read_csv(path)
    if label_column not in frame.columns:
        raise SchemaError(f"missing label column {label_column!r}")
    for col in categorical_columns:
        if col not in frame.columns:
            raise SchemaError(f"missing categorical column {col!r}")
    labels_raw = frame[label_column].tolist()
    label_names = list(dict.fromkeys(labels_raw))
    label_idx = {name: i for i, name in enumerate(label_names)}
    labels = np.array([label_idx[v] for v in labels_raw], dtype=int)

    blocks = []
    for col in frame.columns:
        if col == label_column:
            continue
        if col in categorical_columns:
            onehot = pd.get_dummies(frame[col].astype(str))
            blocks.append(onehot.to_numpy(dtype=float))
        else:
            values = pd.to_numeric(frame[col], errors="coerce")
            if values.isna().any():
                row = int(values.index[values.isna()][0])
                raise ParseError(f"non-numeric value at row {row}, column {col!r}")
            col_values = values.to_numpy(dtype=float)
            sd = col_values.std()
            if sd == 0:
                sd = 1.0
            blocks.append(((col_values - col_values.mean()) / sd)[:, None])
    features = np.hstack(blocks) if blocks else np.empty((len(frame), 0))
    horizon = min(len(frame), horizon_cap)
    return ClassificationEnv(features, labels, label_names, horizon)


# ---------------------------------------------------------------------------
# Logged bandit data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoggedDecision:
    """One logged step: context, behavior action and propensities, reward."""

    context: np.ndarray
    action: int
    propensity: np.ndarray
    reward: float
    cluster_id: int


class LoggedDataset:
    """Sequence of logged decisions with compact (user, day) storage."""

    def __init__(self, users, days, actions, rewards, propensities, n_users, n_days):
        self.users = np.asarray(users, dtype=int)
        self.days = np.asarray(days, dtype=int)
        self.actions = np.asarray(actions, dtype=int)
        self.rewards = np.asarray(rewards, dtype=float)
        self.propensities = np.asarray(propensities, dtype=float)
        self.n_users = n_users
        self.n_days = n_days

    def __len__(self) -> int:
        return len(self.actions)

    def context(self, i: int) -> np.ndarray:
        out = np.zeros(self.n_users + 1)
        out[self.users[i]] = 1.0
        out[-1] = self.days[i]
        return out

    def __getitem__(self, i: int) -> LoggedDecision:
        return LoggedDecision(
            context=self.context(i),
            action=int(self.actions[i]),
            propensity=self.propensities,
            reward=float(self.rewards[i]),
            cluster_id=int(self.users[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


class LoggedBernoulliDgp:
    """Per-(user, day, arm) Bernoulli means: user base rate plus arm effects."""

    def __init__(self, rng, n_arms: int = 3, n_users: int = 100):
        self.n_arms = n_arms
        self.base = rng.uniform(0.2, 0.6, size=n_users)
        self.effects = rng.uniform(-0.15, 0.15, size=n_arms)

    def mean(self, user: int, day: int, arm: int) -> float:
        return float(np.clip(self.base[user] + self.effects[arm], 0.05, 0.95))


def generate_logged_data(dgp: LoggedBernoulliDgp, propensities, n_users: int,
                         days: int, rng: np.random.Generator) -> LoggedDataset:
    """Daily randomized logging: one decision per user per day, user-ordered by day.

    Contexts carry a user one-hot plus the day index; the cluster id is the user.
    """
    propensities = np.asarray(propensities, dtype=float)
    if np.any(propensities <= 0) or abs(propensities.sum() - 1.0) > 1e-9:
        raise ParamError("propensities must be positive and sum to 1")
    K = len(propensities)
    n = days * n_users
    day_idx = np.repeat(np.arange(days), n_users)
    users = np.tile(np.arange(n_users), days)
    actions = rng.choice(K, size=n, p=propensities)
    means = np.clip(dgp.base[users] + dgp.effects[actions], 0.05, 0.95)
    rewards = (rng.uniform(size=n) < means).astype(float)
    return LoggedDataset(users, day_idx, actions, rewards, propensities, n_users, days)


def logged_policy_value(dgp: LoggedBernoulliDgp, policy_probs, n_users: int,
                        days: int, rng: np.random.Generator, reps: int = 200) -> float:
    """Direct-simulation value of a fixed stochastic policy on the logged DGP."""
    policy_probs = np.asarray(policy_probs, dtype=float)
    K = len(policy_probs)
    n = reps * days * n_users
    users = np.tile(np.arange(n_users), reps * days)
    actions = rng.choice(K, size=n, p=policy_probs)
    means = np.clip(dgp.base[users] + dgp.effects[actions], 0.05, 0.95)
    return float((rng.uniform(size=n) < means).mean())


def write_logged_csv(log: LoggedDataset, path) -> None:
    """Columns: cluster_id, t, features..., action, propensity_0..K-1, reward."""
    K = len(log.propensities)
    dim = log.n_users + 1
    cols = (["cluster_id", "t"] + [f"x{j}" for j in range(dim)]
            + ["action"] + [f"propensity_{a}" for a in range(K)] + ["reward"])
    rows = []
    for i in range(len(log)):
        ctx = log.context(i)
        rows.append([log.users[i], i] + list(ctx) + [log.actions[i]]
                    + list(log.propensities) + [log.rewards[i]])
    pd.DataFrame(rows, columns=cols).to_csv(path, index=False)


def read_logged_csv(path) -> list[LoggedDecision]:
    frame = pd.read_csv(path)
    for col in ("cluster_id", "t", "action", "reward"):
        if col not in frame.columns:
            raise SchemaError(f"missing column {col!r}")
    prop_cols = sorted(c for c in frame.columns if c.startswith("propensity_"))
    feat_cols = [c for c in frame.columns if c.startswith("x")]
    decisions = []
    for _, row in frame.iterrows():
        decisions.append(LoggedDecision(
            context=row[feat_cols].to_numpy(dtype=float),
            action=int(row["action"]),
            propensity=row[prop_cols].to_numpy(dtype=float),
            reward=float(row["reward"]),
            cluster_id=int(row["cluster_id"]),
        ))
    return decisions
