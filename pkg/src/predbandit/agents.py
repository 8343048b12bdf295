"""Bandit policies.

The main agent converts predictive-mean trajectories of a pluggable
sequential model into Gaussian mean-reward samples via the subsampled
variance estimator, with an adaptive choice between per-arm (disjoint) and
shared one-hot arm encodings scored by cumulative CRPS. Linear Thompson
sampling, LinUCB, uniform, and oracle baselines share the same interface.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

from .core import BinnedPMF, Gaussian, SeedSpec, crps, encode_onehot
from .errors import GridTooShort
from .subclt import subclt_estimate

DEFAULT_SWITCH_TIMES = (64, 128, 256, 512, 1024, 2048)


def argmax_tiebreak(values, rng: np.random.Generator) -> int:
    """Index of the maximum, uniform among exact ties."""
    values = np.asarray(values, dtype=float)
    winners = np.flatnonzero(values == values.max())
    if len(winners) == 1:
        return int(winners[0])
    return int(winners[rng.integers(len(winners))])


class Agent:
    """Common policy interface: act / update plus a side-effect-free peek."""

    n_arms: int

    def act(self, x, t: int) -> int:
        raise NotImplementedError

    def update(self, x, arm: int, reward: float, t: int) -> None:
        pass

    def peek(self, x, t: int, rng: np.random.Generator) -> int:
        """One action draw from the current policy without mutating state."""
        raise NotImplementedError

    def action_probabilities(self, x, t: int, n_draws: int,
                             rng: np.random.Generator) -> np.ndarray:
        """Monte Carlo estimate of the action distribution at (x, t)."""
        counts = np.zeros(self.n_arms)
        for _ in range(n_draws):
            counts[self.peek(x, t, rng)] += 1
        return counts / n_draws


class UniformAgent(Agent):
    def __init__(self, n_arms: int, seed: SeedSpec):
        self.n_arms = n_arms
        self.rng = seed.rng()

    def act(self, x, t: int) -> int:
        return int(self.rng.integers(self.n_arms))

    def peek(self, x, t, rng) -> int:
        return int(rng.integers(self.n_arms))


class OracleAgent(Agent):
    """Plays the true best arm; zero regret by construction."""

    def __init__(self, env):
        self.env = env
        self.n_arms = env.n_arms

    def act(self, x, t: int) -> int:
        return self.env.oracle_arm(x)

    def peek(self, x, t, rng) -> int:
        return self.env.oracle_arm(x)


class FixedStochasticPolicy(Agent):
    """Context-free stochastic policy with known action probabilities."""

    def __init__(self, probs, seed: SeedSpec):
        self.probs = np.asarray(probs, dtype=float)
        self.n_arms = len(self.probs)
        self.rng = seed.rng()

    def act(self, x, t: int) -> int:
        return int(self.rng.choice(self.n_arms, p=self.probs))

    def peek(self, x, t, rng) -> int:
        return int(rng.choice(self.n_arms, p=self.probs))

    def action_probabilities(self, x, t, n_draws, rng) -> np.ndarray:
        # n_draws independent draws, tallied in one multinomial
        return rng.multinomial(n_draws, self.probs) / n_draws


# ---------------------------------------------------------------------------
# Ridge-statistic linear baselines
# ---------------------------------------------------------------------------

class LinTsAgent:
    """Linear Thompson sampling with per-arm ridge statistics."""

    def __init__(self, dim: int, n_arms: int, seed: SeedSpec,
                 nu: float = 1.0, lam: float = 1.0):
        self.dim = dim
        self.n_arms = n_arms
        self.nu = nu
        self.rng = seed.rng()
        self.A = [lam * np.eye(dim) for _ in range(n_arms)]
        self.b = [np.zeros(dim) for _ in range(n_arms)]

    def sample_coefficients(self, arm: int, rng: np.random.Generator) -> np.ndarray:
        mu = np.linalg.solve(self.A[arm], self.b[arm])
        chol = np.linalg.cholesky(self.A[arm])
        z = rng.standard_normal(self.dim)
        # beta ~ N(mu, nu^2 A^-1); A^-1 = L^-T L^-1
        return mu + self.nu * np.linalg.solve(chol.T, z)

    def _scores(self, x, rng) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([float(x @ self.sample_coefficients(k, rng))
                         for k in range(self.n_arms)])

    def act(self, x, t: int) -> int:
        return argmax_tiebreak(self._scores(x, self.rng), self.rng)

    def peek(self, x, t, rng) -> int:
        return argmax_tiebreak(self._scores(x, rng), rng)

    def update(self, x, arm: int, reward: float, t: int) -> None:
        x = np.asarray(x, dtype=float)
        self.A[arm] += np.outer(x, x)
        self.b[arm] += reward * x

    action_probabilities = Agent.action_probabilities


class LinUcbAgent(Agent):
    """Deterministic UCB on per-arm ridge estimates; seeded tie-breaking."""

    def __init__(self, dim: int, n_arms: int, seed: SeedSpec,
                 alpha: float = 1.0, lam: float = 1.0):
        self.dim = dim
        self.n_arms = n_arms
        self.alpha = alpha
        self.rng = seed.rng()
        self.A = [lam * np.eye(dim) for _ in range(n_arms)]
        self.b = [np.zeros(dim) for _ in range(n_arms)]

    def scores(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(self.n_arms)
        for k in range(self.n_arms):
            mu = np.linalg.solve(self.A[k], self.b[k])
            width = math.sqrt(float(x @ np.linalg.solve(self.A[k], x)))
            out[k] = float(x @ mu) + self.alpha * width
        return out

    def act(self, x, t: int) -> int:
        return argmax_tiebreak(self.scores(x), self.rng)

    def peek(self, x, t, rng) -> int:
        return argmax_tiebreak(self.scores(x), rng)

    def update(self, x, arm: int, reward: float, t: int) -> None:
        x = np.asarray(x, dtype=float)
        self.A[arm] += np.outer(x, x)
        self.b[arm] += reward * x


# ---------------------------------------------------------------------------
# Predictive-model agent
# ---------------------------------------------------------------------------

class _EncodingState:
    """Histories, models, and snapshot bookkeeping for one arm encoding."""

    def __init__(self, name: str, model_factory, dim: int, n_arms: int, base: float):
        if name not in ("disjoint", "onehot"):
            raise ValueError(f"unknown encoding {name!r}")
        self.name = name
        self.n_arms = n_arms
        self.base = base
        n_models = n_arms if name == "disjoint" else 1
        model_dim = dim if name == "disjoint" else dim + n_arms
        self.models = [model_factory(model_dim) for _ in range(n_models)]
        self._next_grid = [2] * n_models
        self.snap_prefixes: list[list[int]] = [[] for _ in range(n_models)]
        # observations since the last switch: (model index, query, reward, position)
        self.pending: list[tuple[int, np.ndarray, float, int]] = []

    def model_and_query(self, arm: int, x):
        if self.name == "disjoint":
            return arm, self.models[arm], np.asarray(x, dtype=float)
        return 0, self.models[0], encode_onehot(x, arm, self.n_arms)

    def append(self, x, arm: int, reward: float, track: bool = True) -> None:
        idx, model, query = self.model_and_query(arm, x)
        model.fit_append(query, reward)
        pos = len(model)
        if track:
            self.pending.append((idx, query, reward, pos))
        # refresh point reached: store a snapshot for later reuse
        if pos == self._next_grid[idx]:
            model.snapshot(pos)
            self.snap_prefixes[idx].append(pos)
            nxt = self._next_grid[idx]
            self._next_grid[idx] = max(nxt + 1, math.floor(self.base * nxt))

    def latest_snapshot(self, idx: int, position: int) -> int:
        """Largest stored snapshot prefix <= position (0 = prior)."""
        prefixes = self.snap_prefixes[idx]
        i = bisect.bisect_right(prefixes, position)
        return prefixes[i - 1] if i else 0

    def score_pending(self) -> float:
        """CRPS of pending observations against the latest cached snapshots."""
        total = 0.0
        for idx, query, reward, pos in self.pending:
            prefix = self.latest_snapshot(idx, pos)
            dist = self.models[idx].predict_dist(query, prefix)
            total += crps(dist, reward)
        return total


class PfnTsAgent(Agent):
    """Thompson sampling on snapshot Gaussian approximations of the latent mean.

    ``decision_rule`` selects the main sampler ("ts"), posterior-predictive
    sampling ("ps"), or greedy predictive means ("greedy"); the encoding is
    either fixed or chosen adaptively by cumulative CRPS at switch times.
    """

    def __init__(self, model_factory, dim: int, n_arms: int, seed: SeedSpec, *,
                 decision_rule: str = "ts", encoding: str = "adaptive",
                 warmup: int = 5, base: float = 2.0,
                 v_floor: float = 1e-8, v_fallback: float = 1.0,
                 switch_times=DEFAULT_SWITCH_TIMES, arm_threshold: int = 5):
        if decision_rule not in ("ts", "ps", "greedy"):
            raise ValueError(f"unknown decision rule {decision_rule!r}")
        self.n_arms = n_arms
        self.dim = dim
        self.decision_rule = decision_rule
        self.warmup = warmup
        self.base = base
        self.v_floor = v_floor
        self.v_fallback = v_fallback
        self.rng = seed.rng()
        if encoding == "adaptive":
            initial = "disjoint" if n_arms < arm_threshold else "onehot"
            other = "onehot" if initial == "disjoint" else "disjoint"
            self.active = _EncodingState(initial, model_factory, dim, n_arms, base)
            self.challenger = _EncodingState(other, model_factory, dim, n_arms, base)
            self.dual_caching = True
            self.switch_times = sorted(switch_times)
        else:
            self.active = _EncodingState(encoding, model_factory, dim, n_arms, base)
            self.challenger = None
            self.dual_caching = False
            self.switch_times = []
        self.crps_active = 0.0
        self.crps_challenger = 0.0
        self.switch_log: list[dict] = []

    # -- decision -----------------------------------------------------------

    def thompson_params(self, x) -> list[tuple[float, float]]:
        """Per-arm (mean, sd) of the snapshot Gaussian, with short-history fallback."""
        out = []
        for k in range(self.n_arms):
            _, model, query = self.active.model_and_query(k, x)
            n = len(model)
            try:
                est = subclt_estimate(model, n, query, self.base)
                out.append((est.mean, math.sqrt(est.variance(self.v_floor))))
            except GridTooShort:
                mean = model.predict_mean(query, n)
                out.append((mean, math.sqrt(self.v_fallback)))
        return out

    def _sample_values(self, x, rng) -> np.ndarray:
        if self.decision_rule == "greedy":
            return np.array([
                self.active.model_and_query(k, x)[1].predict_mean(
                    self.active.model_and_query(k, x)[2])
                for k in range(self.n_arms)])
        if self.decision_rule == "ps":
            vals = np.empty(self.n_arms)
            for k in range(self.n_arms):
                _, model, query = self.active.model_and_query(k, x)
                dist = model.predict_dist(query)
                if isinstance(dist, Gaussian):
                    vals[k] = dist.mean if dist.variance == 0 else \
                        rng.normal(dist.mean, math.sqrt(dist.variance))
                elif isinstance(dist, BinnedPMF):
                    vals[k] = dist.midpoints[rng.choice(len(dist.probs), p=dist.probs)]
                else:
                    raise TypeError(f"unsupported distribution {type(dist)}")
            return vals
        vals = np.empty(self.n_arms)
        for k, (mean, sd) in enumerate(self.thompson_params(x)):
            vals[k] = mean if sd == 0.0 else mean + sd * rng.standard_normal()
        return vals

    def _choose(self, x, t: int, rng) -> int:
        if t <= self.warmup * self.n_arms:
            return (t - 1) % self.n_arms
        return argmax_tiebreak(self._sample_values(x, rng), rng)

    def act(self, x, t: int) -> int:
        return self._choose(x, t, self.rng)

    def peek(self, x, t, rng) -> int:
        return self._choose(x, t, rng)

    def action_probabilities(self, x, t, n_draws, rng) -> np.ndarray:
        if t <= self.warmup * self.n_arms:
            probs = np.zeros(self.n_arms)
            probs[(t - 1) % self.n_arms] = 1.0
            return probs
        if self.decision_rule == "ts":
            params = self.thompson_params(x)
            means = np.array([p[0] for p in params])
            sds = np.array([p[1] for p in params])
            vals = means + sds * rng.standard_normal((n_draws, self.n_arms))
            counts = np.zeros(self.n_arms)
            for row in vals:
                counts[argmax_tiebreak(row, rng)] += 1
            return counts / n_draws
        return super().action_probabilities(x, t, n_draws, rng)

    # -- learning -----------------------------------------------------------

    def update(self, x, arm: int, reward: float, t: int) -> None:
        self.active.append(x, arm, reward, track=self.dual_caching)
        if self.dual_caching:
            self.challenger.append(x, arm, reward)
            if t in self.switch_times:
                self._run_switch(t)

    def _run_switch(self, t: int) -> None:
        self.crps_active += self.active.score_pending()
        self.crps_challenger += self.challenger.score_pending()
        self.active.pending.clear()
        self.challenger.pending.clear()
        swapped = self.crps_challenger < self.crps_active
        if swapped:
            self.active, self.challenger = self.challenger, self.active
            self.crps_active, self.crps_challenger = self.crps_challenger, self.crps_active
        self.switch_log.append({
            "t": t,
            "swapped": swapped,
            "active": self.active.name,
            "crps_active": self.crps_active,
            "crps_challenger": self.crps_challenger,
        })
        if t == self.switch_times[-1]:
            self.dual_caching = False
            self.challenger = None
