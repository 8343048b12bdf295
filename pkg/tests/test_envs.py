import math

import numpy as np
import pytest

from predbandit.core import SeedSpec
from predbandit.envs import (BartPriorSpec, ClassificationEnv,
                             LoggedBernoulliDgp, arm2_disjoint, arm2_shared,
                             friedman1, friedman2, friedman3,
                             generate_logged_data, hetero_noise, ingest_csv,
                             logged_policy_value, read_logged_csv,
                             sample_bart_function, sample_friedman_dgp,
                             sample_linear_dgp, sample_synbart_dgp,
                             write_logged_csv)
from predbandit.errors import (HorizonExhausted, ParamError, ParseError,
                               SchemaError)


class TestFriedman:
    def test_friedman1_hand_value(self):
        # 10 sin(pi/2) + 20 (0-0.5)^2 + 10*1 + 5*1 = 10 + 5 + 10 + 5
        x = np.array([0.5, 1.0, 0.0, 1.0, 1.0])
        assert friedman1(x) == pytest.approx(30.0)
        # extra coordinates are ignored
        assert friedman1(np.concatenate([x, np.ones(15)])) == pytest.approx(30.0)

    def test_friedman2_hand_value(self):
        x = np.array([0.5, 0.0, 0.5, 0.0])
        x1, x2, x3, x4 = 50.0, 40.0 * math.pi, 0.5, 1.0
        expected = math.sqrt(x1**2 + (x2 * x3 - 1.0 / (x2 * x4)) ** 2) / 125.0
        assert friedman2(x) == pytest.approx(expected, rel=1e-12)

    def test_friedman3_hand_value(self):
        x = np.array([0.5, 0.0, 0.5, 0.0])
        x1, x2, x3, x4 = 50.0, 40.0 * math.pi, 0.5, 1.0
        expected = math.atan((x2 * x3 - 1.0 / (x2 * x4)) / x1) / 0.1
        assert friedman3(x) == pytest.approx(expected, rel=1e-12)

    def test_friedman3_limit_at_zero(self):
        # positive numerator: arctan limit is +pi/2
        x = np.array([0.0, 0.5, 0.9, 0.5])
        assert friedman3(x) == pytest.approx((math.pi / 2.0) / 0.1)
        # continuity: value at tiny x1 approaches the limit
        x_eps = x.copy()
        x_eps[0] = 1e-12
        assert friedman3(x_eps) == pytest.approx(friedman3(x), rel=1e-6)

    def test_arm2_variants(self):
        x = np.array([0.3, 0.7, 0.1, 0.9, 0.4])
        assert arm2_shared(x) == pytest.approx(
            friedman1(x) + 5.0 * math.sin(math.pi * 0.3 * 0.7))
        assert arm2_disjoint(x) == pytest.approx(friedman1(x[::-1]))


class TestSyntheticEnv:
    def test_pairing_across_instances(self):
        seed = SeedSpec(5)
        env1 = sample_linear_dgp(seed)
        env2 = sample_linear_dgp(seed)
        for t in (1, 2, 17):
            x1, x2 = env1.context(t), env2.context(t)
            assert np.array_equal(x1, x2)
            for arm in range(env1.n_arms):
                assert env1.reward(t, x1, arm) == env2.reward(t, x2, arm)

    def test_noise_counter_keyed_not_action_dependent(self):
        env = sample_linear_dgp(SeedSpec(5))
        x = env.context(1)
        # rewards depend only on (t, arm), not on what was played earlier
        first = env.reward(3, x, 1)
        env.reward(2, x, 0)
        assert env.reward(3, x, 1) == first

    def test_true_means_and_oracle(self):
        env = sample_linear_dgp(SeedSpec(9), P=4, K=3)
        x = env.context(1)
        means = env.true_means(x)
        assert means.shape == (3,)
        assert env.oracle_arm(x) == int(np.argmax(means))
        assert means[1] == pytest.approx(env.f0(x, 1))

    def test_linear_dgp_shapes(self):
        env = sample_linear_dgp(SeedSpec(0), P=10, K=3)
        assert env.dim == 10 and env.n_arms == 3
        x = env.context(1)
        assert x.shape == (10,) and np.all((0 <= x) & (x <= 1))

    def test_friedman_variants(self):
        shared = sample_friedman_dgp(SeedSpec(1))
        assert shared.dim == 5 and shared.n_arms == 2
        x = shared.context(1)
        assert shared.f0(x, 0) == pytest.approx(friedman1(x))
        assert shared.f0(x, 1) == pytest.approx(arm2_shared(x))

        sparse = sample_friedman_dgp(SeedSpec(1), sparse=True, arm2="disjoint")
        assert sparse.dim == 20
        xs = sparse.context(1)
        assert sparse.f0(xs, 1) == pytest.approx(arm2_disjoint(xs))

        with pytest.raises(ParamError):
            sample_friedman_dgp(SeedSpec(1), scenario="friedman9")
        with pytest.raises(ParamError):
            sample_friedman_dgp(SeedSpec(1), arm2="other")

    def test_hetero_noise_range(self):
        v = hetero_noise(np.random.default_rng(0), K=50)
        assert np.all((0.1 <= v) & (v <= 10.0))
        env = sample_friedman_dgp(SeedSpec(2), hetero=True)
        assert not np.allclose(env.noise_sds[0], env.noise_sds[1])


class TestSynBart:
    def test_prior_spec_leaf_sd(self):
        spec = BartPriorSpec()
        assert spec.leaf_sd == pytest.approx(0.5 / (2.0 * math.sqrt(100)))

    def test_function_is_deterministic_piecewise(self):
        spec = BartPriorSpec(n_trees=10)
        fn = sample_bart_function(spec, np.random.default_rng(3))
        x = np.array([0.2, 0.8, 0.5, 0.1])
        assert fn(x) == fn(x.copy())
        # local constancy: a tiny perturbation rarely crosses a split
        assert isinstance(fn(x), float)

    def test_env_shapes_and_pairing(self):
        env = sample_synbart_dgp(SeedSpec(4))
        assert env.dim == 4 and env.n_arms == 3
        env2 = sample_synbart_dgp(SeedSpec(4))
        x = env.context(7)
        assert np.array_equal(x, env2.context(7))
        assert env.f0(x, 2) == env2.f0(x, 2)

    def test_ensemble_scale(self):
        # leaf prior keeps the sum of 100 trees at modest amplitude
        env = sample_synbart_dgp(SeedSpec(8))
        rng = np.random.default_rng(0)
        vals = [env.f0(rng.uniform(size=4), 0) for _ in range(200)]
        assert np.std(vals) < 2.0


class TestClassification:
    def make_csv(self, tmp_path, rows=8):
        path = tmp_path / "data.csv"
        lines = ["num,cat,label"]
        for i in range(rows):
            lines.append(f"{i},{'ab'[i % 2]},{'xyz'[i % 3]}")
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_ingest_standardizes_and_encodes(self, tmp_path):
        env = ingest_csv(self.make_csv(tmp_path), "label", ["cat"])
        assert env.n_arms == 3
        assert env.label_names == ["x", "y", "z"]  # first-appearance order
        # one numeric (z-scored) + two one-hot columns
        assert env.dim == 3
        numeric = env.features[:, 0]
        assert numeric.mean() == pytest.approx(0.0, abs=1e-12)
        assert numeric.std() == pytest.approx(1.0, abs=1e-12)
        assert set(env.features[:, 1]) <= {0.0, 1.0}

    def test_step_rewards_and_horizon(self, tmp_path):
        env = ingest_csv(self.make_csv(tmp_path), "label", ["cat"])
        assert env.step(1, env.labels[0]) == 1.0
        assert env.step(1, (env.labels[0] + 1) % 3) == 0.0
        with pytest.raises(HorizonExhausted):
            env.context(env.horizon + 1)

    def test_horizon_cap(self, tmp_path):
        env = ingest_csv(self.make_csv(tmp_path, rows=9), "label", ["cat"],
                         horizon_cap=4)
        assert env.horizon == 4

    def test_schema_errors(self, tmp_path):
        path = self.make_csv(tmp_path)
        with pytest.raises(SchemaError):
            ingest_csv(path, "missing")
        with pytest.raises(SchemaError):
            ingest_csv(path, "label", ["nope"])
        with pytest.raises(ParseError):
            ingest_csv(path, "label")  # 'cat' not declared categorical

    def test_constant_column(self, tmp_path):
        path = tmp_path / "const.csv"
        path.write_text("a,label\n1,x\n1,y\n1,x\n")
        env = ingest_csv(path, "label")
        assert np.allclose(env.features[:, 0], 0.0)


class TestLoggedData:
    def build(self, seed=0, n_users=12, days=6):
        root = SeedSpec(seed)
        dgp = LoggedBernoulliDgp(root.derive("dgp").rng(), n_users=n_users)
        props = np.array([0.4, 0.3, 0.3])
        log = generate_logged_data(dgp, props, n_users, days, root.derive("log").rng())
        return dgp, log

    def test_layout(self):
        _, log = self.build()
        assert len(log) == 12 * 6
        d = log[5]
        assert d.context.shape == (13,)
        assert d.context[:12].sum() == 1.0
        assert d.context[-1] == log.days[5]
        assert d.cluster_id == log.users[5]
        assert d.reward in (0.0, 1.0)
        assert np.allclose(d.propensity.sum(), 1.0)

    def test_bernoulli_means_clipped(self):
        dgp = LoggedBernoulliDgp(np.random.default_rng(0), n_users=500)
        means = [dgp.mean(u, 0, a) for u in range(500) for a in range(3)]
        assert min(means) >= 0.05 and max(means) <= 0.95

    def test_bad_propensities(self):
        dgp, _ = self.build()
        with pytest.raises(ParamError):
            generate_logged_data(dgp, [0.5, 0.5, 0.5], 4, 2, np.random.default_rng(0))
        with pytest.raises(ParamError):
            generate_logged_data(dgp, [1.0, 0.0], 4, 2, np.random.default_rng(0))

    def test_policy_value_matches_expectation(self):
        dgp, _ = self.build(n_users=20)
        probs = np.array([0.2, 0.5, 0.3])
        # exact expectation over users and arms
        exact = np.mean([
            sum(probs[a] * dgp.mean(u, 0, a) for a in range(3))
            for u in range(20)])
        sim = logged_policy_value(dgp, probs, 20, 5, np.random.default_rng(1),
                                  reps=400)
        assert sim == pytest.approx(exact, abs=0.01)

    def test_csv_round_trip(self, tmp_path):
        _, log = self.build()
        path = tmp_path / "log.csv"
        write_logged_csv(log, path)
        decisions = read_logged_csv(path)
        assert len(decisions) == len(log)
        for i in (0, 10, len(log) - 1):
            orig = log[i]
            got = decisions[i]
            assert np.array_equal(got.context, orig.context)
            assert got.action == orig.action
            assert got.reward == orig.reward
            assert got.cluster_id == orig.cluster_id
            assert np.allclose(got.propensity, orig.propensity)

    def test_read_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("cluster_id,t,action\n0,0,1\n")
        with pytest.raises(SchemaError):
            read_logged_csv(path)
