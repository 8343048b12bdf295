import numpy as np
import pytest

from predbandit.core import Gaussian
from predbandit.errors import PrefixError
from predbandit.predictive import (BetaBernoulliModel, ConjugateLinearModel,
                                   SnapshotHandle)

from conftest import posterior_oracle


def fitted_model(rng, n=40, dim=3, lam=0.7, sig2=0.5):
    model = ConjugateLinearModel(dim, prior_precision=lam, noise_variance=sig2)
    X = rng.normal(size=(n, dim))
    y = rng.normal(size=n)
    for xi, yi in zip(X, y):
        model.fit_append(xi, yi)
    return model, X, y


class TestConjugateLinear:
    def test_posterior_matches_direct_formula(self, rng):
        lam, sig2 = 0.7, 0.5
        model, X, y = fitted_model(rng, lam=lam, sig2=sig2)
        q = rng.normal(size=3)
        for prefix in (0, 1, 7, 40):
            mean, var = posterior_oracle(X[:prefix], y[:prefix], q, lam, sig2)
            assert model.predict_mean(q, prefix) == pytest.approx(mean, abs=1e-10)
            assert model.posterior_var(q, prefix) == pytest.approx(var, abs=1e-10)
            dist = model.predict_dist(q, prefix)
            assert isinstance(dist, Gaussian)
            assert dist.variance == pytest.approx(var + sig2, abs=1e-10)

    def test_prior_prediction(self):
        model = ConjugateLinearModel(2, prior_precision=2.0, noise_variance=1.0)
        q = np.array([1.0, 1.0])
        assert model.predict_mean(q, 0) == 0.0
        assert model.posterior_var(q, 0) == pytest.approx(1.0)  # q'q / lam

    def test_prefix_out_of_range(self, rng):
        model, _, _ = fitted_model(rng, n=5)
        with pytest.raises(PrefixError):
            model.predict_mean(np.zeros(3), 6)

    def test_predictions_stable_under_append(self, rng):
        """Bit-identical prefix predictions before and after more data."""
        model, X, y = fitted_model(rng, n=10)
        q = rng.normal(size=3)
        before = [model.predict_mean(q, i) for i in range(11)]
        for _ in range(15):
            model.fit_append(rng.normal(size=3), rng.normal())
        after = [model.predict_mean(q, i) for i in range(11)]
        assert before == after  # exact equality, not approx

    def test_snapshot_handle_predicts_at_fixed_prefix(self, rng):
        model, _, _ = fitted_model(rng, n=20)
        q = rng.normal(size=3)
        snap = model.snapshot(8)
        assert isinstance(snap, SnapshotHandle)
        ref = model.predict_mean(q, 8)
        model.fit_append(rng.normal(size=3), 0.0)
        assert snap.predict_mean(q) == ref
        assert snap.predict_dist(q) == model.predict_dist(q, 8)

    def test_extend_equals_repeated_append(self, rng):
        X = rng.normal(size=(6, 2))
        y = rng.normal(size=6)
        a = ConjugateLinearModel(2)
        a.extend(X, y)
        b = ConjugateLinearModel(2)
        for xi, yi in zip(X, y):
            b.fit_append(xi, yi)
        q = rng.normal(size=2)
        assert a.predict_mean(q) == b.predict_mean(q)
        assert len(a) == len(b) == 6

    def test_bad_params_and_dim(self):
        with pytest.raises(ValueError):
            ConjugateLinearModel(2, prior_precision=0.0)
        with pytest.raises(ValueError):
            ConjugateLinearModel(2, noise_variance=-1.0)
        model = ConjugateLinearModel(2)
        with pytest.raises(ValueError):
            model.fit_append(np.zeros(3), 0.0)


class TestConjugateInvariants:
    def test_hand_example(self):
        # lam=1, sigma2=1, data {(1, 2)}: Sigma = 0.5, mu = 1
        model = ConjugateLinearModel(1)
        model.fit_append([1.0], 2.0)
        assert model.predict_mean([2.0], 1) == pytest.approx(2.0)
        assert model.posterior_var([2.0], 1) == pytest.approx(2.0)
        assert model.posterior_var([1.0], 0) == pytest.approx(1.0)

    def test_posterior_variance_monotone_in_data(self, rng):
        model = ConjugateLinearModel(3)
        q = rng.normal(size=3)
        prev = model.posterior_var(q, 0)
        for i in range(25):
            model.fit_append(rng.normal(size=3), rng.normal())
            cur = model.posterior_var(q, i + 1)
            assert cur <= prev + 1e-12
            prev = cur

    def test_mean_of_dist_equals_predict_mean(self, rng):
        model, _, _ = fitted_model(rng, n=15)
        q = rng.normal(size=3)
        for prefix in (0, 5, 15):
            assert model.predict_dist(q, prefix).mean == pytest.approx(
                model.predict_mean(q, prefix), abs=1e-9)
        bb = BetaBernoulliModel()
        for r in (1.0, 0.0, 1.0):
            bb.fit_append(None, r)
        assert bb.predict_dist().mean() == pytest.approx(bb.predict_mean(), abs=1e-12)

    def test_predictive_mean_sequence_is_martingale(self):
        """Average one-step mean increment is zero when the data are drawn
        from the model's own prior (checked to 3 Monte Carlo SEs)."""
        root = np.random.default_rng(20240817)
        dim, sig2, n = 3, 0.5, 8
        q = np.array([0.7, -0.2, 0.4])
        sims = 10_000
        increments = np.empty(sims)
        for s in range(sims):
            rng = np.random.default_rng(root.integers(2**63))
            beta = rng.standard_normal(dim)
            X = rng.normal(size=(n, dim))
            y = X @ beta + np.sqrt(sig2) * rng.standard_normal(n)
            model = ConjugateLinearModel(dim, noise_variance=sig2)
            model.extend(X, y)
            i = int(rng.integers(0, n))
            increments[s] = model.predict_mean(q, i + 1) - model.predict_mean(q, i)
        se = increments.std(ddof=1) / np.sqrt(sims)
        assert abs(increments.mean()) < 3 * se


class TestBetaBernoulli:
    def test_posterior_mean_counts(self):
        model = BetaBernoulliModel(a0=1.0, b0=1.0)
        outcomes = [1, 0, 1, 1, 0]
        for r in outcomes:
            model.fit_append(None, r)
        for prefix in range(6):
            succ = sum(outcomes[:prefix])
            assert model.predict_mean(prefix_len=prefix) == pytest.approx(
                (1.0 + succ) / (2.0 + prefix))
        assert model.predict_mean() == model.predict_mean(prefix_len=5)

    def test_dist_atoms(self):
        model = BetaBernoulliModel()
        model.fit_append(None, 1.0)
        dist = model.predict_dist()
        assert np.array_equal(dist.midpoints, [0.0, 1.0])
        assert dist.probs.sum() == pytest.approx(1.0)
        assert dist.probs[1] == pytest.approx(2.0 / 3.0)

    def test_prefix_error(self):
        model = BetaBernoulliModel()
        with pytest.raises(PrefixError):
            model.predict_mean(prefix_len=1)

    def test_bad_pseudocounts(self):
        with pytest.raises(ValueError):
            BetaBernoulliModel(a0=0.0)
