"""Shared test oracles: independent reference implementations used to check
the package's closed-form code paths."""

import numpy as np
import pytest

from predbandit.core import BinnedPMF


def make_step_pmf(rng, max_bins: int = 12):
    """Random binned PMF whose bin widths equal the gaps between midpoints.

    With that layout the binned CRPS formula is the exact integral of the
    squared CDF difference, so numeric integration is a fair oracle as long
    as the outcome sits on a midpoint.
    """
    J = int(rng.integers(3, max_bins + 1))
    gaps = rng.uniform(0.05, 1.0, size=J)
    midpoints = np.cumsum(gaps) + rng.uniform(-3, 3)
    widths = np.empty(J)
    widths[:-1] = np.diff(midpoints)
    widths[-1] = widths[:-1].mean()
    probs = rng.dirichlet(np.ones(J))
    probs = probs / probs.sum()
    pmf = BinnedPMF(midpoints=midpoints, widths=widths, probs=probs)
    r = float(midpoints[rng.integers(J)])
    return pmf, r


def crps_energy(pmf: BinnedPMF, r: float) -> float:
    """CRPS via the energy identity E|Y-r| - 0.5 E|Y-Y'| for the atom law."""
    m, p = pmf.midpoints, pmf.probs
    term1 = float(np.sum(p * np.abs(m - r)))
    term2 = 0.5 * float(p @ np.abs(m[:, None] - m[None, :]) @ p)
    return term1 - term2


def crps_numeric(pmf: BinnedPMF, r: float, samples_per_piece: int = 64) -> float:
    """Numeric integration of (F(y) - 1{y >= r})^2 over the support range.

    The integrand is piecewise constant between midpoints, so sampling
    interior points of each piece integrates it exactly (up to float error).
    """
    m = pmf.midpoints
    cdf = np.cumsum(pmf.probs)
    total = 0.0
    for j in range(len(m) - 1):
        a, b = m[j], m[j + 1]
        ys = a + (np.arange(samples_per_piece) + 0.5) * (b - a) / samples_per_piece
        F = cdf[np.searchsorted(m, ys, side="right") - 1]
        ind = (ys >= r).astype(float)
        total += float(np.mean((F - ind) ** 2)) * (b - a)
    return total


def gaussian_crps_quad(mean: float, variance: float, r: float) -> float:
    """Quadrature oracle for the Gaussian CRPS integral."""
    from scipy import integrate
    from scipy.stats import norm

    sd = np.sqrt(variance)

    def integrand(y):
        return (norm.cdf(y, loc=mean, scale=sd) - (y >= r)) ** 2

    lo, hi = mean - 12 * sd, mean + 12 * sd
    val, _ = integrate.quad(integrand, lo, hi, points=[r], limit=200)
    return val


def posterior_oracle(X, y, q, prior_precision=1.0, noise_variance=1.0):
    """Direct conjugate linear posterior mean/variance of q'beta."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q.size
    if X.size == 0:
        X = X.reshape(0, d)
    prec = prior_precision * np.eye(d) + X.T @ X / noise_variance
    cov = np.linalg.inv(prec)
    mu = cov @ (X.T @ y / noise_variance)
    return float(q @ mu), float(q @ cov @ q)


def normal_quantile_bisect(p: float, tol: float = 1e-13) -> float:
    """Bisection inverse of the normal CDF; slow but assumption-free."""
    from math import erf, sqrt

    def cdf(x):
        return 0.5 * (1.0 + erf(x / sqrt(2.0)))

    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
