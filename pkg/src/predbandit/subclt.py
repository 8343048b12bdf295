"""Subsampled predictive CLT: geometric prefix grid, block-increment variance
estimator, snapshot Gaussian sampling, intervals, and coverage diagnostics.

The estimator evaluates the predictive mean at O(log n) geometrically spaced
prefixes and converts the block increments into an estimate of the asymptotic
posterior variance of the latent mean at a query point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import SeedSpec, normal_quantile
from .errors import GridTooShort, ParamError


@dataclass(frozen=True)
class GeometricGrid:
    """Increasing prefix sizes t_0=2 < t_1 < ... < t_J <= n."""

    base: float
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


def geometric_grid(n: int, b: float) -> GeometricGrid:
    """Prefix grid from iterating t_{j+1} = max(t_j + 1, floor(b t_j)).

    Starts at t_0 = 2 and stops at the last point not exceeding n.
    """
    if b <= 1:
        raise ParamError(f"base must exceed 1, got {b}")
    if n < 2:
        raise GridTooShort(f"history of {n} cannot hold the first prefix of 2")
    points = [2]
    while True:
        t = points[-1]
        nxt = max(t + 1, math.floor(b * t))
        if nxt > n:
            break
        points.append(nxt)
    return GeometricGrid(base=b, points=np.asarray(points, dtype=int))


def block_weights(grid: GeometricGrid) -> np.ndarray:
    """Harmonic weights w_j = t_j t_{j-1} / (t_j - t_{j-1}) for j = 1..J."""
    t = grid.points.astype(float)
    return t[1:] * t[:-1] / (t[1:] - t[:-1])


@dataclass(frozen=True)
class SubCltEstimate:
    """Snapshot mean, variance estimate, and refresh size at the latest grid point."""

    mean: float
    vhat: float
    refresh: int
    grid: GeometricGrid

    def variance(self, v_floor: float = 0.0) -> float:
        return max(self.vhat, v_floor) / self.refresh


def subclt_estimate(model, history_len: int, query, b: float = 2.0) -> SubCltEstimate:
    """Variance estimate from block increments of the predictive-mean trajectory.

    Evaluates the model at each grid prefix in increasing order (creating or
    reusing snapshots), forms D_j = m_{t_j} - m_{t_{j-1}}, and returns
    vhat = (1/J) sum_j w_j D_j^2 together with the latest snapshot mean.
    """
    grid = geometric_grid(history_len, b)
    if len(grid) < 2:
        raise GridTooShort(
            f"grid for n={history_len}, b={b} has no block increments")
    means = np.empty(len(grid))
    for i, t in enumerate(grid.points):
        model.snapshot(int(t))
        means[i] = model.predict_mean(query, int(t))
    diffs = np.diff(means)
    weights = block_weights(grid)
    vhat = float(np.sum(weights * diffs**2) / len(weights))
    return SubCltEstimate(mean=float(means[-1]), vhat=vhat,
                          refresh=int(grid.points[-1]), grid=grid)


def thompson_draw(est: SubCltEstimate, v_floor: float, rng: np.random.Generator) -> float:
    """One draw from N(snapshot mean, max(vhat, v_floor) / refresh)."""
    sd = math.sqrt(est.variance(v_floor))
    if sd == 0.0:
        return est.mean
    return est.mean + sd * rng.standard_normal()


def interval(est: SubCltEstimate, level: float, v_floor: float = 0.0) -> tuple[float, float]:
    """Central interval m +/- z_{(1+level)/2} sqrt(max(vhat, v_floor)/refresh)."""
    if not 0.0 < level < 1.0:
        raise ParamError(f"level {level} outside (0, 1)")
    z = normal_quantile((1.0 + level) / 2.0)
    half = z * math.sqrt(est.variance(v_floor))
    return est.mean - half, est.mean + half


def full_prefix_vhat(model, history_len: int, query) -> float:
    """Stride-1 reference estimator: (1/n) sum_i i^2 (m_i - m_{i-1})^2.

    Test-only oracle requiring a forward pass at every prefix; use for small n.
    """
    means = np.array([model.predict_mean(query, i) for i in range(history_len + 1)])
    i = np.arange(1, history_len + 1, dtype=float)
    return float(np.sum(i**2 * np.diff(means) ** 2) / history_len)


def coverage_diagnostic(
    dgp_factory,
    model_factory,
    sizes,
    reps: int,
    queries_per_rep: int,
    level: float = 0.95,
    b: float = 2.0,
    v_floor: float = 0.0,
    method: str = "subclt",
    seed: SeedSpec | None = None,
    dgp_name: str = "dgp",
) -> list[dict]:
    """Empirical coverage and length of latent-mean intervals per training size.

    ``dgp_factory(rng)`` must return an object with ``sample(n, rng) -> (X, y)``
    and ``f0(x)``; ``model_factory()`` returns a fresh predictive model. With
    ``method="posterior"`` the model's exact conjugate posterior interval is
    used instead of the subsampled estimate.
    """
    if seed is None:
        seed = SeedSpec(0)
    z = normal_quantile((1.0 + level) / 2.0)
    rows = []
    for rep in range(reps):
        rep_seed = seed.derive("coverage", rep)
        dgp = dgp_factory(rep_seed.derive("dgp").rng())
        data_rng = rep_seed.derive("data").rng()
        query_rng = rep_seed.derive("query").rng()
        for n in sizes:
            X, y = dgp.sample(int(n), data_rng)
            model = model_factory()
            for xi, yi in zip(X, y):
                model.fit_append(xi, yi)
            for qid in range(queries_per_rep):
                x = dgp.sample_query(query_rng)
                truth = dgp.f0(x)
                if method == "posterior":
                    mean = model.predict_mean(x, int(n))
                    half = z * math.sqrt(model.posterior_var(x, int(n)))
                    lo, hi = mean - half, mean + half
                elif method == "subclt":
                    est = subclt_estimate(model, int(n), x, b)
                    lo, hi = interval(est, level, v_floor)
                else:
                    raise ParamError(f"unknown interval method {method!r}")
                rows.append({
                    "dgp": dgp_name,
                    "n": int(n),
                    "rep": rep,
                    "query_id": qid,
                    "covered": int(lo <= truth <= hi),
                    "length": hi - lo,
                })
    return rows


def coverage_summary(rows) -> list[dict]:
    """Per-size coverage fraction and mean interval length."""
    out = {}
    for row in rows:
        key = (row["dgp"], row["n"])
        out.setdefault(key, []).append(row)
    summary = []
    for (dgp, n), group in sorted(out.items()):
        summary.append({
            "dgp": dgp,
            "n": n,
            "coverage": float(np.mean([g["covered"] for g in group])),
            "mean_length": float(np.mean([g["length"] for g in group])),
        })
    return summary


def write_coverage_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["dgp", "n", "rep", "query_id", "covered", "length"])
        writer.writeheader()
        writer.writerows(rows)
