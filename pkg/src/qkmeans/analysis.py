"""Clustering quality and scaling analysis.

Covers the quantities the seeding experiments report on: exact k-means
cost and Lloyd refinement, the geometric parameters beta (cost against the
centroid over cost against the centers) and eta (max/min pairwise
distance), the max-Renyi divergence that controls rejection oversampling,
log-log power-law fits with t-based confidence intervals, and the
maximum-likelihood intrinsic-dimension estimator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import t as student_t

from ._kernels import cost as _kernel_cost
from ._kernels import min_sq_dists
from .dataset import Dataset
from .seeding import kmeanspp_exact

__all__ = [
    "GeomParams",
    "PowerLawFit",
    "cost",
    "assign",
    "lloyd",
    "geom_params",
    "max_renyi",
    "fit_power_law",
    "mle_id",
    "beta_curve",
]

# eta over all rows is O(n^2); above this many rows a fixed-seed subsample is used.
ETA_DATA_CAP = 20_000


def assign(X, C) -> np.ndarray:
    """Nearest-center label per row; ties go to the lowest center ordinal."""
    labels, _ = min_sq_dists(np.asarray(X, dtype=np.float64), np.asarray(C, dtype=np.float64))
    return labels


def cost(X, C) -> float:
    """Sum of squared distances from each row to its nearest center."""
    X = np.asarray(X, dtype=np.float64)
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if C.shape[0] == 0:
        raise ValueError("no centers")
    return _kernel_cost(X, C)


def _centroid_step(X, labels, md, k: int) -> np.ndarray:
    dim = X.shape[1]
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    sums = np.empty((k, dim))
    for j in range(dim):
        sums[:, j] = np.bincount(labels, weights=X[:, j], minlength=k)
    empty = counts == 0
    counts[empty] = 1.0
    centers = sums / counts[:, None]
    if np.any(empty):
        # Re-seed each empty cluster at the point contributing most cost.
        order = np.argsort(-md)
        takers = iter(order)
        for c in np.flatnonzero(empty):
            centers[c] = X[next(takers)]
    return centers


def lloyd(X, centers, max_iters: int = 50, tol: float = 1e-6) -> tuple[np.ndarray, list[float]]:
    """Lloyd refinement from the given centers.

    Returns (centers, cost_trace).  The trace starts at the initial cost and
    appends only strict improvements, so it is monotone non-increasing; the
    loop stops when the relative improvement drops below tol (a fixed point
    yields a length-1 trace and unchanged centers) or after max_iters.
    """
    X = np.asarray(X, dtype=np.float64)
    C = np.atleast_2d(np.asarray(centers, dtype=np.float64)).copy()
    if max_iters < 0:
        raise ValueError("max_iters must be >= 0")
    k = C.shape[0]
    labels, md = min_sq_dists(X, C)
    trace = [float(md.sum())]
    for _ in range(max_iters):
        C_next = _centroid_step(X, labels, md, k)
        labels_next, md_next = min_sq_dists(X, C_next)
        c_prev, c_next = trace[-1], float(md_next.sum())
        if not c_next < c_prev:
            break
        C, labels, md = C_next, labels_next, md_next
        trace.append(c_next)
        if c_prev - c_next < tol * c_prev:
            break
    return C, trace


@dataclass
class GeomParams:
    """beta and the eta spread ratios for one (dataset, centers) pair.

    Ratios degenerate to +inf when the denominator vanishes (zero cost,
    duplicate centers or duplicate rows).  eta_data is None unless its
    O(n^2) computation was requested; eta_data_subsampled records whether
    the row cap kicked in.
    """

    beta: float
    eta_centers: float
    eta_data: float | None = None
    eta_data_subsampled: bool = False


def _eta_from_rows(rows: np.ndarray) -> float:
    d = pdist(rows)
    dmin, dmax = float(d.min()), float(d.max())
    if dmin == 0.0:
        return math.inf
    return dmax / dmin


def _eta_data(X: np.ndarray) -> tuple[float, bool]:
    sub = X.shape[0] > ETA_DATA_CAP
    if sub:
        keep = np.random.default_rng(0).choice(X.shape[0], ETA_DATA_CAP, replace=False)
        X = X[keep]
    n = X.shape[0]
    dmin, dmax = math.inf, 0.0
    chunk = max(1, 4_000_000 // max(n, 1))
    for lo in range(0, n - 1, chunk):
        hi = min(lo + chunk, n - 1)
        block = cdist(X[lo:hi], X[lo:])
        for r in range(hi - lo):
            row = block[r, r + 1 :]
            if row.size:
                dmin = min(dmin, float(row.min()))
                dmax = max(dmax, float(row.max()))
    if dmin == 0.0:
        return math.inf, sub
    return dmax / dmin, sub


def geom_params(ds: Dataset, centers, include_eta_data: bool = False) -> GeomParams:
    """beta(X, C) and eta for the center set (optionally for the rows too)."""
    X = ds.points
    C = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if C.shape[0] < 2:
        raise ValueError("eta needs at least 2 centers")
    centroid_cost = cost(X, X.mean(axis=0))
    center_cost = cost(X, C)
    beta = centroid_cost / center_cost if center_cost > 0.0 else math.inf
    eta_c = _eta_from_rows(C)
    eta_d, sub = _eta_data(X) if include_eta_data else (None, False)
    return GeomParams(beta=beta, eta_centers=eta_c, eta_data=eta_d, eta_data_subsampled=sub)


def max_renyi(mu, nu) -> float:
    """Max-Renyi divergence sup_x log(mu(x) / nu(x)) over the support of mu.

    Both arguments must be probability vectors (sums within 1e-9 of 1);
    mass of mu where nu vanishes gives +inf.
    """
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if mu.shape != nu.shape or mu.ndim != 1:
        raise ValueError("mu and nu must be 1-d vectors of equal length")
    for name, v in (("mu", mu), ("nu", nu)):
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError(f"{name} must be nonnegative and finite")
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} does not sum to 1")
    support = mu > 0.0
    if np.any(nu[support] == 0.0):
        return math.inf
    return float(np.max(np.log(mu[support] / nu[support])))


@dataclass
class PowerLawFit:
    """OLS fit of log(value) on log(k) with a 95% t-interval on the slope."""

    slope: float
    intercept: float
    r_squared: float
    ci95_slope: tuple[float, float]
    points_used: int


def fit_power_law(ks, values) -> PowerLawFit:
    """Fit value ~ exp(intercept) * k^slope by least squares in log-log.

    Needs >= 3 strictly positive points.  Conventions for degenerate data:
    constant values give slope 0 with r_squared 0, and a zero-residual fit
    collapses the confidence interval to (slope, slope).
    """
    ks = np.asarray(ks, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if ks.shape != values.shape or ks.ndim != 1:
        raise ValueError("ks and values must be 1-d vectors of equal length")
    if ks.size < 3:
        raise ValueError("power-law fit needs at least 3 points")
    if np.any(ks <= 0) or np.any(values <= 0) or not np.all(np.isfinite(ks)) or not np.all(np.isfinite(values)):
        raise ValueError("ks and values must be positive and finite")
    lx = np.log(ks)
    ly = np.log(values)
    xbar = lx.mean()
    sxx = float(np.sum((lx - xbar) ** 2))
    if sxx == 0.0:
        raise ValueError("all ks coincide; slope is undefined")
    slope = float(np.sum((lx - xbar) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * xbar)
    resid = ly - (intercept + slope * lx)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 0.0
    dof = ks.size - 2
    if ss_res <= 0.0:
        ci = (slope, slope)
    else:
        se = math.sqrt(ss_res / dof / sxx)
        half = float(student_t.ppf(0.975, dof)) * se
        ci = (slope - half, slope + half)
    return PowerLawFit(slope=slope, intercept=intercept, r_squared=r_squared,
                       ci95_slope=ci, points_used=int(ks.size))


def mle_id(ds: Dataset, k_nn: int, subsample: int | None = None, rng_seed: int = 0) -> float:
    """Maximum-likelihood intrinsic dimension from k-NN distance ratios.

    For each point the local estimate is
    (k-1) / sum_{j<k} log(T_k / T_j) with T_j the j-th nearest-neighbor
    distance (exhaustive scan, self excluded); the estimate is their mean.
    Points whose neighborhood contains a duplicate (T_j = 0) or is
    perfectly equidistant are skipped; if every point is skipped the data
    is too degenerate to estimate.
    """
    if k_nn < 2:
        raise ValueError("k_nn must be >= 2")
    X = ds.points
    if subsample is not None:
        if subsample < 2:
            raise ValueError("subsample must be >= 2")
        if subsample < X.shape[0]:
            keep = np.random.default_rng(rng_seed).choice(X.shape[0], subsample, replace=False)
            X = X[keep]
    n = X.shape[0]
    if n <= k_nn:
        raise ValueError(f"need more than k_nn = {k_nn} points, have {n}")
    T = np.empty((n, k_nn))
    chunk = max(1, 4_000_000 // max(n, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d = cdist(X[lo:hi], X)
        part = np.partition(d, k_nn, axis=1)[:, : k_nn + 1]
        part.sort(axis=1)
        T[lo:hi] = part[:, 1:]  # drop the self distance
    valid = T[:, 0] > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio_sum = (k_nn - 1) * np.log(T[:, -1]) - np.log(T[:, :-1]).sum(axis=1)
        local = (k_nn - 1) / log_ratio_sum
    valid &= np.isfinite(local)
    if not np.any(valid):
        raise ValueError("all points degenerate (duplicates or equidistant neighborhoods)")
    return float(local[valid].mean())


def beta_curve(ds: Dataset, ks, runs: int = 5, lloyd_iters: int = 25, tol: float = 1e-5,
               rng_seed: int = 0, aggregate: str = "mean") -> tuple[list[dict], list[dict]]:
    """Seed + Lloyd at each k and collect beta / eta_centers statistics.

    Each (k, run) cell seeds with k-means++, refines with Lloyd, and
    measures geom_params on the refined centers.  Returns (points, records)
    where points holds one aggregated row per k (mean over runs, or the
    best-cost run when aggregate="best") and records holds every cell.
    k = 1 has no eta and beta pinned at its denominator, so it is dropped
    with a warning.
    """
    if aggregate not in ("mean", "best"):
        raise ValueError(f"unknown aggregate {aggregate!r} (expected 'mean' or 'best')")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    ks = [int(k) for k in ks]
    if any(k < 1 for k in ks):
        raise ValueError("ks must be >= 1")
    if any(k == 1 for k in ks):
        warnings.warn("k = 1 has no center spread; excluded from the curve", stacklevel=2)
        ks = [k for k in ks if k > 1]
    if not ks:
        raise ValueError("no usable ks (all were 1)")
    ss = np.random.SeedSequence(rng_seed)
    children = ss.spawn(len(ks) * runs)
    records: list[dict] = []
    points: list[dict] = []
    ci = 0
    for k in ks:
        cell: list[dict] = []
        for run in range(runs):
            seed = int(children[ci].generate_state(1)[0])
            ci += 1
            seeded = kmeanspp_exact(ds, k, rng_seed=seed)
            refined, trace = lloyd(ds.points, seeded.center_coords, max_iters=lloyd_iters, tol=tol)
            params = geom_params(ds, refined)
            rec = {
                "k": k,
                "run": run,
                "seed": seed,
                "beta": params.beta,
                "eta_centers": params.eta_centers,
                "cost_seed": seeded.final_cost,
                "cost_lloyd": trace[-1],
            }
            cell.append(rec)
            records.append(rec)
        if aggregate == "mean":
            beta = float(np.mean([r["beta"] for r in cell]))
            eta = float(np.mean([r["eta_centers"] for r in cell]))
        else:
            best = min(cell, key=lambda r: r["cost_lloyd"])
            beta, eta = best["beta"], best["eta_centers"]
        points.append({"k": k, "beta": beta, "eta_centers": eta})
    return points, records
