"""Functional depth scoring, bootstrap thresholds, and exceedance sums.

Residual curves are pooled per (terminal, partition).  Each day's curve
gets a functional depth within its pool; a depth-weighted, smoothed
bootstrap yields the flagging threshold C; normalized depths
z = (C - d)/C are positive exactly for flagged days, and cluster-day
exceedance sums aggregate the positive z values across a cluster.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import date

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist, squareform

MIN_POOL_SIZE = 10

DEPTH_METHODS = ("h_modal", "fraiman_muniz")


class PoolTooSmallError(ValueError):
    """Pool has too few curves for reliable thresholding."""


def substream_rng(root_seed: int, *key_parts) -> np.random.Generator:
    """Derive a deterministic per-key random generator from a root seed.

    Keys are hashed with SHA-256 so adding terminals or partitions never
    perturbs other substreams.
    """
    digest = hashlib.sha256("|".join(str(p) for p in key_parts).encode()).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32)
    return np.random.default_rng(np.random.SeedSequence([root_seed, *words.tolist()]))


def _h_modal_depth(curves: np.ndarray) -> np.ndarray:
    """Kernel depth: sum of Gaussian kernel weights of distances to the pool.

    Bandwidth is the 15th percentile of pairwise L2 distances, which
    makes the ranking invariant to positive rescaling of the pool.
    """
    n = curves.shape[0]
    if n == 1:
        return np.ones(1)
    dists = pdist(curves)
    h = float(np.percentile(dists, 15))
    if h <= 0.0:
        positive = dists[dists > 0]
        if len(positive) == 0:
            return np.ones(n)  # identical curves: all equally deep
        h = float(positive.min())
    D = squareform(dists)
    K = np.exp(-0.5 * (D / h) ** 2)
    np.fill_diagonal(K, 0.0)
    return K.sum(axis=1)


def _fraiman_muniz_depth(curves: np.ndarray) -> np.ndarray:
    """Mean over the grid of univariate depths 1 - |1/2 - F_t(x(t))|.

    F_t is the midrank empirical CDF at grid point t.
    """
    from scipy.stats import rankdata

    n = curves.shape[0]
    ranks = np.apply_along_axis(rankdata, 0, curves)  # average midranks
    F = (ranks - 0.5) / n
    return (1.0 - np.abs(0.5 - F)).mean(axis=1)


def functional_depth(pool: np.ndarray, method: str = "h_modal") -> np.ndarray:
    """Depth of each curve within the pool; higher = more central."""
    pool = np.asarray(pool, dtype=float)
    if pool.ndim != 2:
        raise ValueError("pool must be a 2-D (n_curves, n_grid) array")
    if method == "h_modal":
        return _h_modal_depth(pool)
    if method == "fraiman_muniz":
        return _fraiman_muniz_depth(pool)
    raise ValueError(f"unknown depth method {method!r}")


def _smoothing_transform(pool: np.ndarray, gamma: float) -> np.ndarray:
    """Matrix A with A A^T = gamma * pooled covariance, for perturbations."""
    cov = np.cov(pool, rowvar=False)
    cov = np.atleast_2d(cov)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(gamma * vals)


def bootstrap_threshold(
    pool: np.ndarray,
    B: int = 200,
    gamma: float = 0.05,
    seed=None,
    method: str = "h_modal",
    percentile: float = 1.0,
    min_pool_size: int = MIN_POOL_SIZE,
) -> float:
    """Depth threshold from a depth-weighted, smoothed bootstrap.

    Each of the B resamples draws |pool| curves with replacement with
    probability proportional to depth (outlying curves are rarely
    drawn), adds a zero-mean Gaussian perturbation with covariance
    gamma * pooled covariance, and records the given percentile of the
    resample's depths.  The threshold is the median of those B values.
    Deterministic for a fixed seed or Generator.
    """
    pool = np.asarray(pool, dtype=float)
    n = pool.shape[0]
    if n < min_pool_size:
        raise PoolTooSmallError(f"pool of {n} curves is below minimum {min_pool_size}")
    if not np.any(pool):
        raise PoolTooSmallError("pool is identically zero")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    depths = functional_depth(pool, method)
    total = depths.sum()
    if total <= 0.0:
        weights = np.full(n, 1.0 / n)
    else:
        weights = depths / total
    A = _smoothing_transform(pool, gamma)

    stats = np.empty(B)
    for b in range(B):
        idx = rng.choice(n, size=n, replace=True, p=weights)
        noise = rng.standard_normal((n, A.shape[1])) @ A.T
        resample = pool[idx] + noise
        stats[b] = np.percentile(functional_depth(resample, method), percentile)
    C = float(np.median(stats))
    if C <= 0.0:
        raise PoolTooSmallError("bootstrap produced a non-positive threshold")
    return C


def normalize_depth(d: float, C: float) -> float:
    """z = (C - d)/C; positive exactly when the depth is below threshold."""
    if C <= 0.0:
        raise ValueError("threshold must be positive")
    return (C - d) / C


@dataclass
class ClusterDayExceedance:
    cluster: str
    date: date
    z_n: float
    size: int
    contributors: list[str]
    missing: list[str] = field(default_factory=list)
    direction: str | None = None  # "positive" | "negative" when z_n > 0


def cluster_exceedance(members, day: date, z_values: dict[str, float],
                       cluster_id: str = "") -> ClusterDayExceedance:
    """Sum of positive z values over a cluster's terminals for one day.

    Terminals without a score for the day contribute zero and are listed
    as missing.
    """
    members = sorted(members)
    z_n = 0.0
    contributors, missing = [], []
    for s in members:
        z = z_values.get(s)
        if z is None:
            missing.append(s)
            continue
        if z > 0.0:
            z_n += z
            contributors.append(s)
    return ClusterDayExceedance(cluster=cluster_id, date=day, z_n=z_n,
                                size=len(members), contributors=contributors,
                                missing=missing)


def classify_direction(residual_sums) -> str:
    """Positive iff the summed residual mass of contributing terminals >= 0.

    ``residual_sums`` holds, per contributing terminal, the grid sum of
    that day's residual curve.  An exact zero total counts as positive.
    """
    total = float(np.sum(np.asarray(list(residual_sums), dtype=float)))
    return "positive" if total >= 0.0 else "negative"


def score_pools(
    residual_curves: pd.DataFrame,
    method: str = "h_modal",
    B: int = 200,
    gamma: float = 0.05,
    root_seed: int = 0,
    percentile: float = 1.0,
    min_pool_size: int = MIN_POOL_SIZE,
) -> pd.DataFrame:
    """Depth, threshold, and z for every (terminal, partition) pool.

    Returns a frame with columns terminal, date, partition, depth,
    threshold, z, status.  Pools below the minimum size are scored with
    depth only and status "insufficient_data" (never flagged).
    """
    from .ingestion import HOUR_COLS

    rows = []
    for (terminal, partition), grp in residual_curves.groupby(
            ["terminal", "partition"], sort=True):
        grp = grp.sort_values("date", kind="mergesort")
        pool = grp[HOUR_COLS].to_numpy(dtype=float)
        dates = list(grp["date"])
        depths = functional_depth(pool, method)
        try:
            rng = substream_rng(root_seed, terminal, partition)
            C = bootstrap_threshold(pool, B=B, gamma=gamma, seed=rng,
                                    method=method, percentile=percentile,
                                    min_pool_size=min_pool_size)
            for day, depth in zip(dates, depths):
                rows.append((terminal, day, partition, float(depth), C,
                             normalize_depth(float(depth), C), "ok"))
        except PoolTooSmallError:
            for day, depth in zip(dates, depths):
                rows.append((terminal, day, partition, float(depth),
                             float("nan"), float("nan"), "insufficient_data"))
    return pd.DataFrame(rows, columns=["terminal", "date", "partition", "depth",
                                       "threshold", "z", "status"])
