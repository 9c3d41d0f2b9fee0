"""Severity scoring and analyst-facing reports.

Cluster-day exceedance sums z_n live on (0, S) where S is the cluster
size, so a Beta distribution rescaled to that interval turns each z_n
into a bounded severity score via its CDF.  The rest of the module
shapes the scored days into ranked alert lists, heatmap matrices,
positive/negative series, per-terminal counts, pick-up/drop-off cosine
comparisons, and weather cross-tabulations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd
from scipy import optimize, stats
from scipy.special import betaln

MIN_FIT_SAMPLES = 20

DEFAULT_TEMP_BINS = list(range(15, 100, 5))
DEFAULT_PRECIP_BINS = [0.0, 0.01, 0.1, 0.5, 1.0, 2.0]
DEFAULT_SEVERITY_BINS = [0.0, 0.25, 0.5, 0.75, 1.0]


class FitError(ValueError):
    """Severity model could not be fitted."""


@dataclass
class SeverityModel:
    cluster: str
    alpha: float
    beta: float
    upper: float  # cluster size S; support is (0, S)

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.upper <= 0:
            raise ValueError("upper bound must be positive")


def fit_beta4(z_samples, S: float, cluster: str = "") -> SeverityModel:
    """Fit the rescaled Beta by method of moments refined by likelihood.

    Samples are the strictly positive exceedance sums of one cluster,
    rescaled to (0, 1) by the cluster size.  When the moment estimator
    is invalid (variance too large) the likelihood is maximised from a
    uniform start instead.  Shapes are clamped to at least 1e-3.
    """
    z = np.asarray(list(z_samples), dtype=float)
    if len(z) < MIN_FIT_SAMPLES:
        raise FitError(f"need at least {MIN_FIT_SAMPLES} samples, got {len(z)}")
    if np.any(z <= 0) or np.any(z >= S):
        raise FitError("samples must lie strictly inside (0, S)")
    u = z / S
    m = float(u.mean())
    v = float(u.var(ddof=1))
    if v > 0 and v < m * (1.0 - m):
        common = m * (1.0 - m) / v - 1.0
        a0, b0 = m * common, (1.0 - m) * common
    else:
        a0, b0 = 1.0, 1.0

    # guard against log(0) in the likelihood
    eps = 1e-12
    uc = np.clip(u, eps, 1.0 - eps)
    sum_log_u = float(np.log(uc).sum())
    sum_log_1mu = float(np.log1p(-uc).sum())
    n = len(uc)

    def negloglik(params):
        a, b = params
        if a <= 0 or b <= 0:
            return np.inf
        return -((a - 1.0) * sum_log_u + (b - 1.0) * sum_log_1mu - n * betaln(a, b))

    res = optimize.minimize(negloglik, x0=[a0, b0], method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000})
    a, b = (res.x if res.success and np.isfinite(res.fun) else (a0, b0))
    a = max(float(a), 1e-3)
    b = max(float(b), 1e-3)
    return SeverityModel(cluster=cluster, alpha=a, beta=b, upper=float(S))


def severity(model: SeverityModel, z_n: float) -> float:
    """CDF of the fitted rescaled Beta at z_n; clamps out-of-range input."""
    if z_n < 0.0 or z_n > model.upper:
        warnings.warn(f"z_n={z_n} outside [0, {model.upper}]; clamped")
        z_n = min(max(z_n, 0.0), model.upper)
    return float(stats.beta.cdf(z_n / model.upper, model.alpha, model.beta))


def gpd_vs_beta_loglik(z_samples, S: float) -> tuple[float, float]:
    """Log-likelihood of a Beta fit vs a generalized Pareto fit on (0, S)."""
    z = np.asarray(list(z_samples), dtype=float)
    model = fit_beta4(z, S)
    beta_ll = float(np.sum(stats.beta.logpdf(z / S, model.alpha, model.beta) - np.log(S)))
    c, loc, scale = stats.genpareto.fit(z, floc=0.0)
    gpd_ll = float(np.sum(stats.genpareto.logpdf(z, c, loc, scale)))
    return beta_ll, gpd_ll


def alert_list(day: date, cluster_days: pd.DataFrame,
               members: dict[str, list[str]]) -> pd.DataFrame:
    """Ranked alert table for one date.

    ``cluster_days`` needs columns cluster, date, z_n, severity,
    direction, contributors.  Only clusters with z_n > 0 appear, sorted
    by severity descending (ties by cluster ID); clusters without a
    fitted severity model sort after the scored ones by raw z_n.
    Each entry lists the flagged terminals and the unflagged co-cluster
    terminals.
    """
    rows = cluster_days[(cluster_days["date"] == day) & (cluster_days["z_n"] > 0)]
    scored = rows[rows["severity"].notna()].sort_values(
        ["severity", "cluster"], ascending=[False, True], kind="mergesort")
    unscored = rows[rows["severity"].isna()].sort_values(
        ["z_n", "cluster"], ascending=[False, True], kind="mergesort")
    ordered = pd.concat([scored, unscored], ignore_index=True)
    out = []
    for rank, row in enumerate(ordered.itertuples(index=False), start=1):
        detected = list(row.contributors)
        others = [t for t in members.get(row.cluster, []) if t not in set(detected)]
        out.append({
            "rank": rank,
            "date": row.date,
            "cluster": row.cluster,
            "severity": row.severity,
            "direction": row.direction,
            "z_n": row.z_n,
            "detected_terminals": detected,
            "co_cluster_terminals": others,
        })
    return pd.DataFrame(out, columns=["rank", "date", "cluster", "severity",
                                      "direction", "z_n", "detected_terminals",
                                      "co_cluster_terminals"])


def order_clusters(cluster_centroids: dict[str, tuple[float, float]],
                   network_center: tuple[float, float],
                   order: str = "center_distance") -> list[str]:
    """Cluster column order for the heatmap: by distance from the network
    center (default) or north to south."""
    from .clustering import haversine_m

    if order == "center_distance":
        keyfn = lambda c: (haversine_m(cluster_centroids[c][0], cluster_centroids[c][1],
                                       network_center[0], network_center[1]), c)
    elif order == "north_south":
        keyfn = lambda c: (-cluster_centroids[c][0], c)
    else:
        raise ValueError(f"unknown order {order!r}")
    return sorted(cluster_centroids, key=keyfn)


def severity_heatmap(cluster_days: pd.DataFrame, cluster_order: list[str],
                     date_range: tuple[date, date] | None = None) -> pd.DataFrame:
    """Date x cluster matrix of severities; NaN where z_n = 0."""
    flagged = cluster_days[cluster_days["z_n"] > 0]
    # pivot, not pivot_table: flagged days without a fitted severity model
    # must keep their row (as NaN) rather than vanish
    mat = flagged.pivot(index="date", columns="cluster", values="severity")
    if date_range is not None:
        start, end = date_range
        idx = pd.Index([start + pd.Timedelta(days=i).to_pytimedelta()
                        for i in range((end - start).days + 1)], name="date")
        mat = mat.reindex(idx)
    cols = [c for c in cluster_order if c in mat.columns] + \
           [c for c in cluster_order if c not in mat.columns]
    return mat.reindex(columns=cols)


def pos_neg_series(cluster_days: pd.DataFrame) -> pd.DataFrame:
    """Aligned per-day counts of positive and negative outlier clusters."""
    flagged = cluster_days[cluster_days["z_n"] > 0]
    all_dates = sorted(cluster_days["date"].unique())
    out = pd.DataFrame(index=pd.Index(all_dates, name="date"))
    for direction in ("positive", "negative"):
        counts = flagged[flagged["direction"] == direction].groupby("date").size()
        out[direction] = counts.reindex(out.index, fill_value=0).astype(int)
    return out


def terminal_outlier_counts(depth_table: pd.DataFrame) -> pd.DataFrame:
    """Days with z > 0 per terminal; zero-count terminals are omitted."""
    flagged = depth_table[depth_table["z"] > 0]
    counts = flagged.groupby("terminal").size().rename("outlier_days")
    return counts[counts > 0].reset_index()


def cosine_similarity(u, v) -> float:
    """u.v / (|u||v|); in [0, 1] for elementwise-nonnegative vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("vectors must have equal length")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return float("nan")
    return float(np.dot(u, v) / (nu * nv))


def load_weather(source, column_map: dict | None = None) -> pd.DataFrame:
    """Load a daily weather table (date, mean temperature, precipitation).

    Accepts a Visual Crossing style daily export via the column map;
    defaults expect columns named date, temp, precip.
    """
    cmap = {"date": "date", "temp": "temp", "precip": "precip"}
    cmap.update(column_map or {})
    df = pd.read_csv(source)
    missing = [cmap[k] for k in ("date", "temp", "precip") if cmap[k] not in df.columns]
    if missing:
        raise ValueError(f"weather file missing columns {missing}")
    out = pd.DataFrame({
        "date": pd.to_datetime(df[cmap["date"]]).dt.date,
        "temp": df[cmap["temp"]].astype(float),
        "precip": df[cmap["precip"]].astype(float),
    })
    if out["date"].duplicated().any():
        raise ValueError("weather table has duplicate dates")
    return out


def _daily_max_severity(cluster_days: pd.DataFrame, direction: str | None) -> pd.Series:
    rows = cluster_days[cluster_days["z_n"] > 0]
    if direction is not None:
        rows = rows[rows["direction"] == direction]
    return rows.groupby("date")["severity"].max()


def _crosstab(day_severity: pd.Series, weather: pd.DataFrame, weather_col: str,
              weather_bins, severity_bins, all_dates) -> tuple[pd.DataFrame, int]:
    wx = weather.set_index("date")[weather_col]
    rows_missing = 0
    records = []
    for d in all_dates:
        if d not in wx.index:
            rows_missing += 1
            continue
        records.append((float(wx.loc[d]), day_severity.get(d, np.nan)))
    df = pd.DataFrame(records, columns=["wx", "sev"])

    wx_labels = [f"[{weather_bins[i]}, {weather_bins[i+1]})"
                 for i in range(len(weather_bins) - 1)]
    sev_labels = ["no outlier"] + [
        f"({severity_bins[i]}, {severity_bins[i+1]}]"
        for i in range(len(severity_bins) - 1)
    ]
    df["wx_bin"] = pd.cut(df["wx"], bins=weather_bins, labels=wx_labels,
                          right=False, include_lowest=True)
    sev_bin = pd.cut(df["sev"], bins=severity_bins, labels=sev_labels[1:],
                     right=True, include_lowest=False)
    df["sev_bin"] = sev_bin.cat.add_categories(["no outlier"]).fillna("no outlier")
    counts = pd.crosstab(df["wx_bin"], df["sev_bin"], dropna=False)
    counts = counts.reindex(index=wx_labels, columns=sev_labels, fill_value=0)
    totals = counts.sum(axis=1)
    props = counts.div(totals.replace(0, np.nan), axis=0)
    return props, rows_missing


def weather_crosstab(cluster_days: pd.DataFrame, weather: pd.DataFrame,
                     temp_bins=None, precip_bins=None, severity_bins=None):
    """Two row-stochastic proportion matrices linking weather to severity.

    Matrix (a): per temperature bin, the proportion of days whose daily
    maximum severity falls in each severity bin (including a "no
    outlier" bin).  Matrix (b): the same per precipitation bin, using
    negative-direction outliers only.  Dates without weather are
    excluded and counted.
    """
    temp_bins = list(temp_bins or DEFAULT_TEMP_BINS)
    precip_bins = list(precip_bins or DEFAULT_PRECIP_BINS) + [np.inf]
    severity_bins = list(severity_bins or DEFAULT_SEVERITY_BINS)
    if sorted(temp_bins) != temp_bins or sorted(precip_bins) != precip_bins:
        raise ValueError("bin edges must be sorted")

    all_dates = sorted(cluster_days["date"].unique())
    temp_mat, miss_a = _crosstab(_daily_max_severity(cluster_days, None), weather,
                                 "temp", temp_bins, severity_bins, all_dates)
    precip_mat, miss_b = _crosstab(_daily_max_severity(cluster_days, "negative"),
                                   weather, "precip", precip_bins, severity_bins,
                                   all_dates)
    return {"temperature": temp_mat, "precipitation": precip_mat,
            "dates_missing_weather": max(miss_a, miss_b)}
