"""Per-terminal baseline model and variance diagnostics.

The baseline removes known temporal structure from daily usage curves: a
functional regression with day-of-week, month, and year indicator
factors (fitted as 24 pointwise least-squares problems sharing one
design matrix) plus a fixed partition of days into four
variance-homogeneous groups (summer/winter x weekday/weekend).
Residual curves from the regression feed the clustering and outlier
detection stages.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from datetime import date
from itertools import combinations

import numpy as np
import pandas as pd
from scipy import stats

from .ingestion import HOUR_COLS

FACTORS = ("day", "month", "year")

# Reference levels absorbed by the intercept.
REF_DAY = 6        # Sunday (datetime.weekday)
REF_MONTH = 12     # December
REF_YEAR = 2019

SUMMER_MONTHS = frozenset(range(4, 11))  # April through October


@dataclass(frozen=True)
class PartitionLabel:
    season: str   # "summer" | "winter"
    daytype: str  # "weekday" | "weekend"

    @property
    def key(self) -> str:
        return f"{self.season}_{self.daytype}"


ALL_PARTITIONS = tuple(
    PartitionLabel(s, d) for s in ("summer", "winter") for d in ("weekday", "weekend")
)


def assign_partition(d: date) -> PartitionLabel:
    """Map a date to its season/daytype partition.

    Summer is April 1 through October 31; weekends are Saturday and
    Sunday.  Years are pooled.
    """
    season = "summer" if d.month in SUMMER_MONTHS else "winter"
    daytype = "weekend" if d.weekday() >= 5 else "weekday"
    return PartitionLabel(season, daytype)


def _factor_level(factor: str, d: date) -> int:
    if factor == "day":
        return d.weekday()
    if factor == "month":
        return d.month
    if factor == "year":
        return d.year
    raise ValueError(f"unknown factor {factor!r}")


@dataclass
class RegressionModel:
    terminal: str
    factors: tuple[str, ...]
    intercept: np.ndarray                       # (24,)
    coefficients: dict[tuple[str, int], np.ndarray]  # (factor, level) -> (24,)
    reference: dict[str, int]
    dropped_levels: list[tuple[str, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "terminal": self.terminal,
            "factors": list(self.factors),
            "intercept": self.intercept.tolist(),
            "coefficients": {
                f"{f}:{lvl}": v.tolist() for (f, lvl), v in self.coefficients.items()
            },
            "reference": self.reference,
            "dropped_levels": [list(x) for x in self.dropped_levels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionModel":
        coeffs = {}
        for key, v in d["coefficients"].items():
            f, lvl = key.split(":")
            coeffs[(f, int(lvl))] = np.asarray(v, dtype=float)
        return cls(
            terminal=d["terminal"],
            factors=tuple(d["factors"]),
            intercept=np.asarray(d["intercept"], dtype=float),
            coefficients=coeffs,
            reference={k: int(v) for k, v in d["reference"].items()},
            dropped_levels=[tuple(x) for x in d["dropped_levels"]],
        )


def _design_levels(dates: list[date], factors: tuple[str, ...]):
    """Choose reference and dummy levels per factor from observed dates.

    The canonical references are Sunday / December / 2019; if a
    reference level never occurs in the data, the largest observed level
    takes its place so the design keeps full rank.
    """
    canonical = {"day": REF_DAY, "month": REF_MONTH, "year": REF_YEAR}
    reference: dict[str, int] = {}
    dummy_levels: list[tuple[str, int]] = []
    for f in factors:
        observed = sorted({_factor_level(f, d) for d in dates})
        ref = canonical[f] if canonical[f] in observed else observed[-1]
        reference[f] = ref
        dummy_levels.extend((f, lvl) for lvl in observed if lvl != ref)
    return reference, dummy_levels


def _design_matrix(dates: list[date], dummy_levels: list[tuple[str, int]]) -> np.ndarray:
    X = np.zeros((len(dates), 1 + len(dummy_levels)))
    X[:, 0] = 1.0
    for j, (f, lvl) in enumerate(dummy_levels, start=1):
        X[:, j] = [1.0 if _factor_level(f, d) == lvl else 0.0 for d in dates]
    return X


def fit_regression(curves: pd.DataFrame, factors=FACTORS) -> RegressionModel:
    """Fit the indicator regression for one terminal's daily curves.

    24 pointwise ordinary-least-squares fits share a single dummy-coded
    design matrix.  Unobserved factor levels are dropped with a warning;
    with fewer days than coefficients the fit is refused.
    """
    factors = tuple(f for f in FACTORS if f in factors)
    terminals = curves["terminal"].unique()
    if len(terminals) != 1:
        raise ValueError("fit_regression expects curves for exactly one terminal")
    dates = [d for d in curves["date"]]
    for f in factors:
        if len({_factor_level(f, d) for d in dates}) < 2:
            raise ValueError(f"factor {f!r} has fewer than 2 observed levels")
    reference, dummy_levels = _design_levels(dates, factors)

    dropped: list[tuple[str, int]] = []
    canonical_counts = {"day": range(7), "month": range(1, 13)}
    for f in factors:
        if f not in canonical_counts:
            continue
        observed = {_factor_level(f, d) for d in dates}
        for lvl in canonical_counts[f]:
            if lvl not in observed:
                dropped.append((f, lvl))
                warnings.warn(f"level {f}={lvl} never observed; dropped from model")

    X = _design_matrix(dates, dummy_levels)
    if X.shape[0] < X.shape[1]:
        raise ValueError(
            f"{X.shape[0]} days cannot identify {X.shape[1]} coefficients")
    Y = curves[HOUR_COLS].to_numpy(dtype=float)
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return RegressionModel(
        terminal=str(terminals[0]),
        factors=factors,
        intercept=beta[0].copy(),
        coefficients={lvl: beta[j + 1].copy() for j, lvl in enumerate(dummy_levels)},
        reference=reference,
        dropped_levels=dropped,
    )


def predict_mean(model: RegressionModel, d: date) -> np.ndarray:
    """Fitted 24-point mean curve for a date: intercept plus active dummies."""
    out = model.intercept.copy()
    for f in model.factors:
        lvl = _factor_level(f, d)
        if lvl == model.reference.get(f):
            continue
        coef = model.coefficients.get((f, lvl))
        if coef is None:
            # level dropped for rank deficiency or unseen in training
            warnings.warn(f"no coefficient for {f}={lvl}; using remaining terms")
            continue
        out += coef
    return out


def residuals(model: RegressionModel, curves: pd.DataFrame) -> pd.DataFrame:
    """Observed minus fitted curves, with partition labels attached."""
    preds = np.vstack([predict_mean(model, d) for d in curves["date"]])
    vals = curves[HOUR_COLS].to_numpy(dtype=float) - preds
    out = pd.DataFrame(vals, columns=HOUR_COLS)
    out.insert(0, "terminal", curves["terminal"].to_numpy())
    out.insert(1, "date", curves["date"].to_numpy())
    out.insert(2, "partition", [assign_partition(d).key for d in curves["date"]])
    return out


def cv_mse(curves: pd.DataFrame, factors=FACTORS) -> float:
    """Leave-one-out mean squared prediction error on the hourly grid.

    The integral over the day is approximated by the mean over the 24
    grid points of the squared pointwise error.  Days whose deletion
    makes the design singular (a level observed once) are predicted from
    a refit with that level dropped, with a warning.
    """
    factors = tuple(f for f in FACTORS if f in factors)
    dates = [d for d in curves["date"]]
    reference, dummy_levels = _design_levels(dates, factors)
    X = _design_matrix(dates, dummy_levels)
    Y = curves[HOUR_COLS].to_numpy(dtype=float)
    n = X.shape[0]
    if n <= X.shape[1]:
        raise ValueError("too few days for leave-one-out evaluation")

    Q, _ = np.linalg.qr(X)
    leverage = np.einsum("ij,ij->i", Q, Q)
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ beta

    total = 0.0
    for i in range(n):
        if leverage[i] < 1.0 - 1e-8:
            loo = resid[i] / (1.0 - leverage[i])
        else:
            # deleting day i removes a level entirely; refit without it
            warnings.warn("singleton factor level; leave-one-out refit drops it")
            mask = np.ones(n, dtype=bool)
            mask[i] = False
            keep = [j for j, lvl in enumerate(dummy_levels)
                    if X[mask, j + 1].any()]
            Xi = X[np.ix_(mask, [0] + [j + 1 for j in keep])]
            bi, *_ = np.linalg.lstsq(Xi, Y[mask], rcond=None)
            xrow = np.concatenate(([1.0], X[i, [j + 1 for j in keep]]))
            loo = Y[i] - xrow @ bi
        total += float(np.mean(loo ** 2))
    return total / n


def all_factor_subsets() -> list[tuple[str, ...]]:
    """The 8 candidate factor subsets, smallest first, day<month<year."""
    subsets: list[tuple[str, ...]] = []
    for k in range(4):
        subsets.extend(combinations(FACTORS, k))
    return subsets


def select_model(curves: pd.DataFrame) -> tuple[tuple[str, ...], dict[tuple[str, ...], float]]:
    """Score all 8 factor subsets by CV-MSE and return the winner.

    Ties break toward fewer factors, then lexicographically with
    day < month < year.
    """
    table: dict[tuple[str, ...], float] = {}
    for subset in all_factor_subsets():
        table[subset] = cv_mse(curves, subset)
    best = min(table, key=lambda s: (table[s], len(s), s))
    return best, table


def rolling_variance(curves: pd.DataFrame, window_days: int) -> pd.Series:
    """Centered rolling variance of total daily usage for one terminal.

    Windows are truncated at the edges of the series.
    """
    if window_days < 2:
        raise ValueError("window_days must be >= 2")
    totals = pd.Series(
        curves[HOUR_COLS].sum(axis=1).to_numpy(dtype=float),
        index=pd.Index(curves["date"], name="date"),
    )
    return totals.rolling(window_days, center=True, min_periods=2).var()


def _segment_cost(cum_sq: np.ndarray, i: int, j: int) -> float:
    """Negative log-likelihood of x[i:j] under a zero-mean normal."""
    m = j - i
    var = (cum_sq[j] - cum_sq[i]) / m
    var = max(var, 1e-12)
    return 0.5 * m * (math.log(2.0 * math.pi * var) + 1.0)


def binseg_changepoints(series, max_cpts: int = 10, penalty: float | None = None) -> list[int]:
    """Binary segmentation for variance changes in a zero-mean series.

    Each candidate split must reduce the segment negative log-likelihood
    by more than ``penalty``; the default is a BIC-style log(N) per
    changepoint.  Returns sorted split indices (first index of the
    right-hand segment).
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 4:
        return []
    if penalty is None:
        penalty = math.log(n)
    cum_sq = np.concatenate([[0.0], np.cumsum(x ** 2)])
    min_seg = 2
    cpts: list[int] = []

    def best_split(i: int, j: int):
        base = _segment_cost(cum_sq, i, j)
        best_gain, best_k = -np.inf, None
        for k in range(i + min_seg, j - min_seg + 1):
            gain = base - _segment_cost(cum_sq, i, k) - _segment_cost(cum_sq, k, j)
            if gain > best_gain:
                best_gain, best_k = gain, k
        return best_gain, best_k

    segments = [(0, n)]
    while segments and len(cpts) < max_cpts:
        candidates = []
        for (i, j) in segments:
            if j - i >= 2 * min_seg:
                gain, k = best_split(i, j)
                if k is not None and gain > penalty:
                    candidates.append((gain, k, i, j))
        if not candidates:
            break
        gain, k, i, j = max(candidates)
        cpts.append(k)
        segments.remove((i, j))
        segments.extend([(i, k), (k, j)])
    return sorted(cpts)


def skewness(values) -> float:
    """Adjusted Fisher-Pearson sample skewness; NaN when variance is zero."""
    x = np.asarray(values, dtype=float)
    if len(x) < 3:
        raise ValueError("skewness needs at least 3 values")
    if np.var(x) == 0.0:
        return float("nan")
    return float(stats.skew(x, bias=False))


def log_transform(curves: pd.DataFrame, offset: float = 1.0) -> pd.DataFrame:
    """Elementwise log(x + offset) of the hourly columns."""
    if offset <= 0:
        raise ValueError("offset must be > 0")
    out = curves.copy()
    out[HOUR_COLS] = np.log(curves[HOUR_COLS].to_numpy(dtype=float) + offset)
    return out


def inverse_log_transform(curves: pd.DataFrame, offset: float = 1.0) -> pd.DataFrame:
    out = curves.copy()
    out[HOUR_COLS] = np.exp(curves[HOUR_COLS].to_numpy(dtype=float)) - offset
    return out


def interdaily_acf(residual_curves: pd.DataFrame, hour: int, max_lag: int) -> np.ndarray:
    """Sample autocorrelation of the hour-``hour`` residual across days."""
    if not 0 <= hour <= 23:
        raise ValueError("hour must be in 0..23")
    ordered = residual_curves.sort_values("date", kind="mergesort")
    x = ordered[f"h{hour}"].to_numpy(dtype=float)
    n = len(x)
    if n < max_lag + 2:
        raise ValueError("series too short for requested max_lag")
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        return np.concatenate([[1.0], np.zeros(max_lag)])
    acf = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        acf[lag] = float(np.dot(x[: n - lag], x[lag:])) / denom
    return acf
