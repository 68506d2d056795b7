"""Event-study engine: outcome construction, sentiment axis, per-horizon
local projections, and bias-corrected accelerated bootstrap bands.

Returns are open-to-close log returns over trading-day horizons; events
falling on non-trading days map to the next trading day. Per horizon the
outcome is regressed on the dissent level and the sentiment score, each
horizon independently, and the coefficient bands come from a residual
(default) or row-resampling bootstrap with BCa endpoint adjustment.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import date

import numpy as np
from scipy.special import ndtr, ndtri

from .corpus import PriceSeries
from .errors import (
    ConfigError,
    DataValueError,
    InsufficientDataError,
)

HORIZONS = range(0, 16)
MIN_EVENTS_PER_HORIZON = 10
MISSING = float("nan")


def _event_index(series: PriceSeries, when: date) -> int | None:
    """Index of the event bar: the trading day itself or the next one."""
    i = bisect_left(series.dates, when)
    return i if i < len(series.dates) else None


def log_return(series: PriceSeries, when: date, h: int) -> float:
    """log close(t+h) - log open(t) in trading days; NaN when out of range."""
    if h < 0:
        raise ConfigError("horizon must be non-negative")
    i = _event_index(series, when)
    if i is None or i + h >= len(series.dates):
        return MISSING
    return math.log(series.close[i + h]) - math.log(series.open[i])


def spread_outcome(series_a: PriceSeries, series_b: PriceSeries, when: date, h: int) -> float:
    """Difference of the two legs' log returns; NaN if either is missing."""
    ra = log_return(series_a, when, h)
    rb = log_return(series_b, when, h)
    if math.isnan(ra) or math.isnan(rb):
        return MISSING
    return ra - rb


def sentiment_axis(doc_vector: np.ndarray, dove_centroid: np.ndarray,
                   hawk_centroid: np.ndarray) -> float:
    """cos(doc, dove) - cos(doc, hawk), clipped to [-1, 1].

    Higher values lean dovish. The centroids come from seed-term lists
    embedded by the same encoder as the documents.
    """
    def unit(v, name):
        v = np.asarray(v, dtype=np.float64)
        norm = np.linalg.norm(v)
        if norm == 0.0 or not np.isfinite(norm):
            raise DataValueError(f"{name} has zero or non-finite norm")
        return v / norm

    d = unit(doc_vector, "document vector")
    s = float(d @ unit(dove_centroid, "dove centroid")
              - d @ unit(hawk_centroid, "hawk centroid"))
    return float(np.clip(s, -1.0, 1.0))


# --------------------------------------------------------------------------
# the per-horizon regression
# --------------------------------------------------------------------------

@dataclass
class EventPanel:
    """Events with dissent/sentiment regressors and per-horizon outcomes."""

    events: list[date]
    hd_min: np.ndarray
    s_min: np.ndarray
    outcomes: np.ndarray  # (n_events, 16); NaN marks missing cells

    def validate(self) -> "EventPanel":
        n = len(self.events)
        if self.hd_min.shape != (n,) or self.s_min.shape != (n,):
            raise DataValueError("regressors do not align with events")
        if self.outcomes.shape != (n, len(HORIZONS)):
            raise DataValueError(
                f"outcomes must be (n, {len(HORIZONS)}), got {self.outcomes.shape}")
        return self


def build_event_panel(events: list[date], hd_min, s_min, series: PriceSeries | None = None,
                      spread: tuple[PriceSeries, PriceSeries] | None = None) -> EventPanel:
    if (series is None) == (spread is None):
        raise ConfigError("pass exactly one of series or spread")
    outcomes = np.full((len(events), len(HORIZONS)), MISSING)
    for i, when in enumerate(events):
        for h in HORIZONS:
            if series is not None:
                outcomes[i, h] = log_return(series, when, h)
            else:
                outcomes[i, h] = spread_outcome(spread[0], spread[1], when, h)
    return EventPanel(events=list(events), hd_min=np.asarray(hd_min, dtype=np.float64),
                      s_min=np.asarray(s_min, dtype=np.float64),
                      outcomes=outcomes).validate()


@dataclass
class HorizonFit:
    h: int
    n: int
    coef: np.ndarray          # (b0, b1 dissent, b2 sentiment)
    X: np.ndarray
    y: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    xtx_inv: np.ndarray


@dataclass
class ProjectionResult:
    fits: dict[int, HorizonFit] = field(default_factory=dict)
    skipped: dict[int, str] = field(default_factory=dict)


def local_projection(panel: EventPanel) -> ProjectionResult:
    """Independent OLS per horizon over events with non-missing outcomes."""
    panel.validate()
    out = ProjectionResult()
    for h in HORIZONS:
        y_all = panel.outcomes[:, h]
        keep = ~np.isnan(y_all)
        n = int(keep.sum())
        if n < MIN_EVENTS_PER_HORIZON:
            out.skipped[h] = f"only {n} complete events (need {MIN_EVENTS_PER_HORIZON})"
            continue
        y = y_all[keep]
        X = np.column_stack([np.ones(n), panel.hd_min[keep], panel.s_min[keep]])
        xtx_inv = np.linalg.pinv(X.T @ X)
        coef = xtx_inv @ (X.T @ y)
        fitted = X @ coef
        out.fits[h] = HorizonFit(h=h, n=n, coef=coef, X=X, y=y, fitted=fitted,
                                 residuals=y - fitted, xtx_inv=xtx_inv)
    return out


# --------------------------------------------------------------------------
# BCa bootstrap
# --------------------------------------------------------------------------

@dataclass
class BcaInterval:
    lo: float
    hi: float
    z0: float
    accel: float
    degenerate: bool = False


def bca_endpoints(boots: np.ndarray, z0: float, accel: float, level: float) -> tuple[float, float]:
    """Quantiles of the bootstrap distribution at the BCa-adjusted levels.

    With z0 = accel = 0 this is exactly the percentile interval.
    """
    alpha = (1.0 - level) / 2.0
    z_lo, z_hi = ndtri(alpha), ndtri(1.0 - alpha)
    a_lo = ndtr(z0 + (z0 + z_lo) / (1.0 - accel * (z0 + z_lo)))
    a_hi = ndtr(z0 + (z0 + z_hi) / (1.0 - accel * (z0 + z_hi)))
    return (float(np.quantile(boots, a_lo, method="linear")),
            float(np.quantile(boots, a_hi, method="linear")))


def bca_interval(boots: np.ndarray, theta_hat: float, jackknife: np.ndarray,
                 level: float = 0.90) -> BcaInterval:
    """Assemble one BCa interval from replicates and jackknife values."""
    boots = np.asarray(boots, dtype=np.float64)
    b = boots.size
    if np.all(boots == boots[0]):
        return BcaInterval(lo=theta_hat, hi=theta_hat, z0=0.0, accel=0.0, degenerate=True)
    frac = np.count_nonzero(boots < theta_hat) / b
    frac = min(max(frac, 1.0 / (b + 1.0)), b / (b + 1.0))
    z0 = float(ndtri(frac))
    jbar = jackknife.mean()
    num = ((jbar - jackknife) ** 3).sum()
    den = ((jbar - jackknife) ** 2).sum() ** 1.5
    accel = float(num / (6.0 * den)) if den > 0 else 0.0
    lo, hi = bca_endpoints(boots, z0, accel, level)
    return BcaInterval(lo=lo, hi=hi, z0=z0, accel=accel)


@dataclass
class HorizonBands:
    h: int
    n: int
    coef: np.ndarray
    intervals: list[BcaInterval]  # per coefficient


def _jackknife_coefs(fit: HorizonFit) -> np.ndarray:
    """Leave-one-event-out OLS coefficients, (n, p)."""
    n, p = fit.X.shape
    out = np.empty((n, p))
    for i in range(n):
        keep = np.ones(n, dtype=bool)
        keep[i] = False
        X, y = fit.X[keep], fit.y[keep]
        out[i] = np.linalg.pinv(X.T @ X) @ (X.T @ y)
    return out


def bca_bootstrap(fit: HorizonFit, replicates: int = 999, level: float = 0.90,
                  mode: str = "residual", seed: int = 0) -> HorizonBands:
    """BCa bands for one horizon's coefficients.

    Residual mode keeps the design fixed and resamples residuals onto the
    fitted values; data mode resamples whole event rows. Replicate b uses
    the RNG stream (seed, horizon, b), so results are independent of any
    surrounding parallelism.
    """
    if replicates < 999:
        raise ConfigError("use at least 999 bootstrap replicates")
    if mode not in ("residual", "data"):
        raise ConfigError(f"unknown bootstrap mode {mode!r}")
    n, p = fit.X.shape
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0, fit.h]))
    idx = rng.integers(0, n, size=(replicates, n))
    if mode == "residual":
        projector = (fit.xtx_inv @ fit.X.T).T       # (n, p)
        boots = fit.coef[None, :] + fit.residuals[idx] @ projector
    else:
        boots = np.empty((replicates, p))
        for b in range(replicates):
            rows = idx[b]
            X, y = fit.X[rows], fit.y[rows]
            boots[b] = np.linalg.pinv(X.T @ X) @ (X.T @ y)
    jack = _jackknife_coefs(fit)
    intervals = [
        bca_interval(boots[:, j], float(fit.coef[j]), jack[:, j], level)
        for j in range(p)
    ]
    return HorizonBands(h=fit.h, n=n, coef=fit.coef, intervals=intervals)


def event_study(panel: EventPanel, replicates: int = 999, level: float = 0.90,
                mode: str = "residual", seed: int = 0) -> tuple[list[dict], dict[int, str]]:
    """Full per-horizon pipeline; rows are ready for the plot-data CSV."""
    projection = local_projection(panel)
    rows = []
    for h in sorted(projection.fits):
        fit = projection.fits[h]
        bands = bca_bootstrap(fit, replicates=replicates, level=level, mode=mode, seed=seed)
        rows.append({
            "h": h,
            "b1": float(fit.coef[1]),
            "b1_lo": bands.intervals[1].lo, "b1_hi": bands.intervals[1].hi,
            "b2": float(fit.coef[2]),
            "b2_lo": bands.intervals[2].lo, "b2_hi": bands.intervals[2].hi,
            "n": fit.n,
        })
    return rows, projection.skipped
