"""Regressor construction: diversity entropy, forecast trend/spread,
committee-composition statistics, projection disagreement, and principal
components.

Conventions pinned here because the choices matter downstream: entropy is
normalized by using the category count as the log base; experience and age
are day counts divided by 365.25; all spreads are sample standard
deviations (n-1); the PCA runs on the correlation matrix with a
deterministic sign (largest-magnitude loading positive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from .corpus import (
    REGIONS_HOMETOWN,
    REGIONS_SCHOOL,
    SEP_HORIZONS,
    SEP_INFLATION_VARS,
    MeetingRecord,
    MemberProfile,
    SepSnapshot,
    TealbookSeries,
)
from .errors import (
    DataValueError,
    InsufficientDataError,
    UndefinedEntropyError,
    ValidationError,
)

DAYS_PER_YEAR = 365.25

# measure layout of the two projection-disagreement groups: the policy
# group tracks the funds-rate path over four horizons; the economic group
# covers the other variables (no long-run horizon for the inflations)
POLICY_MEASURES = [("ffr", h) for h in SEP_HORIZONS]
ECONOMY_MEASURES = (
    [("unemployment", h) for h in SEP_HORIZONS]
    + [("gdp_growth", h) for h in SEP_HORIZONS]
    + [("pce_inflation", h) for h in SEP_HORIZONS if h != "long_run"]
    + [("core_pce_inflation", h) for h in SEP_HORIZONS if h != "long_run"]
)


def entropy(counts, base: int) -> float:
    """Shannon entropy of a count vector, normalized via the log base.

    With ``base`` equal to the number of possible categories the value
    lands in [0, 1]: 0 for a degenerate distribution, 1 for uniform.
    The 0*log(0) terms are dropped.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise DataValueError("negative category count")
    total = counts.sum()
    if total <= 0:
        raise UndefinedEntropyError("entropy of an empty count vector")
    p = counts[counts > 0] / total
    return float(-(p * (np.log(p) / np.log(base))).sum())


def trend_and_sd(points) -> tuple[float, float]:
    """Least-squares slope over abscissae 0..4 and the sample sd."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (5,):
        raise DataValueError(f"expected exactly 5 points, got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DataValueError("non-finite forecast points")
    x = np.arange(5.0)
    slope = float(((x - x.mean()) * (points - points.mean())).sum()
                  / ((x - x.mean()) ** 2).sum())
    return slope, float(points.std(ddof=1))


def years_between(start: date, end: date) -> float:
    return (end - start).days / DAYS_PER_YEAR


def _sample_sd(values: list[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


@dataclass
class MeetingCovariates:
    meeting_id: str
    T_unemp: float | None = None
    D_unemp: float | None = None
    T_cpi: float | None = None
    D_cpi: float | None = None
    D_experience: float = 0.0
    D_age: float = 0.0
    D_schoolwealth: float = 0.0
    P_gender: float = 0.0
    P_major: float = 0.0
    P_depression: float = 0.0
    P_inflation: float = 0.0
    P_wwii: float = 0.0
    P_apptdem: float = 0.0
    E_hometown: float = 0.0
    E_school: float = 0.0
    E_potus: float = 0.0
    incumbent_dem: int = 0
    flags: list = None

    def validate(self) -> "MeetingCovariates":
        for name in ("E_hometown", "E_school", "E_potus"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-12:
                raise DataValueError(f"{name}={v} outside [0, 1]")
        for name in ("P_gender", "P_major", "P_depression", "P_inflation",
                     "P_wwii", "P_apptdem"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataValueError(f"{name}={v} outside [0, 1]")
        return self


def member_composition(meeting: MeetingRecord,
                       profiles: dict[str, MemberProfile]) -> MeetingCovariates:
    """Composition block of the meeting covariates.

    Statistics run over every attendee (the committee as seated, chair
    included); adds a flag and skips members lacking a profile.
    """
    cov = MeetingCovariates(meeting_id=meeting.meeting_id, flags=[])
    present: list[MemberProfile] = []
    for member_id, _ in meeting.attendees:
        prof = profiles.get(member_id)
        if prof is None:
            cov.flags.append(f"missing_profile:{member_id}")
            continue
        present.append(prof)
    if not present:
        raise ValidationError(f"meeting {meeting.meeting_id}: no profiled attendees")
    when = meeting.date
    n = len(present)
    cov.D_experience = _sample_sd([years_between(p.term_start, when) for p in present])
    cov.D_age = _sample_sd([years_between(p.birth_date, when) for p in present])
    cov.D_schoolwealth = _sample_sd([p.school_wealth for p in present])
    cov.P_gender = sum(p.gender == "F" for p in present) / n
    cov.P_major = sum(p.econ_major for p in present) / n
    cov.P_depression = sum(p.great_depression for p in present) / n
    cov.P_inflation = sum(p.great_inflation for p in present) / n
    cov.P_wwii = sum(p.wwii for p in present) / n
    cov.P_apptdem = sum(p.appt_party == "Dem" for p in present) / n
    cov.E_hometown = entropy(
        [sum(p.hometown_region == r for p in present) for r in REGIONS_HOMETOWN],
        base=len(REGIONS_HOMETOWN))
    cov.E_school = entropy(
        [sum(p.school_region == r for p in present) for r in REGIONS_SCHOOL],
        base=len(REGIONS_SCHOOL))
    cov.E_potus = entropy(
        [sum(p.appt_party == "Dem" for p in present),
         sum(p.appt_party == "Rep" for p in present)],
        base=2)
    cov.incumbent_dem = int(meeting.incumbent_dem)
    return cov.validate()


def macro_block(cov: MeetingCovariates, series: list[TealbookSeries]) -> MeetingCovariates:
    """Attach forecast trend/spread pairs for the meeting's staff series."""
    for s in series:
        if s.meeting_id != cov.meeting_id:
            continue
        slope, sd = trend_and_sd(s.points)
        if s.variable == "unemployment":
            cov.T_unemp, cov.D_unemp = slope, sd
        elif s.variable == "core_cpi":
            cov.T_cpi, cov.D_cpi = slope, sd
    return cov


def build_covariates(meetings: list[MeetingRecord], profiles: dict[str, MemberProfile],
                     tealbook: list[TealbookSeries]) -> list[MeetingCovariates]:
    by_meeting: dict[str, list[TealbookSeries]] = {}
    for s in tealbook:
        by_meeting.setdefault(s.meeting_id, []).append(s)
    out = []
    for meeting in meetings:
        cov = member_composition(meeting, profiles)
        macro_block(cov, by_meeting.get(meeting.meeting_id, []))
        out.append(cov)
    return out


# --------------------------------------------------------------------------
# projection disagreement
# --------------------------------------------------------------------------

def sep_disagreement(snapshot: SepSnapshot, center: str = "median") -> float:
    """Absolute sum of deviations from the median (or mean) projection."""
    x = np.asarray(snapshot.projections, dtype=np.float64)
    if x.size < 2:
        raise InsufficientDataError(
            f"sep {snapshot.meeting_id}/{snapshot.variable}: needs >= 2 projections")
    if center == "median":
        c = float(np.median(x))
    elif center == "mean":
        c = float(x.mean())
    else:
        raise DataValueError(f"unknown center {center!r}")
    return float(np.abs(x - c).sum())


def disagreement_matrix(snapshots: list[SepSnapshot], measures: list[tuple[str, str]],
                        center: str = "median") -> tuple[list[str], np.ndarray, list[str]]:
    """Meetings-by-measures matrix; keeps only meetings with every measure.

    Returns (meeting ids, matrix, notes about dropped meetings).
    """
    by_key: dict[tuple[str, str, str], SepSnapshot] = {}
    for s in snapshots:
        by_key[(s.meeting_id, s.variable, s.horizon)] = s
    meeting_ids = sorted({s.meeting_id for s in snapshots})
    rows, kept, notes = [], [], []
    for mid in meeting_ids:
        vals = []
        for var, hor in measures:
            snap = by_key.get((mid, var, hor))
            if snap is None:
                notes.append(f"{mid}: missing {var}/{hor}; meeting dropped")
                break
            vals.append(sep_disagreement(snap, center=center))
        else:
            rows.append(vals)
            kept.append(mid)
    return kept, np.array(rows, dtype=np.float64), notes


# --------------------------------------------------------------------------
# principal components
# --------------------------------------------------------------------------

@dataclass
class PcaResult:
    components: np.ndarray               # (k, p) orthonormal loading rows
    scores: np.ndarray                   # (n, k)
    explained_variance_ratio: np.ndarray
    kept_columns: list[int]
    dropped_columns: list[int]
    column_means: np.ndarray
    column_sds: np.ndarray


def pca(matrix: np.ndarray, k: int) -> PcaResult:
    """Top-k eigenpairs of the correlation matrix of ``matrix``.

    Columns are standardized first (zero-variance columns are dropped with
    a record of their indices); loading signs are fixed by making the
    largest-magnitude entry of each component positive.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientDataError("pca needs at least two rows")
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    kept = [j for j in range(x.shape[1]) if sds[j] > 0]
    dropped = [j for j in range(x.shape[1]) if sds[j] == 0]
    if not kept:
        raise InsufficientDataError("every column is constant")
    z = (x[:, kept] - means[kept]) / sds[kept]
    corr = z.T @ z / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(corr)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    k = min(k, len(kept))
    comps = eigvecs[:, :k].T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    scores = z @ comps.T
    ratios = eigvals[:k] / len(kept)
    return PcaResult(
        components=comps, scores=scores, explained_variance_ratio=ratios,
        kept_columns=kept, dropped_columns=dropped,
        column_means=means[kept], column_sds=sds[kept],
    )
