"""Ingestion and validation of the local data files.

Everything enters through files: the binary sentence-embedding format
(FEMB), and CSVs for meetings/votes, member profiles, staff-forecast
series, projection snapshots, price series, and policy-gap series. All
loaders validate invariants up front and raise typed errors; after
loading, the returned objects are treated as immutable.

CSV schemas (one golden sample of each ships under ``data/samples/``):

* ``meetings.csv``: meeting_id, date, chair_id, policy_action, incumbent_dem
* ``votes.csv``: meeting_id, member_id, vote          (vote: 0=YES, 1=NO)
* ``profiles.csv``: member_id, birth_date, gender, hometown_region,
  school_region, school_wealth, econ_major, term_start, role, appt_party,
  great_depression, great_inflation, wwii
* ``tealbook.csv``: meeting_id, variable, b2, b1, f0, f1, f2
* ``sep.csv``: meeting_id, variable, horizon, value   (one row per response)
* ``prices.csv``: symbol, date, open, close
* ``opp.csv``: date, opp_ffr, opp_shadow, opp_slope, zero_bound
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from datetime import date

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    CorruptionError,
    DataValueError,
    FormatError,
    ValidationError,
)

EMB_ROWS = 256
EMB_DIM = 768
EMB_MAGIC = b"FEMB0001"

VOTE_YES = 0
VOTE_NO = 1

REGIONS_HOMETOWN = ("NE", "MW", "South", "West", "OTH")
REGIONS_SCHOOL = ("NE", "MW", "South", "West")
POLICY_ACTIONS = ("unchanged", "increase", "decrease")
ROLES = ("governor", "president", "chair")
PARTIES = ("Dem", "Rep")

TEALBOOK_VARS = ("unemployment", "core_cpi")
CORE_CPI_START = date(1986, 2, 12)

SEP_VARS = ("ffr", "unemployment", "gdp_growth", "pce_inflation", "core_pce_inflation")
SEP_HORIZONS = ("Y0", "Y1", "Y2", "long_run")
SEP_INFLATION_VARS = ("pce_inflation", "core_pce_inflation")
SEP_FFR_START_YEAR = 2012
SEP_OTHER_START_YEAR = 2007


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass
class MemberProfile:
    member_id: str
    birth_date: date
    gender: str
    hometown_region: str
    school_region: str
    school_wealth: float
    econ_major: bool
    term_start: date
    role: str
    appt_party: str
    great_depression: bool
    great_inflation: bool
    wwii: bool

    def validate(self) -> "MemberProfile":
        if self.birth_date >= self.term_start:
            raise ValidationError(
                f"profile {self.member_id}: birth_date {self.birth_date} "
                f"not before term_start {self.term_start}")
        if self.gender not in ("F", "M"):
            raise ValidationError(f"profile {self.member_id}: bad gender {self.gender!r}")
        if self.hometown_region not in REGIONS_HOMETOWN:
            raise ValidationError(f"profile {self.member_id}: bad hometown {self.hometown_region!r}")
        if self.school_region not in REGIONS_SCHOOL:
            raise ValidationError(f"profile {self.member_id}: bad school region {self.school_region!r}")
        if self.role not in ROLES:
            raise ValidationError(f"profile {self.member_id}: bad role {self.role!r}")
        if self.appt_party not in PARTIES:
            raise ValidationError(f"profile {self.member_id}: bad party {self.appt_party!r}")
        return self


@dataclass
class MeetingRecord:
    meeting_id: str
    date: date
    chair_id: str
    attendees: list[tuple[str, int]]
    policy_action: str
    incumbent_dem: bool

    def validate(self) -> "MeetingRecord":
        ids = [m for m, _ in self.attendees]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"meeting {self.meeting_id}: duplicate attendees")
        votes = dict(self.attendees)
        if self.chair_id not in votes:
            raise ValidationError(f"meeting {self.meeting_id}: chair {self.chair_id} not among attendees")
        if votes[self.chair_id] != VOTE_YES:
            raise ValidationError(f"meeting {self.meeting_id}: chair vote must be YES")
        for m, v in self.attendees:
            if v not in (VOTE_YES, VOTE_NO):
                raise ValidationError(f"meeting {self.meeting_id}: bad vote {v!r} for {m}")
        if self.policy_action not in POLICY_ACTIONS:
            raise ValidationError(f"meeting {self.meeting_id}: bad policy action {self.policy_action!r}")
        return self

    def non_chair_votes(self) -> list[tuple[str, int]]:
        return [(m, v) for m, v in self.attendees if m != self.chair_id]


@dataclass
class EmbeddedTranscript:
    """One speaker-meeting document as a padded sentence-embedding matrix."""

    meeting_id: str
    member_id: str
    embedding: np.ndarray  # (256, 768) float32, rows >= n_sentences all zero
    n_sentences: int

    def validate(self) -> "EmbeddedTranscript":
        if self.embedding.shape != (EMB_ROWS, EMB_DIM):
            raise CorruptionError(
                f"embedding {self.meeting_id}/{self.member_id}: "
                f"shape {self.embedding.shape} != {(EMB_ROWS, EMB_DIM)}")
        if not (0 <= self.n_sentences <= EMB_ROWS):
            raise CorruptionError(
                f"embedding {self.meeting_id}/{self.member_id}: "
                f"n_sentences {self.n_sentences} outside 0..{EMB_ROWS}")
        if not np.all(np.isfinite(self.embedding)):
            raise DataValueError(
                f"embedding {self.meeting_id}/{self.member_id}: non-finite values")
        if self.n_sentences < EMB_ROWS and np.any(self.embedding[self.n_sentences:]):
            raise DataValueError(
                f"embedding {self.meeting_id}/{self.member_id}: nonzero padding rows")
        return self


@dataclass
class TealbookSeries:
    meeting_id: str
    variable: str
    points: np.ndarray  # [B2, B1, F0, F1, F2]

    def validate(self) -> "TealbookSeries":
        if self.variable not in TEALBOOK_VARS:
            raise ValidationError(f"tealbook {self.meeting_id}: bad variable {self.variable!r}")
        if self.points.shape != (5,):
            raise ValidationError(f"tealbook {self.meeting_id}/{self.variable}: needs exactly 5 points")
        if not np.all(np.isfinite(self.points)):
            raise DataValueError(f"tealbook {self.meeting_id}/{self.variable}: non-finite points")
        if self.variable == "core_cpi":
            d = parse_meeting_date(self.meeting_id)
            if d is not None and d < CORE_CPI_START:
                raise ValidationError(
                    f"tealbook {self.meeting_id}: core_cpi before {CORE_CPI_START}")
        return self


@dataclass
class SepSnapshot:
    meeting_id: str
    variable: str
    horizon: str
    projections: np.ndarray

    def validate(self) -> "SepSnapshot":
        if self.variable not in SEP_VARS:
            raise ValidationError(f"sep {self.meeting_id}: bad variable {self.variable!r}")
        if self.horizon not in SEP_HORIZONS:
            raise ValidationError(f"sep {self.meeting_id}: bad horizon {self.horizon!r}")
        if self.variable in SEP_INFLATION_VARS and self.horizon == "long_run":
            raise ValidationError(
                f"sep {self.meeting_id}: no long-run horizon for {self.variable}")
        if not np.all(np.isfinite(self.projections)):
            raise DataValueError(f"sep {self.meeting_id}/{self.variable}: non-finite projections")
        d = parse_meeting_date(self.meeting_id)
        if d is not None:
            start = SEP_FFR_START_YEAR if self.variable == "ffr" else SEP_OTHER_START_YEAR
            if d.year < start:
                raise ValidationError(
                    f"sep {self.meeting_id}: {self.variable} snapshots begin in {start}")
        return self


@dataclass
class PriceSeries:
    symbol: str
    dates: list[date]
    open: np.ndarray
    close: np.ndarray

    def validate(self) -> "PriceSeries":
        if len(self.dates) != len(self.open) or len(self.dates) != len(self.close):
            raise ValidationError(f"prices {self.symbol}: ragged columns")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise ValidationError(f"prices {self.symbol}: dates not strictly increasing at {b}")
        if np.any(self.open <= 0) or np.any(self.close <= 0):
            raise DataValueError(f"prices {self.symbol}: non-positive prices")
        return self


@dataclass
class OppSeries:
    dates: list[date]
    opp_ffr: np.ndarray
    opp_shadow: np.ndarray
    opp_slope: np.ndarray
    zero_bound: np.ndarray  # bool


# --------------------------------------------------------------------------
# binary embedding file
# --------------------------------------------------------------------------

def write_embeddings(path, records: list[EmbeddedTranscript]) -> None:
    """Serialize transcripts in the FEMB layout (little-endian, f32)."""
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<I", len(records)))
        for rec in records:
            rec.validate()
            mid = rec.meeting_id.encode("utf-8")
            pid = rec.member_id.encode("utf-8")
            fh.write(struct.pack("<I", len(mid)))
            fh.write(mid)
            fh.write(struct.pack("<I", len(pid)))
            fh.write(pid)
            fh.write(struct.pack("<H", rec.n_sentences))
            fh.write(np.ascontiguousarray(rec.embedding, dtype="<f4").tobytes())


def load_embeddings(path) -> list[EmbeddedTranscript]:
    """Read and validate a FEMB file.

    Raises FormatError on a bad magic header, CorruptionError when the
    declared record count does not match the payload, and DataValueError
    on non-finite values or nonzero padding rows.
    """
    payload_len = EMB_ROWS * EMB_DIM * 4
    records: list[EmbeddedTranscript] = []
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != EMB_MAGIC:
            raise FormatError(f"bad embedding magic: {magic!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise CorruptionError("truncated record count")
        (count,) = struct.unpack("<I", raw)
        for i in range(count):
            head = fh.read(4)
            if len(head) != 4:
                raise CorruptionError(
                    f"declared {count} records but file ends after {i}")
            (mlen,) = struct.unpack("<I", head)
            mid = fh.read(mlen)
            raw = fh.read(4)
            if len(mid) != mlen or len(raw) != 4:
                raise CorruptionError(f"truncated record {i}")
            (plen,) = struct.unpack("<I", raw)
            pid = fh.read(plen)
            raw = fh.read(2)
            if len(pid) != plen or len(raw) != 2:
                raise CorruptionError(f"truncated record {i}")
            (n_sent,) = struct.unpack("<H", raw)
            buf = fh.read(payload_len)
            if len(buf) != payload_len:
                raise CorruptionError(f"truncated embedding payload in record {i}")
            emb = np.frombuffer(buf, dtype="<f4").reshape(EMB_ROWS, EMB_DIM)
            rec = EmbeddedTranscript(
                meeting_id=mid.decode("utf-8"),
                member_id=pid.decode("utf-8"),
                embedding=emb,
                n_sentences=n_sent,
            ).validate()
            records.append(rec)
        if fh.read(1):
            raise CorruptionError(f"trailing bytes after {count} declared records")
    return records


# --------------------------------------------------------------------------
# sentence filter
# --------------------------------------------------------------------------

def load_lexicon(path) -> set[str]:
    terms = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            term = line.strip()
            if term:
                terms.add(term)
    return terms


def filter_econ_sentences(sentences: list[str], lexicon: set[str]) -> list[str]:
    """Keep sentences containing at least one lexicon term.

    Matching is case-insensitive on word boundaries; multi-word terms
    match as phrases. Input order is preserved.
    """
    if not lexicon:
        raise ConfigError("empty lexicon")
    pattern = re.compile(
        r"\b(?:" + "|".join(re.escape(t) for t in sorted(lexicon)) + r")\b",
        re.IGNORECASE,
    )
    return [s for s in sentences if pattern.search(s)]


# --------------------------------------------------------------------------
# CSV loaders
# --------------------------------------------------------------------------

def parse_meeting_date(meeting_id: str) -> date | None:
    """Meeting ids are date-keyed; returns None for non-date ids."""
    try:
        return date.fromisoformat(meeting_id[:10])
    except ValueError:
        return None


def _parse_date(raw, context: str) -> date:
    try:
        return date.fromisoformat(str(raw))
    except ValueError as exc:
        raise ValidationError(f"{context}: bad date {raw!r}") from exc


def _parse_bool(raw, context: str) -> bool:
    s = str(raw).strip()
    if s in ("0", "1"):
        return s == "1"
    raise ValidationError(f"{context}: bad boolean {raw!r} (use 0/1)")


def load_profiles(path) -> dict[str, MemberProfile]:
    df = pd.read_csv(path, dtype=str)
    out: dict[str, MemberProfile] = {}
    for _, row in df.iterrows():
        ctx = f"profiles row {row['member_id']}"
        prof = MemberProfile(
            member_id=row["member_id"],
            birth_date=_parse_date(row["birth_date"], ctx),
            gender=row["gender"],
            hometown_region=row["hometown_region"],
            school_region=row["school_region"],
            school_wealth=float(row["school_wealth"]),
            econ_major=_parse_bool(row["econ_major"], ctx),
            term_start=_parse_date(row["term_start"], ctx),
            role=row["role"],
            appt_party=row["appt_party"],
            great_depression=_parse_bool(row["great_depression"], ctx),
            great_inflation=_parse_bool(row["great_inflation"], ctx),
            wwii=_parse_bool(row["wwii"], ctx),
        ).validate()
        if prof.member_id in out:
            raise ValidationError(f"duplicate profile for {prof.member_id}")
        out[prof.member_id] = prof
    return out


def load_meetings(meetings_path, votes_path) -> list[MeetingRecord]:
    mdf = pd.read_csv(meetings_path, dtype=str)
    vdf = pd.read_csv(votes_path, dtype=str)
    votes_by_meeting: dict[str, list[tuple[str, int]]] = {}
    for _, row in vdf.iterrows():
        votes_by_meeting.setdefault(row["meeting_id"], []).append(
            (row["member_id"], int(row["vote"])))
    meetings = []
    seen = set()
    for _, row in mdf.iterrows():
        mid = row["meeting_id"]
        if mid in seen:
            raise ValidationError(f"duplicate meeting {mid}")
        seen.add(mid)
        rec = MeetingRecord(
            meeting_id=mid,
            date=_parse_date(row["date"], f"meetings row {mid}"),
            chair_id=row["chair_id"],
            attendees=votes_by_meeting.get(mid, []),
            policy_action=row["policy_action"],
            incumbent_dem=_parse_bool(row["incumbent_dem"], f"meetings row {mid}"),
        ).validate()
        meetings.append(rec)
    return meetings


def load_tealbook(path) -> list[TealbookSeries]:
    df = pd.read_csv(path, dtype=str)
    out = []
    for _, row in df.iterrows():
        out.append(TealbookSeries(
            meeting_id=row["meeting_id"],
            variable=row["variable"],
            points=np.array([float(row[c]) for c in ("b2", "b1", "f0", "f1", "f2")]),
        ).validate())
    return out


def load_sep(path) -> list[SepSnapshot]:
    df = pd.read_csv(path, dtype=str)
    grouped: dict[tuple[str, str, str], list[float]] = {}
    order: list[tuple[str, str, str]] = []
    for _, row in df.iterrows():
        key = (row["meeting_id"], row["variable"], row["horizon"])
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(float(row["value"]))
    return [
        SepSnapshot(meeting_id=k[0], variable=k[1], horizon=k[2],
                    projections=np.array(grouped[k])).validate()
        for k in order
    ]


def load_prices(path) -> dict[str, PriceSeries]:
    df = pd.read_csv(path, dtype=str)
    by_symbol: dict[str, list[tuple[date, float, float]]] = {}
    for _, row in df.iterrows():
        by_symbol.setdefault(row["symbol"], []).append((
            _parse_date(row["date"], f"prices {row['symbol']}"),
            float(row["open"]), float(row["close"])))
    out = {}
    for sym, rows in by_symbol.items():
        out[sym] = PriceSeries(
            symbol=sym,
            dates=[r[0] for r in rows],
            open=np.array([r[1] for r in rows]),
            close=np.array([r[2] for r in rows]),
        ).validate()
    return out


def load_opp(path) -> OppSeries:
    df = pd.read_csv(path, dtype=str)
    dates, ffr, shadow, slope, zb = [], [], [], [], []
    for _, row in df.iterrows():
        dates.append(_parse_date(row["date"], "opp"))
        ffr.append(float(row["opp_ffr"]))
        shadow.append(float(row["opp_shadow"]))
        slope.append(float(row["opp_slope"]))
        zb.append(_parse_bool(row["zero_bound"], "opp"))
    series = OppSeries(dates=dates, opp_ffr=np.array(ffr), opp_shadow=np.array(shadow),
                       opp_slope=np.array(slope), zero_bound=np.array(zb, dtype=bool))
    if not all(np.isfinite(v).all() for v in (series.opp_ffr, series.opp_shadow, series.opp_slope)):
        raise DataValueError("opp: non-finite values")
    return series


def most_recent_meeting_on_or_before(meeting_dates: list[tuple[str, date]], when: date) -> str | None:
    """Date join used for observation-to-meeting matching."""
    best = None
    best_date = None
    for mid, d in meeting_dates:
        if d <= when and (best_date is None or d > best_date):
            best, best_date = mid, d
    return best


# --------------------------------------------------------------------------
# panel join
# --------------------------------------------------------------------------

@dataclass
class Observation:
    """One labeled training/scoring observation."""

    meeting_id: str
    member_id: str
    vote: int
    member: EmbeddedTranscript
    chair: EmbeddedTranscript

    @property
    def obs_id(self) -> tuple[str, str]:
        return (self.meeting_id, self.member_id)


@dataclass
class JoinResult:
    observations: list[Observation]
    warnings: list[str] = field(default_factory=list)
    rejects: list[dict] = field(default_factory=list)


def join_panel(meetings: list[MeetingRecord], profiles: dict[str, MemberProfile],
               embeddings: list[EmbeddedTranscript]) -> JoinResult:
    """Pair each embedded non-chair voter with its vote and chair reference.

    Meetings without a chair embedding are dropped with a warning; orphan
    embeddings and embedded voters without a profile land in the rejects
    report. Deterministic: output follows meeting order, then the
    attendance order within each meeting.
    """
    index: dict[tuple[str, str], EmbeddedTranscript] = {}
    for rec in embeddings:
        key = (rec.meeting_id, rec.member_id)
        if key in index:
            raise ValidationError(f"duplicate embedding for {key}")
        index[key] = rec
    used: set[tuple[str, str]] = set()
    result = JoinResult(observations=[])
    for meeting in meetings:
        chair_key = (meeting.meeting_id, meeting.chair_id)
        chair_emb = index.get(chair_key)
        if chair_emb is None:
            result.warnings.append(
                f"meeting {meeting.meeting_id}: no chair embedding; meeting dropped")
            continue
        used.add(chair_key)
        for member_id, vote in meeting.non_chair_votes():
            key = (meeting.meeting_id, member_id)
            emb = index.get(key)
            if emb is None:
                continue
            used.add(key)
            if member_id not in profiles:
                result.rejects.append({
                    "meeting_id": meeting.meeting_id, "member_id": member_id,
                    "reason": "missing_profile"})
                continue
            result.observations.append(Observation(
                meeting_id=meeting.meeting_id, member_id=member_id,
                vote=vote, member=emb, chair=chair_emb))
    for rec in embeddings:
        key = (rec.meeting_id, rec.member_id)
        if key not in used:
            result.rejects.append({
                "meeting_id": rec.meeting_id, "member_id": rec.member_id,
                "reason": "orphan_embedding"})
    return result
