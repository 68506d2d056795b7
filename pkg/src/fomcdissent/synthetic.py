"""Deterministic synthetic data builders.

These generate the fixtures used by the test-suite and the demo configs:
a committee-vote history at the full historical scale (370 meetings,
3,950 labeled member-votes, NO share pinned to 6.93%), small embedding
corpora, a separable two-cluster classification dataset, and a tiny
regression fixture for the minutes model. All builders are pure
functions of their seed.
"""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from .corpus import (
    EMB_DIM,
    EMB_ROWS,
    EmbeddedTranscript,
    MeetingRecord,
    MemberProfile,
    Observation,
)

# vote-fixture layout: 250 eleven-member meetings + 120 ten-member meetings
# = 3,950 non-chair voters across 370 meetings; 194 + 80 = 274 NO votes puts
# the individual NO share at 274/3950 = 6.9367% and the mean per-meeting NO
# fraction at 6.9288%.
N_MEETINGS = 370
N_ELEVEN = 250
N_TEN = 120
NO_IN_ELEVEN = 194
NO_IN_TEN = 80

FIRST_MEETING = date(1976, 3, 29)
LAST_MEETING = date(2018, 12, 19)


def _meeting_dates() -> list[date]:
    span = (LAST_MEETING - FIRST_MEETING).days
    return [FIRST_MEETING + timedelta(days=round(i * span / (N_MEETINGS - 1)))
            for i in range(N_MEETINGS)]


def vote_fixture(seed: int = 0) -> tuple[list[MeetingRecord], dict[str, MemberProfile]]:
    """Synthetic committee history sized to the historical corpus."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF0]))
    dates = _meeting_dates()

    sizes = np.array([11] * N_ELEVEN + [10] * N_TEN)
    rng.shuffle(sizes)
    no_flags = np.zeros(N_MEETINGS, dtype=int)
    eleven_idx = np.flatnonzero(sizes == 11)
    ten_idx = np.flatnonzero(sizes == 10)
    no_flags[rng.choice(eleven_idx, size=NO_IN_ELEVEN, replace=False)] = 1
    no_flags[rng.choice(ten_idx, size=NO_IN_TEN, replace=False)] = 1

    n_pool = 110
    pool = [f"M{i:03d}" for i in range(n_pool)]
    chairs = ["C01", "C02", "C03", "C04"]
    chair_break = [0, 105, 205, 300, N_MEETINGS]

    first_seen: dict[str, date] = {}
    meetings: list[MeetingRecord] = []
    for i, d in enumerate(dates):
        chair = next(chairs[j] for j in range(4) if chair_break[j] <= i < chair_break[j + 1])
        # rotating membership window keeps members serving for years at a time
        lo = int(round(i / (N_MEETINGS - 1) * (n_pool - 20)))
        window = pool[lo:lo + 20]
        members = [window[k] for k in sorted(rng.choice(20, size=sizes[i], replace=False))]
        votes = [(chair, 0)]
        no_seat = int(rng.integers(0, sizes[i])) if no_flags[i] else -1
        for k, m in enumerate(members):
            votes.append((m, 1 if k == no_seat else 0))
        for m, _ in votes:
            first_seen.setdefault(m, d)
        meetings.append(MeetingRecord(
            meeting_id=d.isoformat(), date=d, chair_id=chair,
            attendees=votes,
            policy_action=("unchanged", "increase", "decrease")[int(rng.integers(0, 3))],
            incumbent_dem=bool((d.year // 4) % 2),
        ).validate())

    profiles: dict[str, MemberProfile] = {}
    for member_id, debut in sorted(first_seen.items()):
        prng = np.random.default_rng(np.random.SeedSequence([seed, 0xF1, hash_id(member_id)]))
        term_start = debut - timedelta(days=int(prng.integers(60, 3000)))
        birth = term_start - timedelta(days=int(prng.integers(32 * 365, 55 * 365)))
        profiles[member_id] = MemberProfile(
            member_id=member_id,
            birth_date=birth,
            gender="F" if prng.random() < 0.15 else "M",
            hometown_region=("NE", "MW", "South", "West", "OTH")[int(prng.integers(0, 5))],
            school_region=("NE", "MW", "South", "West")[int(prng.integers(0, 4))],
            school_wealth=float(np.round(prng.lognormal(11.0, 0.8), 2)),
            econ_major=bool(prng.random() < 0.71),
            term_start=term_start,
            role="chair" if member_id.startswith("C") else
                 ("governor" if prng.random() < 0.5 else "president"),
            appt_party="Dem" if prng.random() < 0.45 else "Rep",
            great_depression=bool(birth.year <= 1918),
            great_inflation=bool(birth.year >= 1950),
            wwii=bool(birth.year <= 1930),
        ).validate()
    return meetings, profiles


def hash_id(s: str) -> int:
    h = 0
    for ch in s:
        h = (h * 131 + ord(ch)) % (2**31 - 1)
    return h


def score_fixture(meetings: list[MeetingRecord], seed: int = 0) -> list[dict]:
    """Dissent scores matching the pinned summary-statistic targets.

    Draws per-member scores from a Beta distribution whose mean/spread
    hit the individual-level target moments (mean 0.3235, sd 0.2282),
    keyed to the vote fixture.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF2]))
    mu, sd = 0.3235, 0.2282
    conc = mu * (1 - mu) / sd**2 - 1.0
    a, b = mu * conc, (1 - mu) * conc
    rows = []
    for meeting in meetings:
        for member_id, vote in meeting.non_chair_votes():
            hd = float(np.clip(rng.beta(a, b), 1e-9, 1 - 1e-9))
            rows.append({
                "meeting_id": meeting.meeting_id,
                "date": meeting.date.isoformat(),
                "member_id": member_id,
                "hd": hd,
                "v": vote,
            })
    return rows


# --------------------------------------------------------------------------
# embedding corpora
# --------------------------------------------------------------------------

def _pad_document(rows: np.ndarray) -> np.ndarray:
    doc = np.zeros((EMB_ROWS, EMB_DIM), dtype=np.float32)
    doc[:rows.shape[0]] = rows.astype(np.float32)
    return doc


def make_transcript(meeting_id: str, member_id: str, rows: np.ndarray) -> EmbeddedTranscript:
    return EmbeddedTranscript(
        meeting_id=meeting_id, member_id=member_id,
        embedding=_pad_document(rows), n_sentences=rows.shape[0],
    ).validate()


def random_embeddings(n: int, seed: int = 0, n_sentences: int = 3,
                      meeting_id: str = "2001-01-31") -> list[EmbeddedTranscript]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF3]))
    return [
        make_transcript(meeting_id, f"M{i:03d}",
                        rng.normal(0, 1, (n_sentences, EMB_DIM)))
        for i in range(n)
    ]


def two_cluster_dataset(n: int = 120, seed: int = 0, separation: float = 3.0,
                        n_sentences: int = 4, no_share: float = 0.5,
                        n_meetings: int | None = None) -> list[Observation]:
    """Classifier dataset with a linear signal of strength ``separation``.

    Member documents sit either near the chair's topic direction (YES) or
    shifted by ``separation`` along an orthogonal direction (NO). Setting
    ``separation=0`` produces the no-signal control with identical class
    distributions.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF4]))
    base = rng.normal(0, 1, EMB_DIM)
    base /= np.linalg.norm(base)
    shift = rng.normal(0, 1, EMB_DIM)
    shift -= (shift @ base) * base
    shift /= np.linalg.norm(shift)

    if n_meetings is None:
        n_meetings = max(1, n // 12)
    chairs = [
        make_transcript(f"meet{m:03d}", "CHAIR",
                        base + rng.normal(0, 0.3, (n_sentences, EMB_DIM)))
        for m in range(n_meetings)
    ]
    obs = []
    for i in range(n):
        vote = 1 if rng.random() < no_share else 0
        center = base + (separation * shift if vote == 1 else 0.0)
        rows = center + rng.normal(0, 0.5, (n_sentences, EMB_DIM))
        meeting = i % n_meetings
        member = make_transcript(f"meet{meeting:03d}", f"MEM{i:04d}", rows)
        obs.append(Observation(
            meeting_id=member.meeting_id, member_id=member.member_id,
            vote=vote, member=member, chair=chairs[meeting]))
    return obs


def minutes_fixture(seed: int = 0, n_docs: int = 8, n_sentences: int = 4) -> list["MinutesExample"]:
    """Tiny regression fixture: targets 0.1, 0.2, ..., up the unit interval."""
    from .train import MinutesExample

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF5]))
    out = []
    for i in range(n_docs):
        target = (i + 1) / (n_docs + 2)
        rows = rng.normal(0, 1, (n_sentences, EMB_DIM))
        out.append(MinutesExample(
            doc=make_transcript(f"minutes{i:02d}", "MINUTES", rows),
            target=float(target)))
    return out
