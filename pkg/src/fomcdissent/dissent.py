"""Turn trained classifier outputs into dissent scores and aggregates.

The member-level score is the eval-mode classifier probability; meeting
aggregates are the plain mean of member scores (chair excluded, since the
chair is the reference and votes YES by construction) and the fraction of
NO votes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import AggregationError

# predicted probabilities are clamped into the open interval so downstream
# (0,1)-domain estimators never see an exact boundary after f64 saturation
SCORE_EPS = 1e-12


@dataclass
class DissentObservation:
    meeting_id: str
    member_id: str
    hd: float  # strictly inside (0, 1)
    v: int     # 0=YES, 1=NO


@dataclass
class MeetingDissent:
    meeting_id: str
    HD: float
    V: float
    n_members: int


def score_member(chair, member, params, hyper) -> float:
    """Eval-mode dissent probability for one member against the chair."""
    p = float(nn.forward_classifier(chair, member, params, hyper, train=False).values)
    return float(np.clip(p, SCORE_EPS, 1.0 - SCORE_EPS))


def score_panel(observations, params, hyper) -> list[DissentObservation]:
    """Score a joined panel; order follows the input panel."""
    from .train import classifier_scores  # late import avoids a cycle

    logits = classifier_scores(params, hyper, observations)
    probs = np.clip(1.0 / (1.0 + np.exp(-logits)), SCORE_EPS, 1.0 - SCORE_EPS)
    return [
        DissentObservation(meeting_id=obs.meeting_id, member_id=obs.member_id,
                           hd=float(p), v=obs.vote)
        for obs, p in zip(observations, probs)
    ]


def aggregate_meeting(observations: list[DissentObservation]) -> MeetingDissent:
    """Mean dissent score and NO-vote share over one meeting's members."""
    if not observations:
        raise AggregationError("cannot aggregate an empty meeting")
    meeting_ids = {o.meeting_id for o in observations}
    if len(meeting_ids) != 1:
        raise AggregationError(f"mixed meetings in one aggregate: {sorted(meeting_ids)}")
    hd = np.array([o.hd for o in observations], dtype=np.float64)
    v = np.array([o.v for o in observations], dtype=np.float64)
    return MeetingDissent(
        meeting_id=observations[0].meeting_id,
        HD=float(hd.mean()),
        V=float(v.mean()),
        n_members=len(observations),
    )


def aggregate_panel(observations: list[DissentObservation]) -> list[MeetingDissent]:
    by_meeting: dict[str, list[DissentObservation]] = {}
    for obs in observations:
        by_meeting.setdefault(obs.meeting_id, []).append(obs)
    return [aggregate_meeting(by_meeting[mid]) for mid in sorted(by_meeting)]


def _column_stats(values: np.ndarray) -> dict:
    out = {
        "mean": float(values.mean()),
        "sd": float(values.std(ddof=1)) if values.size > 1 else 0.0,
        "min": float(values.min()),
        "max": float(values.max()),
        "count": int(values.size),
    }
    if values.size <= 1:
        out["degenerate"] = True
    return out


def summary_stats(individual: list[DissentObservation],
                  meetings: list[MeetingDissent]) -> dict[str, dict]:
    """Mean/sd/min/max/count per measure at both levels (sample sd, n-1).

    A single-observation measure reports sd 0 with a ``degenerate`` flag.
    """
    if not individual or not meetings:
        raise AggregationError("summary statistics need a non-empty panel")
    return {
        "hd_individual": _column_stats(np.array([o.hd for o in individual])),
        "v_individual": _column_stats(np.array([float(o.v) for o in individual])),
        "HD_meeting": _column_stats(np.array([m.HD for m in meetings])),
        "V_meeting": _column_stats(np.array([m.V for m in meetings])),
    }
