import json
from datetime import date, timedelta

import numpy as np
import pytest

from fomcdissent import corpus, synthetic


def _monthly(start: date, i: int) -> date:
    month = start.month - 1 + i
    return date(start.year + month // 12, month % 12 + 1, min(start.day, 28))


def build_classifier_files(root, n=96, n_meetings=24, seed=0):
    """Separable training corpus plus the aligned meeting/vote/profile CSVs."""
    data = synthetic.two_cluster_dataset(n=n, seed=seed, separation=3.0,
                                         n_sentences=2, n_meetings=n_meetings)
    by_meeting = {}
    for obs in data:
        by_meeting.setdefault(obs.meeting_id, []).append(obs)
    meeting_ids = sorted(by_meeting)
    dates = {mid: _monthly(date(2001, 1, 31), i) for i, mid in enumerate(meeting_ids)}

    rng = np.random.default_rng(seed + 7)
    meetings_rows = ["meeting_id,date,chair_id,policy_action,incumbent_dem"]
    votes_rows = ["meeting_id,member_id,vote"]
    embeddings = []
    member_ids = {"CHAIR"}
    actions = ["unchanged", "increase", "decrease"]
    for i, mid in enumerate(meeting_ids):
        group = by_meeting[mid]
        meetings_rows.append(f"{mid},{dates[mid].isoformat()},CHAIR,"
                             f"{actions[i % 3]},{i % 2}")
        votes_rows.append(f"{mid},CHAIR,0")
        embeddings.append(group[0].chair)
        for obs in group:
            votes_rows.append(f"{mid},{obs.member_id},{obs.vote}")
            embeddings.append(obs.member)
            member_ids.add(obs.member_id)

    profile_rows = ["member_id,birth_date,gender,hometown_region,school_region,"
                    "school_wealth,econ_major,term_start,role,appt_party,"
                    "great_depression,great_inflation,wwii"]
    hometowns = ["NE", "MW", "South", "West", "OTH"]
    schools = ["NE", "MW", "South", "West"]
    for i, member_id in enumerate(sorted(member_ids)):
        profile_rows.append(
            f"{member_id},{1935 + int(rng.integers(0, 35))}-05-10,"
            f"{'F' if rng.random() < 0.2 else 'M'},"
            f"{hometowns[int(rng.integers(0, 5))]},{schools[int(rng.integers(0, 4))]},"
            f"{float(np.round(rng.uniform(40000, 400000), 2))},"
            f"{int(rng.random() < 0.7)},{1988 + int(rng.integers(0, 11))}-01-15,"
            f"{'chair' if member_id == 'CHAIR' else 'governor'},"
            f"{'Dem' if rng.random() < 0.5 else 'Rep'},"
            f"{int(rng.random() < 0.3)},{int(rng.random() < 0.4)},{int(rng.random() < 0.3)}")

    (root / "meetings.csv").write_text("\n".join(meetings_rows) + "\n")
    (root / "votes.csv").write_text("\n".join(votes_rows) + "\n")
    (root / "profiles.csv").write_text("\n".join(profile_rows) + "\n")
    corpus.write_embeddings(root / "corpus.femb", embeddings)

    tealbook_rows = ["meeting_id,variable,b2,b1,f0,f1,f2"]
    rng = np.random.default_rng(seed + 1)
    for mid in meeting_ids:
        u = np.round(5 + np.cumsum(rng.normal(0, 0.2, 5)), 2)
        c = np.round(2.5 + np.cumsum(rng.normal(0, 0.15, 5)), 2)
        tealbook_rows.append(f"{mid},unemployment," + ",".join(map(str, u)))
        tealbook_rows.append(f"{mid},core_cpi," + ",".join(map(str, c)))
    (root / "tealbook.csv").write_text("\n".join(tealbook_rows) + "\n")
    return meeting_ids, dates


def build_sep_files(root, n_meetings=14, seed=3):
    """Quarterly projection snapshots with meeting-level dissent scores."""
    rng = np.random.default_rng(seed)
    rows = ["meeting_id,variable,horizon,value"]
    hd_rows = ["meeting_id,date,HD,V,n_members"]
    start = date(2013, 3, 15)
    for i in range(n_meetings):
        when = date(start.year + i // 4, 3 * (i % 4) + 3, 15)
        mid = when.isoformat()
        width = rng.uniform(0.1, 0.6)
        for var in corpus.SEP_VARS:
            horizons = [h for h in corpus.SEP_HORIZONS
                        if not (var in corpus.SEP_INFLATION_VARS and h == "long_run")]
            for hor in horizons:
                center = rng.uniform(1.0, 4.0)
                for _ in range(5):
                    rows.append(f"{mid},{var},{hor},{center + rng.normal(0, width):.4f}")
        hd = float(np.clip(0.25 + 0.35 * width + rng.normal(0, 0.03), 0.02, 0.95))
        v = round(float(rng.integers(0, 3)) / 10.0, 4)
        hd_rows.append(f"{mid},{mid},{hd},{v},10")
    (root / "sep.csv").write_text("\n".join(rows) + "\n")
    (root / "meeting_scores.csv").write_text("\n".join(hd_rows) + "\n")


def build_market_files(root, n_events=14, seed=5):
    rng = np.random.default_rng(seed)
    start = date(2015, 1, 5)
    n_days = 620
    prices_rows = ["symbol,date,open,close"]
    trading_days = []
    d = start
    while len(trading_days) < n_days:
        if d.weekday() < 5:
            trading_days.append(d)
        d += timedelta(days=1)
    events, hd, s = [], [], []
    for i in range(n_events):
        events.append(trading_days[20 + i * 40])
        hd.append(float(rng.uniform(0.1, 0.7)))
        s.append(float(rng.uniform(-0.4, 0.4)))
    hd, s = np.array(hd), np.array(s)
    for symbol, beta_hd in (("SPY", -0.4), ("VIX", 0.9), ("GOVT", 0.0), ("TIP", -0.1)):
        level = np.full(n_days, 100.0)
        shock = np.zeros(n_days)
        for i, ev in enumerate(events):
            k = trading_days.index(ev)
            shock[k:] += beta_hd * hd[i] * 0.01
        walk = np.cumsum(rng.normal(0, 0.004, n_days))
        log_close = np.log(level) + walk + shock
        close = np.exp(log_close)
        open_ = close * np.exp(rng.normal(0, 0.001, n_days))
        for k, day in enumerate(trading_days):
            prices_rows.append(f"{symbol},{day.isoformat()},{open_[k]:.6f},{close[k]:.6f}")
    (root / "prices.csv").write_text("\n".join(prices_rows) + "\n")
    minutes_rows = ["meeting_id,date,hd_min,s_min"]
    for i, ev in enumerate(events):
        minutes_rows.append(f"{ev.isoformat()},{ev.isoformat()},{hd[i]:.6f},{s[i]:.6f}")
    (root / "minutes_scores.csv").write_text("\n".join(minutes_rows) + "\n")

    opp_rows = ["date,opp_ffr,opp_shadow,opp_slope,zero_bound"]
    for i, ev in enumerate(events):
        when = ev + timedelta(days=10)
        opp_rows.append(f"{when.isoformat()},{0.8 * hd[i] + rng.normal(0, 0.05):.4f},"
                        f"{rng.normal(0, 0.3):.4f},{rng.normal(0, 0.3):.4f},{i % 4 == 0:d}")
    (root / "opp.csv").write_text("\n".join(opp_rows) + "\n")
    return events


def build_minutes_files(root, meeting_ids, dates, seed=7):
    """Minutes documents keyed by date plus the dove/hawk axis records."""
    rng = np.random.default_rng(seed)
    docs = []
    target_rows = ["meeting_id,date,HD,V,n_members"]
    for mid in meeting_ids:
        rows = rng.normal(0, 1, (3, corpus.EMB_DIM))
        day = dates[mid].isoformat()
        docs.append(synthetic.make_transcript(day, "MINUTES", rows))
        target_rows.append(f"{day},{day},{rng.uniform(0.1, 0.6):.6f},0.0,10")
    corpus.write_embeddings(root / "minutes.femb", docs)
    (root / "minutes_targets.csv").write_text("\n".join(target_rows) + "\n")
    axis = [
        synthetic.make_transcript("axis", "dove", rng.normal(0, 1, (4, corpus.EMB_DIM))),
        synthetic.make_transcript("axis", "hawk", rng.normal(0, 1, (4, corpus.EMB_DIM))),
    ]
    corpus.write_embeddings(root / "axis.femb", axis)


@pytest.fixture(scope="session")
def cli_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    meeting_ids, dates = build_classifier_files(root)
    build_sep_files(root)
    build_market_files(root)
    build_minutes_files(root, meeting_ids, dates)
    config = {
        "seed": 11,
        "workers": 1,
        "out": str(root / "default_out"),
        "data": {
            "embeddings": str(root / "corpus.femb"),
            "meetings": str(root / "meetings.csv"),
            "votes": str(root / "votes.csv"),
            "profiles": str(root / "profiles.csv"),
            "tealbook": str(root / "tealbook.csv"),
            "sep": str(root / "sep.csv"),
            "prices": str(root / "prices.csv"),
            "opp": str(root / "opp.csv"),
            "minutes_embeddings": str(root / "minutes.femb"),
            "axis_embeddings": str(root / "axis.femb"),
            "meeting_scores": str(root / "meeting_scores.csv"),
            "minutes_scores": str(root / "minutes_scores.csv"),
            "lexicon": "data/lexicon_default.txt",
        },
        "train": {"batch_size": 8, "max_steps": 20, "patience": 5,
                  "lr_decay_factor": 0.9, "split_frac": 0.8},
        "hyper": {"n_mhsa_chair": 1, "n_mhsa_member": 1, "heads_chair": 4,
                  "heads_member": 4, "dropout": 0.4, "lr0": 3e-4},
        "tune": {"budget": 2},
        "event_study": {"indicators": ["SPY", "GOVT-TIP"], "replicates": 999,
                        "level": 0.9, "mode": "residual"},
        "sep_analysis": {"policy_components": 2, "economy_components": 3,
                         "center": "median", "dml_folds": 5, "dml_lambda": 1.0},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))
    return {"root": root, "config": cfg_path, "config_dict": config}
