"""Command-line entry point orchestrating the pipeline.

Every subcommand reads one JSON config (``--config``), optionally
overridden by ``FOMCDISSENT_*`` environment variables and command-line
flags, writes its outputs plus a manifest into the run directory, and is
byte-for-byte reproducible under a fixed seed regardless of the worker
count.

Exit codes: 0 success, 2 usage/config, 3 data, 4 numeric/convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import corpus, covariates, dissent, econ, market, nn, train
from .errors import ConfigError, DataError, DissentError, NumericError
from .runio import (
    RunContext,
    apply_overrides,
    data_path,
    load_config,
    write_csv,
    write_json,
)


def _stable_hash(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")


def _load_panel_inputs(ctx, cfg):
    meetings = corpus.load_meetings(ctx.track_input(data_path(cfg, "meetings")),
                                    ctx.track_input(data_path(cfg, "votes")))
    profiles = corpus.load_profiles(ctx.track_input(data_path(cfg, "profiles")))
    return meetings, profiles


def _load_joined(ctx, cfg):
    meetings, profiles = _load_panel_inputs(ctx, cfg)
    embeddings = corpus.load_embeddings(ctx.track_input(data_path(cfg, "embeddings")))
    joined = corpus.join_panel(meetings, profiles, embeddings)
    return meetings, profiles, joined


# --------------------------------------------------------------------------
# ingest-check
# --------------------------------------------------------------------------

def cmd_ingest_check(cfg) -> int:
    ctx = RunContext("ingest-check", cfg)
    report = {"counts": {}, "warnings": [], "rejects": []}
    path = data_path(cfg, "embeddings", required=False)
    if path is not None:
        records = corpus.load_embeddings(ctx.track_input(path))
        report["counts"]["embeddings"] = len(records)
    if cfg.get("data", {}).get("meetings"):
        meetings, profiles = _load_panel_inputs(ctx, cfg)
        report["counts"]["meetings"] = len(meetings)
        report["counts"]["profiles"] = len(profiles)
        votes = [v for m in meetings for _, v in m.non_chair_votes()]
        report["counts"]["member_votes"] = len(votes)
        report["counts"]["no_votes"] = int(sum(votes))
        if path is not None:
            joined = corpus.join_panel(meetings, profiles, records)
            report["counts"]["observations"] = len(joined.observations)
            report["warnings"] = joined.warnings
            report["rejects"] = joined.rejects
    for key, loader in (("tealbook", corpus.load_tealbook), ("sep", corpus.load_sep),
                        ("prices", corpus.load_prices), ("opp", corpus.load_opp)):
        p = data_path(cfg, key, required=False)
        if p is not None:
            loaded = loader(ctx.track_input(p))
            if key == "opp":
                report["counts"][key] = len(loaded.dates)
            elif isinstance(loaded, dict):
                report["counts"][key] = {k: len(v.dates) for k, v in loaded.items()}
            else:
                report["counts"][key] = len(loaded)
    lex = data_path(cfg, "lexicon", required=False)
    if lex is not None:
        report["counts"]["lexicon_terms"] = len(corpus.load_lexicon(ctx.track_input(lex)))
    write_json(ctx.out_path("ingest_report.json"), report)
    ctx.finish()
    print(json.dumps(report["counts"], sort_keys=True))
    return 0


# --------------------------------------------------------------------------
# train / tune
# --------------------------------------------------------------------------

def _train_config(cfg) -> train.TrainConfig:
    body = dict(cfg.get("train", {}))
    body["seed"] = cfg["seed"]
    return train.TrainConfig(**body).validate()


def _write_trace(ctx, name, trace):
    write_csv(ctx.out_path(name),
              ["step", "lr", "train_loss", "test_loss", "train_acc", "test_acc"],
              trace)


def cmd_train(cfg) -> int:
    ctx = RunContext("train", cfg)
    tcfg = _train_config(cfg)
    kind = cfg.get("kind", "classifier")
    if kind == "classifier":
        _, _, joined = _load_joined(ctx, cfg)
        hyper = nn.HyperConfig.from_dict(cfg.get("hyper", {})) if cfg.get("hyper") \
            else nn.HyperConfig()
        result = train.train_model("classifier", joined.observations, tcfg, hyper=hyper)
        nn.save_params(ctx.out_path("classifier.fwts"), result.params, hyper=hyper,
                       extra={"best_test_loss": result.best_test_loss,
                              "best_step": result.best_step})
        ctx.outputs.append("classifier.fwts.json")
    elif kind == "minutes":
        docs = corpus.load_embeddings(ctx.track_input(data_path(cfg, "minutes_embeddings")))
        targets = _read_meeting_scores(ctx.track_input(data_path(cfg, "meeting_scores")))
        examples, skipped = [], []
        for doc in docs:
            if doc.meeting_id in targets:
                examples.append(train.MinutesExample(doc=doc, target=targets[doc.meeting_id]))
            else:
                skipped.append(doc.meeting_id)
        mh = train.MinutesHyper(**cfg.get("minutes_hyper", {}))
        result = train.train_model("minutes", examples, tcfg, minutes_hyper=mh)
        nn.save_params(ctx.out_path("minutes.fwts"), result.params,
                       extra={"minutes_hyper": asdict(mh), "skipped": skipped,
                              "best_test_loss": result.best_test_loss})
        ctx.outputs.append("minutes.fwts.json")
    else:
        raise ConfigError(f"unknown kind {kind!r}")
    _write_trace(ctx, "trace.csv", result.trace)
    ctx.finish()
    print(f"best test loss {result.best_test_loss:.6f} at step {result.best_step}")
    return 0


def cmd_tune(cfg) -> int:
    ctx = RunContext("tune", cfg)
    tcfg = _train_config(cfg)
    budget = int(cfg.get("tune", {}).get("budget", 10))
    _, _, joined = _load_joined(ctx, cfg)
    trials = train.hyper_search(joined.observations, budget=budget, seed=cfg["seed"],
                                cfg=tcfg, workers=cfg["workers"])
    write_json(ctx.out_path("trials.json"),
               {"trials": [t.to_dict() for t in trials],
                "best": trials[0].to_dict() if trials else None})
    ctx.finish()
    print(f"{len(trials)} trials; best test loss {trials[0].best_test_loss:.6f}")
    return 0


# --------------------------------------------------------------------------
# score / aggregate
# --------------------------------------------------------------------------

def _read_meeting_scores(path) -> dict[str, float]:
    import pandas as pd
    df = pd.read_csv(path, dtype=str)
    return {row["meeting_id"]: float(row["HD"]) for _, row in df.iterrows()}


def _doc_vector(rec: corpus.EmbeddedTranscript) -> np.ndarray:
    if rec.n_sentences == 0:
        raise DataError(f"empty document {rec.meeting_id}/{rec.member_id}")
    return np.asarray(rec.embedding[:rec.n_sentences], dtype=np.float64).mean(axis=0)


def cmd_score(cfg) -> int:
    ctx = RunContext("score", cfg)
    kind = cfg.get("kind", "classifier")
    if kind == "classifier":
        meetings, profiles, joined = _load_joined(ctx, cfg)
        ckpt = ctx.track_input(data_path(cfg, "checkpoint"))
        params, hyper = nn.load_classifier(ckpt)
        if hyper is None:
            hyper = nn.HyperConfig.from_dict(cfg.get("hyper", {})) if cfg.get("hyper") \
                else nn.HyperConfig()
        scored = dissent.score_panel(joined.observations, params, hyper)
        dates = {m.meeting_id: m.date.isoformat() for m in meetings}
        write_csv(ctx.out_path("panel.csv"),
                  ["meeting_id", "date", "member_id", "hd", "v"],
                  [[s.meeting_id, dates[s.meeting_id], s.member_id, s.hd, s.v]
                   for s in scored])
        print(f"scored {len(scored)} observations")
    elif kind == "minutes":
        docs = corpus.load_embeddings(ctx.track_input(data_path(cfg, "minutes_embeddings")))
        axis = corpus.load_embeddings(ctx.track_input(data_path(cfg, "axis_embeddings")))
        centroids = {rec.member_id: _doc_vector(rec) for rec in axis}
        if "dove" not in centroids or "hawk" not in centroids:
            raise ConfigError("axis embeddings must hold records named dove and hawk")
        ckpt = ctx.track_input(data_path(cfg, "checkpoint"))
        params, sidecar = nn.load_minutes(ckpt)
        dropout = sidecar.get("minutes_hyper", {}).get("dropout", nn.MINUTES_DEFAULTS["dropout"])
        rows = []
        for doc in docs:
            hd_min = float(np.clip(
                float(nn.forward_minutes(doc, params, dropout_rate=dropout,
                                         train=False).values),
                dissent.SCORE_EPS, 1 - dissent.SCORE_EPS))
            s_min = market.sentiment_axis(_doc_vector(doc), centroids["dove"],
                                          centroids["hawk"])
            d = corpus.parse_meeting_date(doc.meeting_id)
            rows.append([doc.meeting_id, d.isoformat() if d else "", hd_min, s_min])
        write_csv(ctx.out_path("minutes_panel.csv"),
                  ["meeting_id", "date", "hd_min", "s_min"], rows)
        print(f"scored {len(rows)} minutes documents")
    else:
        raise ConfigError(f"unknown kind {kind!r}")
    ctx.finish()
    return 0


def _read_score_panel(path) -> list[dissent.DissentObservation]:
    import pandas as pd
    df = pd.read_csv(path, dtype=str)
    return [
        dissent.DissentObservation(meeting_id=r["meeting_id"], member_id=r["member_id"],
                                   hd=float(r["hd"]), v=int(r["v"]))
        for _, r in df.iterrows()
    ]


def cmd_aggregate(cfg) -> int:
    ctx = RunContext("aggregate", cfg)
    panel = _read_score_panel(ctx.track_input(data_path(cfg, "scores")))
    meetings = dissent.aggregate_panel(panel)
    import pandas as pd
    df = pd.read_csv(data_path(cfg, "scores"), dtype=str)
    dates = {r["meeting_id"]: r["date"] for _, r in df.iterrows()}
    write_csv(ctx.out_path("meeting_scores.csv"),
              ["meeting_id", "date", "HD", "V", "n_members"],
              [[m.meeting_id, dates.get(m.meeting_id, ""), m.HD, m.V, m.n_members]
               for m in meetings])
    stats = dissent.summary_stats(panel, meetings)
    write_csv(ctx.out_path("summary_stats.csv"),
              ["measure", "mean", "sd", "min", "max", "count"],
              [[name, s["mean"], s["sd"], s["min"], s["max"], s["count"]]
               for name, s in stats.items()])
    ctx.finish()
    print(f"aggregated {len(panel)} scores into {len(meetings)} meetings")
    return 0


# --------------------------------------------------------------------------
# analyze-panel
# --------------------------------------------------------------------------

_SCHOOL_DUMMIES = [("school_ne", "NE"), ("school_south", "South"), ("school_west", "West")]
_HOMETOWN_DUMMIES = [("hometown_ne", "NE"), ("hometown_oth", "OTH"),
                     ("hometown_south", "South"), ("hometown_west", "West")]
_MACRO_COLS = ["T_unemp", "D_unemp", "T_cpi", "D_cpi"]


def _covariate_table(meetings, profiles, tealbook):
    cov = covariates.build_covariates(meetings, profiles, tealbook)
    return {c.meeting_id: c for c in cov}


def _macro_row(c) -> list[float] | None:
    vals = [c.T_unemp, c.D_unemp, c.T_cpi, c.D_cpi]
    if any(v is None for v in vals):
        return None
    return [float(v) for v in vals]


def _meeting_char_row(c) -> list[float]:
    return [c.D_experience, c.D_age, c.D_schoolwealth, c.P_gender, c.P_major,
            c.E_hometown, c.E_school, c.E_potus, float(c.incumbent_dem),
            c.P_depression, c.P_inflation, c.P_wwii]


_MEETING_CHAR_COLS = ["D_experience", "D_age", "D_schoolwealth", "P_gender", "P_major",
                      "E_hometown", "E_school", "E_potus", "incumbent_dem",
                      "P_depression", "P_inflation", "P_wwii"]


def _member_char_row(prof, meeting, cov) -> list[float]:
    row = [covariates.years_between(prof.term_start, meeting.date),
           covariates.years_between(prof.birth_date, meeting.date),
           math.log(prof.school_wealth),
           1.0 if prof.gender == "F" else 0.0,
           1.0 if prof.econ_major else 0.0]
    row += [1.0 if prof.hometown_region == region else 0.0
            for _, region in _HOMETOWN_DUMMIES]
    row += [1.0 if prof.school_region == region else 0.0
            for _, region in _SCHOOL_DUMMIES]
    row += [1.0 if prof.appt_party == "Dem" else 0.0, float(cov.incumbent_dem),
            1.0 if prof.great_depression else 0.0,
            1.0 if prof.great_inflation else 0.0,
            1.0 if prof.wwii else 0.0]
    return row


_MEMBER_CHAR_COLS = (["experience", "age", "log_school_wealth", "female", "econ_major"]
                     + [name for name, _ in _HOMETOWN_DUMMIES]
                     + [name for name, _ in _SCHOOL_DUMMIES]
                     + ["appt_dem", "incumbent_dem", "depression", "inflation", "wwii"])


def cmd_analyze_panel(cfg) -> int:
    ctx = RunContext("analyze-panel", cfg)
    meetings, profiles = _load_panel_inputs(ctx, cfg)
    tealbook = corpus.load_tealbook(ctx.track_input(data_path(cfg, "tealbook")))
    cov_by_meeting = _covariate_table(meetings, profiles, tealbook)
    meeting_by_id = {m.meeting_id: m for m in meetings}

    panel = _read_score_panel(ctx.track_input(data_path(cfg, "scores")))
    meeting_scores = dissent.aggregate_panel(panel)

    # meeting level: beta for the dissent level, fractional logit for NO shares
    rows_y, rows_macro, rows_chars, kept = [], [], [], []
    for m in meeting_scores:
        c = cov_by_meeting.get(m.meeting_id)
        macro = _macro_row(c) if c else None
        if macro is None:
            continue
        kept.append(m)
        rows_macro.append(macro)
        rows_chars.append(_meeting_char_row(c))
    hd_y = np.array([m.HD for m in kept])
    v_y = np.array([m.V for m in kept])
    x_macro = np.array(rows_macro)
    x_full = np.column_stack([x_macro, np.array(rows_chars)])
    full_names = _MACRO_COLS + _MEETING_CHAR_COLS
    pruned_columns = {}

    def pruned(label, y, x, names, cluster_id=None):
        d, dropped = econ.prune_degenerate(
            econ.design(y, x, names=names, cluster_id=cluster_id))
        if dropped:
            pruned_columns[label] = dropped
        return d

    fits = [
        ("HD_macro", econ.beta_regression(pruned("HD_macro", hd_y, x_macro, _MACRO_COLS))),
        ("HD_full", econ.beta_regression(pruned("HD_full", hd_y, x_full, full_names))),
        ("V_macro", econ.fractional_logit(pruned("V_macro", v_y, x_macro, _MACRO_COLS))),
        ("V_full", econ.fractional_logit(pruned("V_full", v_y, x_full, full_names))),
    ]
    for label, fit in fits[:2]:
        null = econ.beta_regression(econ.design(hd_y, np.zeros((hd_y.size, 0)), names=[]))
        fit.extra["pseudo_r2_mcfadden"] = econ.pseudo_r2(fit, null, "mcfadden")
        fit.extra["pseudo_r2_corr"] = econ.pseudo_r2(fit, fit, "corr")

    # individual level: random-intercept models clustered by member
    ind_y_hd, ind_y_v, ind_macro, ind_chars, ind_cluster = [], [], [], [], []
    for obs in panel:
        c = cov_by_meeting.get(obs.meeting_id)
        macro = _macro_row(c) if c else None
        prof = profiles.get(obs.member_id)
        if macro is None or prof is None:
            continue
        meeting = meeting_by_id[obs.meeting_id]
        ind_y_hd.append(obs.hd)
        ind_y_v.append(float(obs.v))
        ind_macro.append(macro)
        ind_chars.append(_member_char_row(prof, meeting, c))
        ind_cluster.append(obs.member_id)
    ind_macro = np.array(ind_macro)
    ind_full = np.column_stack([ind_macro, np.array(ind_chars)])
    ind_names = _MACRO_COLS + _MEMBER_CHAR_COLS
    cluster = np.array(ind_cluster)
    q = int(cfg.get("quadrature_nodes", 15))
    fits += [
        ("hd_macro", econ.random_intercept(
            pruned("hd_macro", np.array(ind_y_hd), ind_macro, _MACRO_COLS, cluster),
            "beta", q=q)),
        ("hd_full", econ.random_intercept(
            pruned("hd_full", np.array(ind_y_hd), ind_full, ind_names, cluster),
            "beta", q=q)),
        ("v_macro", econ.random_intercept(
            pruned("v_macro", np.array(ind_y_v), ind_macro, _MACRO_COLS, cluster),
            "probit", q=q)),
        ("v_full", econ.random_intercept(
            pruned("v_full", np.array(ind_y_v), ind_full, ind_names, cluster),
            "probit", q=q)),
    ]

    write_csv(ctx.out_path("panel_regressions.csv"),
              ["column", "term", "coef", "se", "z", "p", "stars"],
              econ.table_rows(fits))
    ctx.out_path("panel_regressions.txt").write_text(
        econ.format_table(fits[:4], "Meeting level")
        + "\n" + econ.format_table(fits[4:], "Individual level (random intercept)"))
    write_json(ctx.out_path("panel_notes.json"), {
        "n_meetings": len(kept), "n_individual": int(cluster.size),
        "pseudo_r2": {label: {"mcfadden": fit.extra.get("pseudo_r2_mcfadden"),
                              "corr": fit.extra.get("pseudo_r2_corr")}
                      for label, fit in fits[:2]},
        "pruned_columns": pruned_columns,
        "notes": {label: fit.notes for label, fit in fits if fit.notes},
    })
    ctx.finish()
    print(f"meeting columns on n={len(kept)}, individual columns on n={cluster.size}")
    return 0


# --------------------------------------------------------------------------
# analyze-sep
# --------------------------------------------------------------------------

def cmd_analyze_sep(cfg) -> int:
    ctx = RunContext("analyze-sep", cfg)
    snapshots = corpus.load_sep(ctx.track_input(data_path(cfg, "sep")))
    hd_by_meeting = _read_meeting_scores(ctx.track_input(data_path(cfg, "meeting_scores")))
    body = cfg.get("sep_analysis", {})
    center = body.get("center", "median")
    k_policy = int(body.get("policy_components", 2))
    k_economy = int(body.get("economy_components", 3))

    pol_ids, pol_mat, pol_notes = covariates.disagreement_matrix(
        snapshots, covariates.POLICY_MEASURES, center=center)
    eco_ids, eco_mat, eco_notes = covariates.disagreement_matrix(
        snapshots, covariates.ECONOMY_MEASURES, center=center)
    pol_pca = covariates.pca(pol_mat, k_policy)
    eco_pca = covariates.pca(eco_mat, k_economy)

    measure_rows = []
    for ids, mat, measures in ((pol_ids, pol_mat, covariates.POLICY_MEASURES),
                               (eco_ids, eco_mat, covariates.ECONOMY_MEASURES)):
        for i, mid in enumerate(ids):
            for j, (var, hor) in enumerate(measures):
                measure_rows.append([mid, var, hor, mat[i, j]])
    write_csv(ctx.out_path("sep_measures.csv"),
              ["meeting_id", "variable", "horizon", "disagreement"], measure_rows)

    def pca_rows(ids, pca_result, group):
        rows = []
        for i, mid in enumerate(ids):
            for k in range(pca_result.scores.shape[1]):
                rows.append([group, mid, k + 1, pca_result.scores[i, k]])
        return rows

    write_csv(ctx.out_path("sep_pca_scores.csv"),
              ["group", "meeting_id", "component", "score"],
              pca_rows(pol_ids, pol_pca, "policy") + pca_rows(eco_ids, eco_pca, "economy"))
    write_json(ctx.out_path("sep_pca_summary.json"), {
        "policy_explained_ratio": pol_pca.explained_variance_ratio.tolist(),
        "policy_explained_total": float(pol_pca.explained_variance_ratio.sum()),
        "economy_explained_ratio": eco_pca.explained_variance_ratio.tolist(),
        "economy_explained_total": float(eco_pca.explained_variance_ratio.sum()),
        "notes": pol_notes + eco_notes,
    })

    # regressions of the dissent level on the leading components
    def joined_design(ids, scores, cols):
        keep = [i for i, mid in enumerate(ids) if mid in hd_by_meeting]
        y = np.array([hd_by_meeting[ids[i]] for i in keep])
        return y, scores[keep][:, cols], [ids[i] for i in keep]

    fits = []
    y_pol, x_pol, pol_kept = joined_design(pol_ids, pol_pca.scores, list(range(k_policy)))
    y_eco, x_eco, eco_kept = joined_design(eco_ids, eco_pca.scores, list(range(k_economy)))
    if y_pol.size >= 3:
        fits.append(("HD_policy_pc1", econ.beta_regression(
            econ.design(y_pol, x_pol[:, :1], names=["policy_pc1"]))))
        if k_policy > 1:
            fits.append(("HD_policy_pcs", econ.beta_regression(
                econ.design(y_pol, x_pol, names=[f"policy_pc{i+1}" for i in range(k_policy)]))))
    if y_eco.size >= 4:
        fits.append(("HD_economy_pcs", econ.beta_regression(
            econ.design(y_eco, x_eco, names=[f"economy_pc{i+1}" for i in range(k_economy)]))))

    # partialling-out in both directions on the common sample
    common = sorted(set(pol_kept) & set(eco_kept))
    dml_out = {}
    if len(common) >= int(body.get("dml_folds", 5)):
        pol_index = {mid: i for i, mid in enumerate(pol_ids)}
        eco_index = {mid: i for i, mid in enumerate(eco_ids)}
        y = np.array([hd_by_meeting[mid] for mid in common])
        t_pol = np.array([pol_pca.scores[pol_index[mid], 0] for mid in common])
        x_eco_m = np.stack([eco_mat[eco_index[mid]] for mid in common])
        t_eco = np.array([eco_pca.scores[eco_index[mid], 0] for mid in common])
        x_pol_m = np.stack([pol_mat[pol_index[mid]] for mid in common])
        folds = int(body.get("dml_folds", 5))
        lam = float(body.get("dml_lambda", 1.0))
        r1 = econ.dml_effect(y, t_pol, x_eco_m, folds=folds, lam=lam,
                             seed=cfg["seed"], keys=common)
        r2 = econ.dml_effect(y, t_eco, x_pol_m, folds=folds, lam=lam,
                             seed=cfg["seed"], keys=common)
        dml_out = {
            "residualized_policy_pc1": {"theta": r1.theta, "se": r1.se, "n": r1.n},
            "residualized_economy_pc1": {"theta": r2.theta, "se": r2.se, "n": r2.n},
        }
    write_json(ctx.out_path("sep_dml.json"), dml_out)
    if fits:
        write_csv(ctx.out_path("sep_regressions.csv"),
                  ["column", "term", "coef", "se", "z", "p", "stars"],
                  econ.table_rows(fits))
        ctx.out_path("sep_regressions.txt").write_text(
            econ.format_table(fits, f"Dissent level vs projection disagreement ({center})"))
    ctx.finish()
    print(f"policy PCs explain {pol_pca.explained_variance_ratio.sum():.4f}, "
          f"economy PCs {eco_pca.explained_variance_ratio.sum():.4f}")
    return 0


# --------------------------------------------------------------------------
# analyze-opp
# --------------------------------------------------------------------------

def cmd_analyze_opp(cfg) -> int:
    ctx = RunContext("analyze-opp", cfg)
    opp = corpus.load_opp(ctx.track_input(data_path(cfg, "opp")))
    import pandas as pd
    df = pd.read_csv(ctx.track_input(data_path(cfg, "meeting_scores")), dtype=str)
    meeting_dates = []
    hd_v = {}
    for _, r in df.iterrows():
        d = corpus.parse_meeting_date(r["meeting_id"]) or corpus.parse_meeting_date(r["date"])
        if d is None:
            raise DataError(f"cannot parse a date for meeting {r['meeting_id']}")
        meeting_dates.append((r["meeting_id"], d))
        hd_v[r["meeting_id"]] = (float(r["HD"]), float(r["V"]))

    rows_hd, rows_v, ys, zb = [], [], {"ffr": [], "shadow": [], "slope": []}, []
    matched = 0
    for i, when in enumerate(opp.dates):
        mid = corpus.most_recent_meeting_on_or_before(meeting_dates, when)
        if mid is None:
            continue
        matched += 1
        hd, v = hd_v[mid]
        rows_hd.append(hd)
        rows_v.append(v)
        ys["ffr"].append(abs(opp.opp_ffr[i]))
        ys["shadow"].append(abs(opp.opp_shadow[i]))
        ys["slope"].append(abs(opp.opp_slope[i]))
        zb.append(bool(opp.zero_bound[i]))
    x = np.column_stack([rows_hd, rows_v])
    zb = np.array(zb)
    fits = []
    for variant in ("ffr", "shadow", "slope"):
        y = np.array(ys[variant])
        fits.append((f"{variant}_full", econ.ols_robust(
            econ.design(y, x, names=["HD", "V"]))))
        keep = ~zb
        if keep.sum() > 4:
            fits.append((f"{variant}_ex_zlb", econ.ols_robust(
                econ.design(y[keep], x[keep], names=["HD", "V"]))))
    write_csv(ctx.out_path("opp_regressions.csv"),
              ["column", "term", "coef", "se", "z", "p", "stars"],
              econ.table_rows(fits))
    ctx.out_path("opp_regressions.txt").write_text(
        econ.format_table(fits, "Absolute policy gap vs dissent level"))
    write_json(ctx.out_path("opp_notes.json"), {
        "n_matched": matched,
        "adj_r2": {label: fit.extra.get("adj_r2") for label, fit in fits},
    })
    ctx.finish()
    print(f"matched {matched} observations to meetings")
    return 0


# --------------------------------------------------------------------------
# event-study
# --------------------------------------------------------------------------

def _run_indicator(args):
    (name, events, hd, s, series_blob, replicates, level, mode, seed) = args
    if len(series_blob) == 1:
        panel = market.build_event_panel(events, hd, s, series=series_blob[0])
    else:
        panel = market.build_event_panel(events, hd, s, spread=tuple(series_blob))
    rows, skipped = market.event_study(panel, replicates=replicates, level=level,
                                       mode=mode, seed=seed)
    return name, rows, {str(k): v for k, v in skipped.items()}


def cmd_event_study(cfg) -> int:
    ctx = RunContext("event-study", cfg)
    import pandas as pd
    df = pd.read_csv(ctx.track_input(data_path(cfg, "minutes_scores")), dtype=str)
    events, hd, s = [], [], []
    for _, r in df.iterrows():
        d = corpus.parse_meeting_date(r.get("date") or r["meeting_id"])
        if d is None:
            raise DataError(f"cannot parse event date for {r['meeting_id']}")
        events.append(d)
        hd.append(float(r["hd_min"]))
        s.append(float(r["s_min"]))
    prices = corpus.load_prices(ctx.track_input(data_path(cfg, "prices")))
    body = cfg.get("event_study", {})
    indicators = body.get("indicators", sorted(prices))
    replicates = int(body.get("replicates", 999))
    level = float(body.get("level", 0.90))
    mode = body.get("mode", "residual")

    jobs = []
    for name in indicators:
        legs = name.split("-")
        for leg in legs:
            if leg not in prices:
                raise ConfigError(f"indicator {name}: no price series for {leg}")
        blob = [prices[leg] for leg in legs]
        seed = int(np.random.SeedSequence(
            [cfg["seed"], 0xE5, _stable_hash(name)]).generate_state(1)[0])
        jobs.append((name, events, hd, s, blob, replicates, level, mode, seed))

    results = {}
    if cfg["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            for name, rows, skipped in pool.map(_run_indicator, jobs):
                results[name] = (rows, skipped)
    else:
        for job in jobs:
            name, rows, skipped = _run_indicator(job)
            results[name] = (rows, skipped)

    notes = {}
    for name in indicators:
        rows, skipped = results[name]
        write_csv(ctx.out_path(f"event_study_{name}.csv"),
                  ["h", "b1", "b1_lo", "b1_hi", "b2", "b2_lo", "b2_hi", "n"], rows)
        if skipped:
            notes[name] = skipped
    write_json(ctx.out_path("event_study_notes.json"),
               {"skipped": notes, "n_events": len(events), "mode": mode,
                "replicates": replicates, "level": level})
    ctx.finish()
    print(f"event study over {len(indicators)} indicators, {len(events)} events")
    return 0


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def cmd_report(cfg) -> int:
    ctx = RunContext("report", cfg)
    sources = cfg.get("report", {}).get("sources", [])
    if not sources:
        raise ConfigError("report needs report.sources (list of run directories)")
    for src in sources:
        src_dir = Path(src)
        if not src_dir.is_dir():
            raise DataError(f"report source is not a directory: {src}")
        for path in sorted(src_dir.glob("*")):
            if path.suffix in (".csv", ".txt", ".json") and path.name != "manifest.json":
                dest = ctx.out_path(f"{src_dir.name}__{path.name}")
                shutil.copyfile(path, dest)
                ctx.track_input(path)
    ctx.finish()
    print(f"collected {len(ctx.outputs)} files from {len(sources)} runs")
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

_COMMANDS = {
    "ingest-check": cmd_ingest_check,
    "train": cmd_train,
    "tune": cmd_tune,
    "score": cmd_score,
    "aggregate": cmd_aggregate,
    "analyze-panel": cmd_analyze_panel,
    "analyze-sep": cmd_analyze_sep,
    "analyze-opp": cmd_analyze_opp,
    "event-study": cmd_event_study,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fomcdissent",
        description="Hidden-dissent measurement pipeline over committee transcripts")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--kind", default=None, choices=["classifier", "minutes"],
                       help="model kind for train/score")
        p.add_argument("--budget", type=int, default=None, help="search budget for tune")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        if args.kind is not None:
            cfg["kind"] = args.kind
        if args.budget is not None:
            cfg.setdefault("tune", {})["budget"] = args.budget
        return _COMMANDS[args.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except DissentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
