import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fomcdissent import dissent, nn, synthetic
from fomcdissent.errors import AggregationError


def tiny_hyper():
    return nn.HyperConfig(n_mhsa_chair=1, n_mhsa_member=2, heads_chair=4,
                          heads_member=4, dropout=0.5, lr0=1e-4).validate()


def straight_line_forward(chair_rows, member_rows, named, hyper):
    """Independent eval-mode re-implementation with plain numpy calls.

    No shared code with the tensor engine: branch = dense, layer norm with
    affine, attention blocks with post-norm residuals, mean pool; head =
    relu dense then linear; sigmoid at the end.
    """
    def layer_norm(x, gamma=None, beta=None, eps=1e-5):
        mu = x.mean(axis=1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
        out = (x - mu) / np.sqrt(var + eps)
        if gamma is not None:
            out = out * gamma
        if beta is not None:
            out = out + beta
        return out

    def attention(x, wq, wk, wv, wo):
        heads, d, dh = wq.shape
        n = x.shape[0]
        concat = np.zeros((n, heads * dh))
        for h in range(heads):
            q, k, v = x @ wq[h], x @ wk[h], x @ wv[h]
            scores = q @ k.T / np.sqrt(dh)
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            p = e / e.sum(axis=1, keepdims=True)
            concat[:, h * dh:(h + 1) * dh] = p @ v
        return concat @ wo

    def branch(x, prefix, n_blocks):
        h = x @ named[f"{prefix}.dense.w"] + named[f"{prefix}.dense.b"]
        h = layer_norm(h, named[f"{prefix}.norm.gamma"], named[f"{prefix}.norm.beta"])
        for i in range(n_blocks):
            attn = attention(h, named[f"{prefix}.block{i}.wq"], named[f"{prefix}.block{i}.wk"],
                             named[f"{prefix}.block{i}.wv"], named[f"{prefix}.block{i}.wo"])
            h = layer_norm(h + attn)
        return h.mean(axis=0)

    diff = (branch(member_rows, "member", hyper.n_mhsa_member)
            - branch(chair_rows, "chair", hyper.n_mhsa_chair))
    hidden = np.maximum(diff @ named["head.fc1.w"] + named["head.fc1.b"], 0.0)
    logit = float(hidden @ named["head.fc2.w"][:, 0] + named["head.fc2.b"][0])
    return 1.0 / (1.0 + np.exp(-logit))


class TestScoreMember:
    def test_matches_independent_reimplementation(self):
        hyper = tiny_hyper()
        params = nn.init_classifier(hyper, np.random.default_rng(42))
        named = {k: t.values for k, t in params.named().items()}
        rng = np.random.default_rng(7)
        for i in range(5):
            chair = synthetic.make_transcript("m", "c", rng.normal(0, 1, (3, nn.D_MODEL)))
            member = synthetic.make_transcript("m", "p", rng.normal(0, 1, (5, nn.D_MODEL)))
            got = dissent.score_member(chair, member, params, hyper)
            want = straight_line_forward(
                chair.embedding[:3].astype(np.float64),
                member.embedding[:5].astype(np.float64), named, hyper)
            assert got == pytest.approx(want, abs=1e-10)

    def test_tied_branches_zero_bias_head_gives_half(self):
        import copy
        hyper = tiny_hyper()
        params = nn.init_classifier(
            nn.HyperConfig(n_mhsa_chair=1, n_mhsa_member=1, heads_chair=4,
                           heads_member=4, dropout=0.5, lr0=1e-4),
            np.random.default_rng(1))
        params.member = copy.deepcopy(params.chair)
        params.head.fc2_b.values[:] = 0.0
        doc = synthetic.make_transcript("m", "p", np.random.default_rng(2).normal(0, 1, (4, nn.D_MODEL)))
        h = nn.HyperConfig(n_mhsa_chair=1, n_mhsa_member=1, heads_chair=4,
                           heads_member=4, dropout=0.5, lr0=1e-4)
        assert dissent.score_member(doc, doc, params, h) == 0.5

    def test_monotone_in_logit(self):
        # adding to the final bias raises the score strictly
        hyper = tiny_hyper()
        params = nn.init_classifier(hyper, np.random.default_rng(3))
        rng = np.random.default_rng(4)
        chair = synthetic.make_transcript("m", "c", rng.normal(0, 1, (3, nn.D_MODEL)))
        member = synthetic.make_transcript("m", "p", rng.normal(0, 1, (3, nn.D_MODEL)))
        s1 = dissent.score_member(chair, member, params, hyper)
        params.head.fc2_b.values[:] += 1.0
        s2 = dissent.score_member(chair, member, params, hyper)
        assert s2 > s1

    def test_scores_strictly_inside_unit_interval(self):
        hyper = tiny_hyper()
        params = nn.init_classifier(hyper, np.random.default_rng(5))
        params.head.fc2_b.values[:] = 500.0  # saturate the sigmoid
        rng = np.random.default_rng(6)
        chair = synthetic.make_transcript("m", "c", rng.normal(0, 1, (2, nn.D_MODEL)))
        member = synthetic.make_transcript("m", "p", rng.normal(0, 1, (2, nn.D_MODEL)))
        s = dissent.score_member(chair, member, params, hyper)
        assert 0.0 < s < 1.0


class TestAggregateMeeting:
    def test_mean_of_scores(self):
        obs = [dissent.DissentObservation("m", "a", 0.2, 0),
               dissent.DissentObservation("m", "b", 0.4, 0)]
        agg = dissent.aggregate_meeting(obs)
        assert agg.HD == pytest.approx(0.3)
        assert agg.n_members == 2

    def test_vote_fraction(self):
        obs = [dissent.DissentObservation("m", x, 0.5, v)
               for x, v in [("a", 0), ("b", 0), ("c", 1)]]
        assert dissent.aggregate_meeting(obs).V == pytest.approx(1 / 3)

    def test_empty_meeting_rejected(self):
        with pytest.raises(AggregationError):
            dissent.aggregate_meeting([])

    def test_mixed_meetings_rejected(self):
        obs = [dissent.DissentObservation("m1", "a", 0.5, 0),
               dissent.DissentObservation("m2", "b", 0.5, 0)]
        with pytest.raises(AggregationError):
            dissent.aggregate_meeting(obs)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-6, 1 - 1e-6), min_size=1, max_size=12),
           st.randoms(use_true_random=False))
    def test_order_invariance_and_complement(self, scores, rnd):
        obs = [dissent.DissentObservation("m", f"p{i}", s, 0)
               for i, s in enumerate(scores)]
        shuffled = list(obs)
        rnd.shuffle(shuffled)
        a = dissent.aggregate_meeting(obs)
        b = dissent.aggregate_meeting(shuffled)
        assert a.HD == pytest.approx(b.HD, rel=1e-12)
        flipped = [dissent.DissentObservation("m", o.member_id, 1 - o.hd, o.v) for o in obs]
        c = dissent.aggregate_meeting(flipped)
        assert c.HD == pytest.approx(1 - a.HD, rel=1e-9, abs=1e-12)


class TestSummaryStats:
    def test_against_two_pass_oracle(self):
        meetings, _ = synthetic.vote_fixture(seed=0)
        rows = synthetic.score_fixture(meetings, seed=0)
        panel = [dissent.DissentObservation(r["meeting_id"], r["member_id"], r["hd"], r["v"])
                 for r in rows]
        aggregates = dissent.aggregate_panel(panel)
        stats = dissent.summary_stats(panel, aggregates)
        hd = np.array([o.hd for o in panel])
        mean = sum(hd) / len(hd)
        var = sum((x - mean) ** 2 for x in hd) / (len(hd) - 1)
        assert abs(stats["hd_individual"]["mean"] - mean) < 1e-12
        assert abs(stats["hd_individual"]["sd"] - np.sqrt(var)) < 1e-12
        assert stats["hd_individual"]["count"] == 3950
        assert set(stats) == {"hd_individual", "v_individual", "HD_meeting", "V_meeting"}
        for body in stats.values():
            assert set(body) >= {"mean", "sd", "min", "max", "count"}

    def test_single_observation_convention(self):
        obs = [dissent.DissentObservation("m", "a", 0.4, 0)]
        stats = dissent.summary_stats(obs, dissent.aggregate_panel(obs))
        assert stats["hd_individual"]["sd"] == 0.0
        assert stats["hd_individual"]["degenerate"] is True

    def test_constant_scores_have_zero_sd(self):
        obs = [dissent.DissentObservation("m", f"p{i}", 0.25, 0) for i in range(5)]
        stats = dissent.summary_stats(obs, dissent.aggregate_panel(obs))
        assert stats["hd_individual"]["sd"] == 0.0

    def test_no_meeting_is_unanimous_no_on_fixture(self):
        meetings, _ = synthetic.vote_fixture(seed=0)
        rows = synthetic.score_fixture(meetings, seed=0)
        panel = [dissent.DissentObservation(r["meeting_id"], r["member_id"], r["hd"], r["v"])
                 for r in rows]
        for agg in dissent.aggregate_panel(panel):
            assert 0.0 <= agg.V < 1.0
