import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fomcdissent import corpus, synthetic
from fomcdissent.corpus import (
    EMB_DIM,
    EMB_ROWS,
    EmbeddedTranscript,
    filter_econ_sentences,
    join_panel,
    load_embeddings,
    write_embeddings,
)
from fomcdissent.errors import (
    ConfigError,
    CorruptionError,
    DataValueError,
    FormatError,
    ValidationError,
)

SAMPLES = "data/samples"


def make_record(meeting, member, n_sentences, rng):
    emb = np.zeros((EMB_ROWS, EMB_DIM), dtype=np.float32)
    emb[:n_sentences] = rng.normal(0, 1, (n_sentences, EMB_DIM)).astype(np.float32)
    return EmbeddedTranscript(meeting_id=meeting, member_id=member,
                              embedding=emb, n_sentences=n_sentences)


class TestEmbeddingFile:
    def test_padding_definition(self, tmp_path):
        rng = np.random.default_rng(0)
        rec = make_record("1999-02-03", "M001", 2, rng)
        path = tmp_path / "one.femb"
        write_embeddings(path, [rec])
        loaded = load_embeddings(path)
        assert len(loaded) == 1
        out = loaded[0]
        assert out.n_sentences == 2
        assert np.any(out.embedding[:2])
        assert not np.any(out.embedding[2:])

    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        records = [make_record("2000-01-05", f"M{i:03d}", int(rng.integers(1, 20)), rng)
                   for i in range(10)]
        path = tmp_path / "ten.femb"
        write_embeddings(path, records)
        loaded = load_embeddings(path)
        for a, b in zip(records, loaded):
            assert a.meeting_id == b.meeting_id and a.member_id == b.member_id
            assert a.n_sentences == b.n_sentences
            assert a.embedding.tobytes() == b.embedding.tobytes()
        path2 = tmp_path / "again.femb"
        write_embeddings(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()

    def test_count_mismatch_is_corruption(self, tmp_path):
        rng = np.random.default_rng(2)
        path = tmp_path / "bad.femb"
        write_embeddings(path, [make_record("m", "a", 1, rng), make_record("m", "b", 1, rng)])
        data = bytearray(path.read_bytes())
        data[8:12] = (3).to_bytes(4, "little")  # declare 3 records, provide 2
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptionError):
            load_embeddings(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "not.femb"
        path.write_bytes(b"BADMAGIC" + b"\x00" * 8)
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_non_finite_rejected(self, tmp_path):
        rng = np.random.default_rng(3)
        rec = make_record("m", "a", 3, rng)
        rec.embedding = rec.embedding.copy()
        rec.embedding[1, 5] = np.nan
        path = tmp_path / "nan.femb"
        with pytest.raises(DataValueError):
            write_embeddings(path, [rec])

    def test_nonzero_padding_rejected(self, tmp_path):
        rng = np.random.default_rng(4)
        rec = make_record("m", "a", 3, rng)
        rec.embedding = rec.embedding.copy()
        rec.embedding[10, 0] = 1.0
        with pytest.raises(DataValueError):
            rec.validate()


def naive_filter(sentences, lexicon):
    """Brute-force scan: substring match plus manual boundary checks."""
    out = []
    for s in sentences:
        low = s.lower()
        hit = False
        for term in lexicon:
            t = term.lower()
            start = 0
            while True:
                i = low.find(t, start)
                if i < 0:
                    break
                before_ok = i == 0 or not (low[i - 1].isalnum() or low[i - 1] == "_")
                j = i + len(t)
                after_ok = j >= len(low) or not (low[j].isalnum() or low[j] == "_")
                if before_ok and after_ok:
                    hit = True
                    break
                start = i + 1
            if hit:
                break
        if hit:
            out.append(s)
    return out


WORDS = ["inflation", "cat", "rates", "GDP", "dog", "economy", "disinflation",
         "the", "growth", "xyz", "market"]


class TestFilterEconSentences:
    def test_direct_definition(self):
        got = filter_econ_sentences(["Thank you, Chair.", "Inflation is rising."],
                                    {"inflation"})
        assert got == ["Inflation is rising."]

    def test_all_filtered(self):
        assert filter_econ_sentences(["Good morning.", "Thanks."], {"inflation"}) == []

    def test_empty_lexicon(self):
        with pytest.raises(ConfigError):
            filter_econ_sentences(["a"], set())

    def test_word_boundaries(self):
        # "disinflation" must not match the term "inflation"
        got = filter_econ_sentences(["Disinflation persisted."], {"inflation"})
        assert got == []

    def test_phrase_terms(self):
        got = filter_econ_sentences(["The federal funds rate was left unchanged."],
                                    {"federal funds rate"})
        assert len(got) == 1

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.sampled_from(WORDS), min_size=1, max_size=8), max_size=20),
           st.sets(st.sampled_from(["inflation", "rates", "economy", "growth"]),
                   min_size=1, max_size=3))
    def test_matches_naive_scan(self, sentence_words, lexicon):
        sentences = [" ".join(w) + "." for w in sentence_words]
        assert filter_econ_sentences(sentences, lexicon) == naive_filter(sentences, lexicon)

    def test_hundred_random_sentences_vs_oracle(self):
        rng = np.random.default_rng(9)
        sentences = [" ".join(rng.choice(WORDS, size=rng.integers(2, 9)))
                     for _ in range(100)]
        lexicon = {"inflation", "market", "federal funds rate"}
        assert filter_econ_sentences(sentences, lexicon) == naive_filter(sentences, lexicon)


class TestMeetingValidation:
    def test_chair_must_attend_and_vote_yes(self):
        from datetime import date
        rec = corpus.MeetingRecord("m", date(2000, 1, 1), "C1",
                                   [("M1", 0)], "unchanged", False)
        with pytest.raises(ValidationError):
            rec.validate()
        rec = corpus.MeetingRecord("m", date(2000, 1, 1), "C1",
                                   [("C1", 1), ("M1", 0)], "unchanged", False)
        with pytest.raises(ValidationError):
            rec.validate()

    def test_duplicate_attendee(self):
        from datetime import date
        rec = corpus.MeetingRecord("m", date(2000, 1, 1), "C1",
                                   [("C1", 0), ("M1", 0), ("M1", 1)], "unchanged", False)
        with pytest.raises(ValidationError):
            rec.validate()


class TestJoinPanel:
    def build(self, rng, with_chair=True):
        from dataclasses import replace
        from datetime import date
        votes = [("C1", 0)] + [(f"M{i}", 1 if i == 3 else 0) for i in range(9)]
        meeting = corpus.MeetingRecord("2001-01-31", date(2001, 1, 31), "C1",
                                       votes, "unchanged", False).validate()
        _, fixture_profiles = synthetic.vote_fixture(seed=1)
        template = next(iter(fixture_profiles.values()))
        profiles = {mid: replace(template, member_id=mid) for mid, _ in votes}
        embeddings = []
        if with_chair:
            embeddings.append(make_record("2001-01-31", "C1", 3, rng))
        embeddings += [make_record("2001-01-31", f"M{i}", 2, rng) for i in range(9)]
        return meeting, profiles, embeddings

    def test_nine_observations(self):
        rng = np.random.default_rng(5)
        meeting, profiles, embeddings = self.build(rng)
        result = join_panel([meeting], profiles, embeddings)
        assert len(result.observations) == 9
        assert not result.warnings and not result.rejects
        assert all(o.chair.member_id == "C1" for o in result.observations)

    def test_missing_chair_drops_meeting(self):
        rng = np.random.default_rng(6)
        meeting, profiles, embeddings = self.build(rng, with_chair=False)
        result = join_panel([meeting], profiles, embeddings)
        assert len(result.observations) == 0
        assert len(result.warnings) == 1
        # the member embeddings become orphans of a dropped meeting
        assert all(r["reason"] == "orphan_embedding" for r in result.rejects)

    def test_orphan_embedding_reported(self):
        rng = np.random.default_rng(7)
        meeting, profiles, embeddings = self.build(rng)
        embeddings.append(make_record("2001-01-31", "GHOST", 2, rng))
        result = join_panel([meeting], profiles, embeddings)
        assert {r["member_id"] for r in result.rejects} == {"GHOST"}

    def test_join_is_deterministic(self):
        rng = np.random.default_rng(8)
        meeting, profiles, embeddings = self.build(rng)
        r1 = join_panel([meeting], profiles, embeddings)
        r2 = join_panel([meeting], profiles, embeddings)
        ids1 = [(o.meeting_id, o.member_id, o.vote) for o in r1.observations]
        ids2 = [(o.meeting_id, o.member_id, o.vote) for o in r2.observations]
        assert ids1 == ids2

    def test_never_pairs_across_meetings(self):
        meetings, profiles = synthetic.vote_fixture(seed=0)
        rng = np.random.default_rng(11)
        emb = []
        for m in meetings[:5]:
            emb.append(make_record(m.meeting_id, m.chair_id, 2, rng))
            for mid, _ in m.non_chair_votes():
                emb.append(make_record(m.meeting_id, mid, 2, rng))
        result = join_panel(meetings[:5], profiles, emb)
        assert all(o.chair.meeting_id == o.meeting_id for o in result.observations)


class TestVoteFixture:
    def test_historical_no_share(self):
        meetings, _ = synthetic.vote_fixture(seed=0)
        votes = [v for m in meetings for _, v in m.non_chair_votes()]
        share = sum(votes) / len(votes)
        assert abs(share - 0.0693) < 0.0001
        assert len(meetings) == 370
        assert len(votes) == 3950

    def test_fixture_join_count(self):
        # full-scale join: every voter embedded via a shared zero-copy pool
        meetings, profiles = synthetic.vote_fixture(seed=0)
        pool = np.zeros((EMB_ROWS, EMB_DIM), dtype=np.float32)
        pool[:2] = 0.5
        emb = []
        for m in meetings:
            emb.append(EmbeddedTranscript(m.meeting_id, m.chair_id, pool, 2))
            for mid, _ in m.non_chair_votes():
                emb.append(EmbeddedTranscript(m.meeting_id, mid, pool, 2))
        result = join_panel(meetings, profiles, emb)
        assert len(result.observations) == 3950


class TestCsvLoaders:
    def test_golden_samples_load(self):
        meetings = corpus.load_meetings(f"{SAMPLES}/meetings.csv", f"{SAMPLES}/votes.csv")
        assert len(meetings) == 2
        profiles = corpus.load_profiles(f"{SAMPLES}/profiles.csv")
        assert len(profiles) == 7
        tealbook = corpus.load_tealbook(f"{SAMPLES}/tealbook.csv")
        assert len(tealbook) == 4
        sep = corpus.load_sep(f"{SAMPLES}/sep.csv")
        assert len(sep) == 18
        prices = corpus.load_prices(f"{SAMPLES}/prices.csv")
        assert set(prices) == {"SPY", "VIX"}
        opp = corpus.load_opp(f"{SAMPLES}/opp.csv")
        assert len(opp.dates) == 2

    def test_core_cpi_availability_rule(self, tmp_path):
        p = tmp_path / "tb.csv"
        p.write_text("meeting_id,variable,b2,b1,f0,f1,f2\n"
                     "1980-05-19,core_cpi,2,2,2,2,2\n")
        with pytest.raises(ValidationError):
            corpus.load_tealbook(p)

    def test_sep_long_run_inflation_rule(self, tmp_path):
        p = tmp_path / "sep.csv"
        p.write_text("meeting_id,variable,horizon,value\n"
                     "2013-04-24,pce_inflation,long_run,2.0\n")
        with pytest.raises(ValidationError):
            corpus.load_sep(p)

    def test_most_recent_meeting_join(self):
        from datetime import date
        pairs = [("a", date(2000, 1, 1)), ("b", date(2000, 6, 1)), ("c", date(2001, 1, 1))]
        assert corpus.most_recent_meeting_on_or_before(pairs, date(2000, 7, 4)) == "b"
        assert corpus.most_recent_meeting_on_or_before(pairs, date(2000, 6, 1)) == "b"
        assert corpus.most_recent_meeting_on_or_before(pairs, date(1999, 1, 1)) is None
