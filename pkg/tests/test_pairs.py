import json

import pytest
from hypothesis import given, settings, strategies as st

from lexalign.dictionary import build_dictionary
from lexalign.errors import KindMismatchError, LanguageMismatchError, ParseError
from lexalign.pairs import (
    BI_DIRECT,
    BI_INDIRECT,
    BI_STRONG,
    MONO_STRONG,
    PairKind,
    PairSet,
    Scope,
    Tier,
    WordPair,
    exclude_pairs,
    extract_strong_pairs,
    induce_direct_pairs,
    induce_indirect_pairs,
    induce_tiers,
    pair_statistics,
    read_pairs,
    restrict_to_vocab,
    write_pairs,
)
from oracles import direct_oracle, indirect_oracle, random_instance, strong_oracle, tiers_oracle

EN_FR = ("en", "fr")


def bi(*pairs):
    return PairSet(BI_STRONG, EN_FR, frozenset(pairs))


def mono(lang, *pairs):
    return PairSet(MONO_STRONG, (lang, lang), frozenset(pairs))


@pytest.fixture
def toy():
    d_en_fr = build_dictionary("en", "fr", [("car", ["véhicule", "roues"]), ("dog", ["animal"])])
    d_fr_en = build_dictionary("fr", "en", [("véhicule", ["car", "machine"]), ("animal", ["creature"])])
    return d_en_fr, d_fr_en


class TestStrongPairs:
    def test_toy(self, toy):
        s = extract_strong_pairs(*toy)
        assert set(s) == {("car", "véhicule")}
        assert s.kind == BI_STRONG
        assert s.langs[0].code == "en"

    def test_empty(self):
        empty_ij = build_dictionary("en", "fr", [])
        empty_ji = build_dictionary("fr", "en", [])
        assert len(extract_strong_pairs(empty_ij, empty_ji)) == 0

    def test_language_mismatch(self, toy):
        with pytest.raises(LanguageMismatchError):
            extract_strong_pairs(toy[0], toy[0])

    def test_monolingual_excludes_self_pairs(self):
        d = build_dictionary("en", "en", [("car", ["car", "auto"]), ("auto", ["car"])])
        s = extract_strong_pairs(d, d)
        assert s.kind == MONO_STRONG
        assert set(s) == {("auto", "car")}
        assert ("car", "auto") in s

    def test_monotone_when_adding_entry(self, toy):
        before = set(extract_strong_pairs(*toy))
        grown = build_dictionary("en", "fr", [("car", ["véhicule", "roues"]), ("dog", ["animal"]),
                                              ("machine", ["véhicule"])])
        assert before <= set(extract_strong_pairs(grown, toy[1]))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10**6))
    def test_symmetry(self, seed):
        d_ij, d_ji, _, _ = random_instance(seed, max_words=40)
        forward = set(extract_strong_pairs(d_ij, d_ji))
        backward = set(extract_strong_pairs(d_ji, d_ij))
        assert forward == {(b, a) for a, b in backward}


class TestDirectPairs:
    def test_pivot(self):
        out = induce_direct_pairs(mono("en", ("automobile", "car")), bi(("car", "véhicule")))
        assert set(out) == {("automobile", "véhicule")}
        assert out.kind == BI_DIRECT

    def test_no_pivots(self):
        assert len(induce_direct_pairs(PairSet.empty(MONO_STRONG, ("en", "en")), bi(("car", "véhicule")))) == 0

    def test_disjoint_from_strong(self):
        out = induce_direct_pairs(mono("en", ("car", "auto")), bi(("car", "véhicule"), ("auto", "véhicule")))
        assert len(out) == 0

    def test_kind_mismatch(self):
        with pytest.raises(KindMismatchError):
            induce_direct_pairs(bi(("car", "véhicule")), bi(("car", "véhicule")))

    def test_pivot_language_mismatch(self):
        with pytest.raises(LanguageMismatchError):
            induce_direct_pairs(mono("fr", ("voiture", "véhicule")), bi(("car", "véhicule")))


class TestIndirectPairs:
    def test_pivot_pair(self):
        out = induce_indirect_pairs(mono("en", ("automobile", "car")), mono("fr", ("voiture", "véhicule")),
                                    bi(("car", "véhicule")))
        assert set(out) == {("automobile", "voiture")}
        assert out.kind == BI_INDIRECT

    def test_empty_bilingual(self):
        out = induce_indirect_pairs(mono("en", ("automobile", "car")), mono("fr", ("voiture", "véhicule")),
                                    PairSet.empty(BI_STRONG, EN_FR))
        assert len(out) == 0

    def test_candidate_equal_to_strong_is_dropped(self):
        # (auto, voiture) is reachable through the pivot (car, véhicule) but is already strong
        out = induce_indirect_pairs(mono("en", ("auto", "car")), mono("fr", ("voiture", "véhicule")),
                                    bi(("car", "véhicule"), ("auto", "voiture")))
        assert len(out) == 0

    def test_candidate_equal_to_direct_is_dropped(self):
        strong = bi(("car", "véhicule"), ("car", "voiture"))
        m_en = mono("en", ("auto", "car"))
        m_fr = mono("fr", ("voiture", "véhicule"))
        direct = induce_direct_pairs(m_en, strong)
        assert ("auto", "voiture") in direct
        assert ("auto", "voiture") not in induce_indirect_pairs(m_en, m_fr, strong)

    def test_kind_mismatch(self):
        with pytest.raises(KindMismatchError):
            induce_indirect_pairs(mono("en", ("a", "b")), bi(("a", "x")), bi(("a", "x")))


class TestTiers:
    def test_union_includes_pivots_on_both_sides(self):
        tiers = induce_tiers(bi(("car", "véhicule")), mono("en", ("automobile", "car")),
                             mono("fr", ("voiture", "véhicule")))
        assert set(tiers.strong) == {("car", "véhicule")}
        assert set(tiers.direct) == {("automobile", "véhicule"), ("car", "voiture")}
        assert set(tiers.indirect) == {("automobile", "voiture")}

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_oracle(self, seed):
        d_ij, d_ji, m_i, m_j = random_instance(seed, max_words=60)
        strong = extract_strong_pairs(d_ij, d_ji)
        mono_i = extract_strong_pairs(m_i, m_i)
        mono_j = extract_strong_pairs(m_j, m_j)
        assert set(strong) == strong_oracle(d_ij, d_ji)
        assert set(mono_i) == strong_oracle(m_i, m_i)
        direct = induce_direct_pairs(mono_i, strong)
        assert set(direct) == direct_oracle(set(mono_i), set(strong))
        assert set(induce_indirect_pairs(mono_i, mono_j, strong)) == indirect_oracle(
            set(mono_i), set(mono_j), set(strong), set(direct))
        tiers = induce_tiers(strong, mono_i, mono_j)
        assert tuple(set(t) for t in tiers) == tiers_oracle(set(strong), set(mono_i), set(mono_j))
        s, d, i = (set(t) for t in tiers)
        assert not (s & d or s & i or d & i)


class TestExclude:
    def test_empty_banned_is_identity(self):
        p = bi(("car", "véhicule"))
        assert exclude_pairs(p, set()) == p

    def test_removes(self):
        p = bi(("car", "véhicule"), ("dog", "chien"))
        assert set(exclude_pairs(p, {("car", "véhicule")})) == {("dog", "chien")}

    def test_reversed_orientation(self):
        p = bi(("car", "véhicule"))
        assert len(exclude_pairs(p, {WordPair("véhicule", "car")})) == 0

    @given(st.sets(st.tuples(st.sampled_from("abcd"), st.sampled_from("wxyz"))),
           st.sets(st.tuples(st.sampled_from("abcdwxyz"), st.sampled_from("abcdwxyz"))))
    def test_output_disjoint_from_banned(self, pairs, banned):
        out = exclude_pairs(bi(*pairs), banned)
        for a, b in out:
            assert (a, b) not in banned and (b, a) not in banned


def test_restrict_to_vocab():
    p = bi(("car", "véhicule"), ("dog", "chien"))
    assert set(restrict_to_vocab(p, {"car", "dog"}, {"véhicule"})) == {("car", "véhicule")}


class TestStatistics:
    def test_empty(self):
        e = PairSet.empty
        stats = pair_statistics(e(BI_STRONG, EN_FR), e(BI_DIRECT, EN_FR), e(BI_INDIRECT, EN_FR), [])
        assert (stats.n_definitions, stats.n_strong, stats.n_direct, stats.n_indirect) == (0, 0, 0, 0)

    def test_toy(self, toy):
        strong = extract_strong_pairs(*toy)
        m_en = mono("en", ("automobile", "car"))
        m_fr = mono("fr", ("voiture", "véhicule"))
        direct = induce_direct_pairs(m_en, strong)
        indirect = induce_indirect_pairs(m_en, m_fr, strong)
        stats = pair_statistics(strong, direct, indirect, toy)
        assert stats.to_dict() == {"n_definitions": 4, "n_strong": 1, "n_direct": 1, "n_indirect": 1}
        assert json.loads(stats.to_json())["n_strong"] == 1

    def test_language_mismatch(self):
        e = PairSet.empty
        with pytest.raises(LanguageMismatchError):
            pair_statistics(e(BI_STRONG, EN_FR), e(BI_DIRECT, ("en", "es")), e(BI_INDIRECT, EN_FR))


class TestPairKind:
    def test_induced_must_be_bilingual(self):
        with pytest.raises(KindMismatchError):
            PairKind(Tier.DIRECT, Scope.MONOLINGUAL)

    def test_scope_must_match_languages(self):
        with pytest.raises(KindMismatchError):
            PairSet(BI_STRONG, ("en", "en"), frozenset())


class TestPairFiles:
    def test_round_trip(self, tmp_path):
        p = PairSet(BI_DIRECT, EN_FR, frozenset({WordPair("automobile", "véhicule"), WordPair("a", "b")}))
        write_pairs(tmp_path / "d.tsv", p)
        lines = (tmp_path / "d.tsv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "left_word\tleft_lang\tright_word\tright_lang\ttier"
        assert lines[1] == "a\ten\tb\tfr\tdirect"
        assert read_pairs(tmp_path / "d.tsv") == p

    def test_empty_needs_kind(self, tmp_path):
        write_pairs(tmp_path / "e.tsv", PairSet.empty(BI_STRONG, EN_FR))
        with pytest.raises(ParseError):
            read_pairs(tmp_path / "e.tsv")
        assert read_pairs(tmp_path / "e.tsv", EN_FR, "strong") == PairSet.empty(BI_STRONG, EN_FR)

    def test_bad_row(self, tmp_path):
        (tmp_path / "x.tsv").write_text("a\ten\tb\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_pairs(tmp_path / "x.tsv")
