from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scholarlink.errors import InvalidMention, ParseError, SchemaError
from scholarlink.profile import (EducationSegment, HonorEntry, Language, Origin, ProfessionalSegment,
                                 Provenance, ScholarMention, ScholarProfile, merge_profiles,
                                 parse_outcome, parse_profile, profile_from_dict, profile_to_dict,
                                 read_profiles, same_structure, serialize_profile, write_profiles)
from scholarlink import text as T
from scholarlink.text import match_normalize

from conftest import sample_text


# -- text helpers -----------------------------------------------------------

def test_match_normalize_keeps_emails_whole():
    assert match_normalize("Mail: QiangZ@RCEES.ac.cn, now!") == "mail qiangz@rcees.ac.cn now"


def test_contains_token_seq_respects_latin_boundaries():
    assert T.contains_token_seq("lin jing lab", "lin jing")
    assert not T.contains_token_seq("lin jingwei lab", "lin jing")
    assert T.contains_token_seq("复旦大学化学系", "化学系")


def test_content_tokens_drop_stopwords_and_use_cjk_bigrams():
    assert T.content_tokens("Drinking Water and the City") == {"drinking", "water", "city"}
    assert T.content_tokens("柔性电子") == {"柔性", "性电", "电子"}


def test_guess_language():
    assert T.guess_language("清华大学 自动化系 Lei Wang") == "zh"
    assert T.guess_language("Department of Automation") == "en"
    assert T.guess_language("2024 - 2025") == "none"


# -- samples ----------------------------------------------------------------

@pytest.mark.parametrize("name", ["zhang_brief.json", "zhang_detailed.json", "qiang_full.json"])
def test_verbatim_samples_parse_and_round_trip(name):
    p = parse_profile(sample_text(name))
    assert p.name
    again = parse_profile(serialize_profile(p))
    assert again == p
    assert same_structure(again, p)


def test_null_outcome_sample_is_absent():
    assert parse_outcome(sample_text("qiang_null.json")) is None
    assert parse_outcome("null") is None


def test_sample_values(qiang_profile):
    p = qiang_profile
    assert p.email == ("qiangz@rcees.ac.cn",)
    assert p.education_track[0] == EducationSegment("Tongji University, Department of Environmental Engineering",
                                                    "1994 - 1997", None, "Master")
    assert p.professional_track[-1].title is None  # serialized "null"
    assert len(p.keywords) == 5


def test_null_string_round_trips_as_none():
    p = profile_from_dict({"name": "X", "workplace": "null", "keywords": [], "education_track": [
        {"fromto": "null", "school": "A University", "major": "null", "scholar": "PhD"}]})
    assert p.workplace is None and p.education_track[0].fromto is None
    out = profile_to_dict(p)
    assert out["workplace"] == "null" and out["education_track"][0]["major"] == "null"


def test_missing_keys_default_to_empty():
    p = profile_from_dict({"name": "Only Name"})
    assert p.keywords == () and p.workplace is None and p.is_empty()


@pytest.mark.parametrize("bad", [
    [],
    {"name": 3},
    {"keywords": "not a list"},
    {"keywords": [1]},
    {"education_track": [{"fromto": "2001"}]},
    {"professional_track": ["x"]},
    {"honor_track": [{"award": ""}]},
    {"_meta": {"language": "klingon"}},
    {"_meta": {"provenance": [{"retrieved_at": "x"}]}},
])
def test_schema_errors(bad):
    with pytest.raises(SchemaError):
        profile_from_dict(bad)


def test_malformed_text_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_profile("{not json")


def test_meta_envelope_round_trip():
    p = ScholarProfile(name="A", workplace="B University", provenance=(Provenance("https://x.org/a", "t"),),
                       language=Language.NATIVE)
    d = profile_to_dict(p)
    assert d["_meta"] == {"provenance": [{"url": "https://x.org/a", "retrieved_at": "t"}], "language": "native"}
    assert profile_from_dict(d) == p


def test_keywords_and_emails_dedupe_case_insensitively():
    p = ScholarProfile(keywords=("Robotics", "robotics ", "Vision"), email=("A@b.cn", "a@B.cn"))
    assert p.keywords == ("Robotics", "Vision") and p.email == ("A@b.cn",)


def test_store_round_trip(tmp_path, qiang_profile, zhang_pair):
    path = tmp_path / "profiles.jsonl"
    write_profiles(path, [qiang_profile, *zhang_pair])
    assert list(read_profiles(path)) == [qiang_profile, *zhang_pair]
    path.write_text(path.read_text() + "{oops\n")
    with pytest.raises(ParseError, match=":4:"):
        list(read_profiles(path))


# -- mentions ---------------------------------------------------------------

def test_mention_validation():
    with pytest.raises(InvalidMention):
        ScholarMention(raw_name="  ", affiliation="x")
    with pytest.raises(InvalidMention):
        ScholarMention(raw_name="Li Wei", affiliation="x", email="not-an-email")
    m = ScholarMention(raw_name="Li  Wei", affiliation="X University", source_id="p1")
    assert m.id == "p1:Li Wei" and m.origin is Origin.PAPER_AUTHOR
    assert ScholarMention.from_dict(m.to_dict()) == m
    with pytest.raises(InvalidMention):
        ScholarMention.from_dict({"affiliation": "x"})


# -- property tests ---------------------------------------------------------

text = st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=20).filter(
    lambda s: s.strip() and s != "null")
maybe = st.one_of(st.none(), text)

profiles = st.builds(
    ScholarProfile,
    name=maybe,
    workplace=maybe,
    email=st.lists(st.from_regex(r"[a-z]{1,6}@[a-z]{1,6}\.(cn|org)", fullmatch=True), max_size=2).map(tuple),
    keywords=st.lists(text, max_size=4).map(tuple),
    education_track=st.lists(st.builds(EducationSegment, school=text, fromto=maybe, major=maybe,
                                       scholar=maybe), max_size=3).map(tuple),
    professional_track=st.lists(st.builds(ProfessionalSegment, agency=text, fromto=maybe, title=maybe),
                                max_size=3).map(tuple),
    honor_track=st.lists(st.builds(HonorEntry, award=text, time=maybe), max_size=2).map(tuple),
    language=st.one_of(st.none(), st.sampled_from(Language)),
)


@settings(max_examples=150, deadline=None)
@given(profiles)
def test_serialize_parse_round_trip(p):
    again = parse_profile(serialize_profile(p))
    assert again == p
    assert json.loads(serialize_profile(again)) == profile_to_dict(p)


@settings(max_examples=100, deadline=None)
@given(profiles, profiles)
def test_merge_is_commutative(a, b):
    assert same_structure(merge_profiles(a, b), merge_profiles(b, a))


@settings(max_examples=100, deadline=None)
@given(profiles)
def test_merge_is_idempotent(a):
    # merging only normalizes: duplicates inside one profile collapse
    normalized = merge_profiles(a, ScholarProfile())
    assert same_structure(merge_profiles(a, a), normalized)
    assert same_structure(merge_profiles(normalized, normalized), normalized)


@settings(max_examples=60, deadline=None)
@given(profiles, profiles, profiles)
def test_merge_is_associative_up_to_order(a, b, c):
    assert same_structure(merge_profiles(merge_profiles(a, b), c), merge_profiles(a, merge_profiles(b, c)))


def test_merge_prefers_fuller_scalars():
    a = ScholarProfile(name="Zhang Yihui", workplace=None, keywords=("A",))
    b = ScholarProfile(name="Zhang Y", workplace="Tsinghua University", keywords=("B", "a"))
    m = merge_profiles(a, b)
    assert m.name == "Zhang Yihui" and m.workplace == "Tsinghua University"
    assert m.keywords == ("A", "B")
    assert merge_profiles(ScholarProfile(language=Language.NATIVE),
                          ScholarProfile(language=Language.ROMANIZED)).language is Language.MIXED
