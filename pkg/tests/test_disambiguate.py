from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scholarlink.disambiguate import (Disambiguator, Verdict, best_assignment, canonical_title, compare,
                                      institution_units, lexical_institution_match, lexical_keyword_tier,
                                      score_institution, score_keywords, score_segments, spans_overlap,
                                      titles_equivalent, year_span)
from scholarlink.profile import EducationSegment, ProfessionalSegment, ScholarProfile

from oracles import constructed_pair, max_pairing, related_judge


# -- institutions -----------------------------------------------------------

def test_institution_units_prefer_top_level():
    assert institution_units("Center for Flexible Electronics Technology, Tsinghua University") == \
        ["Tsinghua University"]
    assert institution_units("School of Physics, Lab of Optics") == ["School of Physics", "Lab of Optics"]
    assert institution_units("清华大学 自动化系") == ["清华大学 自动化系"]


@pytest.mark.parametrize("x, y, expected", [
    ("Tsinghua University", "Center for Flexible Electronics Technology, Tsinghua University", True),
    ("University of Cambridge", "Tongji University", False),
    ("Peking University", "Peking University Health Science Center", True),
    ("清华大学", "清华大学 自动化系", True),
    ("复旦大学", "清华大学", False),
    ("清华大学", "Tsinghua University", None),
    ("University", "University", False),  # generic words alone never match
    (None, "Tsinghua University", False),
])
def test_lexical_institution_match(x, y, expected):
    assert lexical_institution_match(x, y) is expected


def test_cross_script_institutions_go_to_the_judge():
    calls = []

    def judge(a, b):
        calls.append((a, b))
        return True

    a = ScholarProfile(name="A", workplace="清华大学")
    b = ScholarProfile(name="B", workplace="Tsinghua University")
    assert Disambiguator().score_institution(a, b) == 0
    assert Disambiguator(institution_judge=judge).score_institution(a, b) == 2
    assert calls == [("清华大学", "Tsinghua University")]


# -- segments ---------------------------------------------------------------

@pytest.mark.parametrize("fromto, span", [
    ("2001 - 2005", (2001.0, 2005.0)),
    ("2019-present", (2019.0, math.inf)),
    ("2010年至今", (2010.0, math.inf)),
    ("null", None),
    (None, None),
    ("recently", None),
])
def test_year_span(fromto, span):
    assert year_span(fromto) == span


def test_spans_overlap():
    assert spans_overlap("2001 - 2005", "2005 - 2010")
    assert not spans_overlap("2001 - 2004", "2005 - 2010")
    assert spans_overlap("2015 - present", "2020 - 2021")
    assert spans_overlap(None, "2020 - 2021")  # unknown years do not rule a match out


def test_titles():
    assert canonical_title("Full Professor") == canonical_title("professor")
    assert titles_equivalent("Assistant Professor", "assistant professor")
    assert not titles_equivalent("Professor", "Lecturer")
    assert titles_equivalent(None, "Lecturer")


def test_segments_match_same_type_only():
    d = Disambiguator()
    edu = EducationSegment("Tongji University", "1994 - 1997", None, "Master")
    job = ProfessionalSegment("Tongji University", "1994 - 1997", None)
    assert d.segments_match(edu, edu)
    assert not d.segments_match(edu, job)
    assert not d.segments_match(job, ProfessionalSegment("Tongji University", "2001 - 2003", None))


# -- keywords ---------------------------------------------------------------

@pytest.mark.parametrize("x, y, tier", [
    ("Machine Learning", "machine  learning", 4),
    ("robotics", "Soft Robotics", 3),
    ("flexible electronics", "flexible microsystems", 2),
    ("robotics", "photonics", 0),
    ("the", "of", 0),
])
def test_lexical_keyword_tier(x, y, tier):
    assert lexical_keyword_tier(x, y) == tier


def test_judge_only_upgrades_unrelated_keywords_to_tier_one():
    judge = related_judge({frozenset(("robotics", "photonics")), frozenset(("robotics", "soft robotics"))})
    d = Disambiguator(keyword_judge=judge)
    assert d.keyword_tier("robotics", "photonics") == 1
    assert d.keyword_tier("robotics", "soft robotics") == 3


def test_keyword_cap():
    a = ScholarProfile(name="A", keywords=("x1", "x2", "x3"))
    assert Disambiguator().score_keywords(a, a) == 12
    capped = Disambiguator(keyword_cap=5)
    assert capped.score_keywords(a, a) == 5 and capped.score(a, a).keyword_points == 5


# -- assignment -------------------------------------------------------------

def test_optimal_pairing_beats_greedy():
    # greedy takes the 3 and is left with 0; the optimum pairs the two 2s
    weights = [[3, 2], [2, 0]]
    assert sum(weights[i][j] for i, j in best_assignment(weights)) == 4 == max_pairing(weights)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 6).flatmap(lambda r: st.integers(1, 6).flatmap(
    lambda c: st.lists(st.lists(st.integers(0, 4), min_size=c, max_size=c), min_size=r, max_size=r))))
def test_best_assignment_matches_brute_force(weights):
    pairs = best_assignment(weights)
    assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})
    assert sum(weights[i][j] for i, j in pairs) == max_pairing(weights)


def test_best_assignment_empty():
    assert best_assignment([]) == [] and best_assignment([[]]) == []


# -- decisions --------------------------------------------------------------

def test_zhang_pair_scores_below_threshold(zhang_pair):
    d = compare(*zhang_pair)
    assert d.score.institution_points == 2
    assert d.score.segment_points == 0
    assert d.score.keyword_points == 2  # "flexible" is the only shared token
    assert d.score.total == 4 and d.verdict is Verdict.DIFFERENT


def test_qiang_self_comparison(qiang_profile):
    p = qiang_profile
    expected = 2 + 3 * len(p.segments) + 4 * len(p.keywords)
    d = compare(p, p)
    assert d.score.total == expected == 40 and d.verdict is Verdict.SAME
    assert any(line.startswith("total 40 >=") for line in d.rationale)


def test_module_level_scorers(qiang_profile):
    p = qiang_profile
    assert (score_institution(p, p), score_segments(p, p), score_keywords(p, p)) == (2, 18, 20)


def test_undecidable():
    p = ScholarProfile(name="A", workplace="X University", keywords=("k",))
    assert compare(None, p).verdict is Verdict.UNDECIDABLE
    assert compare(p, ScholarProfile(name="Only Name")).verdict is Verdict.UNDECIDABLE
    assert compare(p, None).score.total == 0


@pytest.mark.parametrize("total_tiers, verdict", [([4, 2], Verdict.DIFFERENT), ([4, 3], Verdict.SAME)])
def test_threshold_boundary(total_tiers, verdict):
    a, b, expected, judged = constructed_pair(random.Random(0), False, 0, total_tiers)
    d = Disambiguator(keyword_judge=related_judge(judged)).compare(a, b)
    assert d.score.total == sum(expected) and d.verdict is verdict


def test_threshold_is_configurable(zhang_pair):
    assert compare(*zhang_pair, threshold=4).verdict is Verdict.SAME
    with pytest.raises(ValueError):
        Disambiguator(threshold=0)


def test_decision_serializes(zhang_pair):
    out = compare(*zhang_pair).to_dict()
    assert out["verdict"] == "different" and out["total"] == 4 and out["threshold"] == 7
    assert out["keyword_pairs"] and out["rationale"][-1] == "total 4 < 7"


def test_with_llm_asks_with_sorted_slots():
    seen = []

    class FakeLLM:
        def complete_structured(self, template, slots, provider=None):
            seen.append((template, slots["first"], slots["second"]))

            class Out:
                value = {"verdict": True}
            return Out()

    d = Disambiguator.with_llm(FakeLLM())
    assert d.keyword_tier("zeta", "alpha") == 1
    assert d.institutions_match("清华大学", "Tsinghua University")
    assert seen == [("keyword_related", "alpha", "zeta"),
                    ("institution_equivalent", "Tsinghua University", "清华大学")]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans(), st.integers(0, 3),
       st.lists(st.sampled_from([0, 1, 2, 3, 4]), max_size=4), st.integers(0, 2))
def test_score_is_symmetric_and_matches_construction(seed, inst, segments, tiers, distractors):
    a, b, expected, judged = constructed_pair(random.Random(seed), inst, segments, tiers, distractors)
    d = Disambiguator(keyword_judge=related_judge(judged))
    ab, ba = d.score(a, b), d.score(b, a)
    assert (ab.institution_points, ab.segment_points, ab.keyword_points) == expected
    assert ab.total == ba.total
