"""Point-scored profile comparison.

Scoring:

* matching institutions: 2 points
* each education/work segment found in both profiles: 3 points
* each paired research keyword: 1-4 points by relevance tier

Two profiles denote the same scholar when the total reaches the threshold
(7 by default: institution 2 + one segment 3 + a middle keyword tier 2).

Keyword tiers:

====  =============================================================
4     identical after normalization
3     one keyword's content tokens are a subset of the other's
2     at least one shared content token
1     judged related by the LLM (only asked when tiers 2-4 fail)
0     unrelated
====  =============================================================

Segments and keywords are paired one-to-one by maximum-weight assignment.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .profile import EducationSegment, ProfessionalSegment, ScholarProfile
from .text import content_tokens, fold, has_cjk, has_latin, match_normalize

DEFAULT_THRESHOLD = 7
INSTITUTION_POINTS = 2
SEGMENT_POINTS = 3

# Words marking a top-level institution, and words marking any unit.
TOP_LEVEL_WORDS = frozenset({
    "university", "universitat", "universite", "universidad", "academy", "institute",
    "polytechnic", "hospital",
})
INSTITUTION_WORDS = TOP_LEVEL_WORDS | frozenset({
    "institution", "college", "school", "center", "centre", "laboratory", "lab",
    "department", "faculty",
})
CJK_TOP_LEVEL_WORDS = ("大学", "科学院", "研究院", "研究所", "医院")
CJK_INSTITUTION_WORDS = CJK_TOP_LEVEL_WORDS + ("学院", "中心", "实验室", "系")

# Token set -> canonical degree/title, for "Ph.D." vs "PhD" vs "博士".
_TITLE_ALIASES = {
    "phd": {"phd", "ph d", "doctor", "doctorate", "doctoral", "dphil", "博士"},
    "master": {"master", "masters", "ms", "msc", "m sc", "m s", "ma", "meng", "m eng", "硕士"},
    "bachelor": {"bachelor", "bachelors", "bs", "bsc", "b sc", "b s", "ba", "beng", "b eng", "学士", "本科"},
    "postdoc": {"postdoc", "postdoctoral fellow", "postdoctoral researcher", "postdoctoral", "博士后"},
    "professor": {"professor", "full professor", "教授"},
    "associate professor": {"associate professor", "副教授"},
    "assistant professor": {"assistant professor", "助理教授"},
}
_TITLE_CANON = {alias: canon for canon, aliases in _TITLE_ALIASES.items() for alias in aliases}

_SPLIT_UNITS = re.compile(r"[,;/，、；]")
_YEAR = re.compile(r"(?<!\d)(19\d\d|20\d\d)(?!\d)")
_PRESENT = re.compile(r"present|now|current|today|至今|现在", re.I)

Judge = Callable[[str, str], bool]


class Verdict(str, enum.Enum):
    SAME = "same"
    DIFFERENT = "different"
    UNDECIDABLE = "undecidable"


@dataclass(frozen=True)
class KeywordPair:
    first: str
    second: str
    tier: int

    @property
    def points(self) -> int:
        return self.tier


@dataclass(frozen=True)
class SegmentPair:
    first: object
    second: object


@dataclass(frozen=True)
class MatchScore:
    institution_points: int = 0
    segment_points: int = 0
    keyword_points: int = 0
    segment_pairs: tuple[SegmentPair, ...] = ()
    keyword_pairs: tuple[KeywordPair, ...] = ()

    @property
    def total(self) -> int:
        return self.institution_points + self.segment_points + self.keyword_points

    def to_dict(self) -> dict:
        return {
            "institution_points": self.institution_points,
            "segment_points": self.segment_points,
            "keyword_points": self.keyword_points,
            "total": self.total,
            "keyword_pairs": [[p.first, p.second, p.tier] for p in self.keyword_pairs],
            "segment_pairs": [[_seg_label(p.first), _seg_label(p.second)] for p in self.segment_pairs],
        }


@dataclass(frozen=True)
class MatchDecision:
    score: MatchScore
    threshold: int
    verdict: Verdict
    rationale: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "threshold": self.threshold,
                **self.score.to_dict(), "rationale": list(self.rationale)}


def _seg_label(seg) -> str:
    if isinstance(seg, EducationSegment):
        return f"{seg.school} | {seg.fromto or 'null'} | {seg.scholar or 'null'}"
    return f"{seg.agency} | {seg.fromto or 'null'} | {seg.title or 'null'}"


# -- assignment -------------------------------------------------------------

def best_assignment(weights: Sequence[Sequence[int]]) -> list[tuple[int, int]]:
    """Index pairs of a maximum-weight one-to-one pairing (zero-weight pairs dropped)."""
    m = np.asarray(weights, dtype=float)
    if m.size == 0:
        return []
    rows, cols = linear_sum_assignment(m, maximize=True)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if m[r, c] > 0]


# -- institutions -----------------------------------------------------------

def _cjk_only(s: str) -> bool:
    return has_cjk(s) and not has_latin(s)


def _has_word(unit: str, words: frozenset, cjk_words: tuple) -> bool:
    return bool(content_tokens(unit) & words) or any(w in unit for w in cjk_words)


def institution_units(workplace: str) -> list[str]:
    """Comma units naming the primary institution.

    Units with a top-level word (university, academy, ...) win; failing
    that any unit with an institution word; failing that every unit.
    """
    units = [u.strip() for u in _SPLIT_UNITS.split(workplace or "") if u.strip()]
    return ([u for u in units if _has_word(u, TOP_LEVEL_WORDS, CJK_TOP_LEVEL_WORDS)]
            or [u for u in units if _has_word(u, INSTITUTION_WORDS, CJK_INSTITUTION_WORDS)]
            or units)


def _unit_contained(x: str, y: str) -> bool:
    if _cjk_only(x) and _cjk_only(y):
        cx, cy = re.sub(r"\s+", "", x), re.sub(r"\s+", "", y)
        return cx in cy or cy in cx
    tx, ty = content_tokens(x), content_tokens(y)
    small, big = (tx, ty) if len(tx) <= len(ty) else (ty, tx)
    return bool(small - INSTITUTION_WORDS) and small <= big


def lexical_institution_match(x: Optional[str], y: Optional[str]) -> Optional[bool]:
    """True/False from lexical evidence; None when the two are in different scripts."""
    if not x or not y or not match_normalize(x) or not match_normalize(y):
        return False
    if _cjk_only(x) != _cjk_only(y):
        return None
    return any(_unit_contained(ux, uy) for ux in institution_units(x) for uy in institution_units(y))


# -- segments ---------------------------------------------------------------

def year_span(fromto: Optional[str]) -> Optional[tuple[float, float]]:
    if not fromto or fold(fromto) == "null":
        return None
    years = [int(y) for y in _YEAR.findall(fromto)]
    if not years:
        return None
    lo, hi = min(years), max(years)
    if _PRESENT.search(fromto):
        hi = math.inf
    return float(lo), float(hi)


def spans_overlap(a: Optional[str], b: Optional[str]) -> bool:
    sa, sb = year_span(a), year_span(b)
    if sa is None or sb is None:
        return True
    return sa[0] <= sb[1] and sb[0] <= sa[1]


def canonical_title(title: str) -> str:
    t = match_normalize(title)
    return _TITLE_CANON.get(t, t)


def titles_equivalent(a: Optional[str], b: Optional[str]) -> bool:
    if a is None or b is None:
        return True
    return canonical_title(a) == canonical_title(b)


# -- keywords ---------------------------------------------------------------

def lexical_keyword_tier(x: str, y: str) -> int:
    """Tiers 4/3/2, or 0 when only the LLM could relate the two."""
    if match_normalize(x) == match_normalize(y):
        return 4
    tx, ty = content_tokens(x), content_tokens(y)
    if not tx or not ty:
        return 0
    if tx <= ty or ty <= tx:
        return 3
    if tx & ty:
        return 2
    return 0


class Disambiguator:
    """Scores profile pairs; optional LLM judges settle borderline cases.

    ``keyword_judge(a, b)`` decides tier-1 relatedness and
    ``institution_judge(a, b)`` decides cross-script institution
    equivalence.  Without judges those paths score 0.
    """

    def __init__(self, threshold: int = DEFAULT_THRESHOLD,
                 keyword_judge: Optional[Judge] = None,
                 institution_judge: Optional[Judge] = None,
                 keyword_cap: Optional[int] = None):
        if threshold < 1:
            raise ValueError("threshold must be >= 1")
        self.threshold = threshold
        self.keyword_judge = keyword_judge
        self.institution_judge = institution_judge
        self.keyword_cap = keyword_cap

    @classmethod
    def with_llm(cls, llm, provider: Optional[str] = None, **kwargs) -> "Disambiguator":
        def judge(template_id):
            def ask(a: str, b: str) -> bool:
                first, second = sorted((a, b))
                out = llm.complete_structured(template_id, {"first": first, "second": second},
                                              provider=provider)
                return bool(out.value["verdict"])
            return ask
        return cls(keyword_judge=judge("keyword_related"),
                   institution_judge=judge("institution_equivalent"), **kwargs)

    # institutions

    def institutions_match(self, x: Optional[str], y: Optional[str]) -> bool:
        lexical = lexical_institution_match(x, y)
        if lexical is None:
            return bool(self.institution_judge and self.institution_judge(x, y))
        return lexical

    def score_institution(self, a: ScholarProfile, b: ScholarProfile) -> int:
        return INSTITUTION_POINTS if self.institutions_match(a.workplace, b.workplace) else 0

    # segments

    def segments_match(self, s, t) -> bool:
        if type(s) is not type(t):
            return False
        if isinstance(s, EducationSegment):
            return (self.institutions_match(s.school, t.school)
                    and spans_overlap(s.fromto, t.fromto)
                    and titles_equivalent(s.scholar, t.scholar))
        return (self.institutions_match(s.agency, t.agency)
                and spans_overlap(s.fromto, t.fromto)
                and titles_equivalent(s.title, t.title))

    def segment_pairs(self, a: ScholarProfile, b: ScholarProfile) -> list[SegmentPair]:
        sa, sb = a.segments, b.segments
        weights = [[1 if self.segments_match(s, t) else 0 for t in sb] for s in sa]
        return [SegmentPair(sa[i], sb[j]) for i, j in best_assignment(weights)]

    def score_segments(self, a: ScholarProfile, b: ScholarProfile) -> int:
        return SEGMENT_POINTS * len(self.segment_pairs(a, b))

    # keywords

    def keyword_tier(self, x: str, y: str) -> int:
        tier = lexical_keyword_tier(x, y)
        if tier == 0 and self.keyword_judge is not None and self.keyword_judge(x, y):
            return 1
        return tier

    def keyword_pairs(self, a: ScholarProfile, b: ScholarProfile) -> list[KeywordPair]:
        ka, kb = a.keywords, b.keywords
        weights = [[self.keyword_tier(x, y) for y in kb] for x in ka]
        return [KeywordPair(ka[i], kb[j], weights[i][j]) for i, j in best_assignment(weights)]

    def score_keywords(self, a: ScholarProfile, b: ScholarProfile) -> int:
        points = sum(p.points for p in self.keyword_pairs(a, b))
        return points if self.keyword_cap is None else min(points, self.keyword_cap)

    # decision

    def score(self, a: ScholarProfile, b: ScholarProfile) -> MatchScore:
        seg = self.segment_pairs(a, b)
        kw = self.keyword_pairs(a, b)
        kw_points = sum(p.points for p in kw)
        if self.keyword_cap is not None:
            kw_points = min(kw_points, self.keyword_cap)
        return MatchScore(
            institution_points=self.score_institution(a, b),
            segment_points=SEGMENT_POINTS * len(seg),
            keyword_points=kw_points,
            segment_pairs=tuple(seg),
            keyword_pairs=tuple(kw),
        )

    def compare(self, a: Optional[ScholarProfile], b: Optional[ScholarProfile],
                threshold: Optional[int] = None) -> MatchDecision:
        threshold = self.threshold if threshold is None else threshold
        if a is None or b is None or a.is_empty() or b.is_empty():
            return MatchDecision(MatchScore(), threshold, Verdict.UNDECIDABLE,
                                 ("at least one profile is absent or empty",))
        score = self.score(a, b)
        rationale = []
        if score.institution_points:
            rationale.append(f"institution: {a.workplace!r} ~ {b.workplace!r} (+{score.institution_points})")
        for p in score.segment_pairs:
            rationale.append(f"segment: {_seg_label(p.first)} ~ {_seg_label(p.second)} (+{SEGMENT_POINTS})")
        for p in score.keyword_pairs:
            rationale.append(f"keyword: {p.first!r} ~ {p.second!r} tier {p.tier} (+{p.points})")
        verdict = Verdict.SAME if score.total >= threshold else Verdict.DIFFERENT
        rationale.append(f"total {score.total} {'>=' if verdict is Verdict.SAME else '<'} {threshold}")
        return MatchDecision(score, threshold, verdict, tuple(rationale))


_default = Disambiguator()


def score_institution(a: ScholarProfile, b: ScholarProfile) -> int:
    return _default.score_institution(a, b)


def score_segments(a: ScholarProfile, b: ScholarProfile) -> int:
    return _default.score_segments(a, b)


def score_keywords(a: ScholarProfile, b: ScholarProfile) -> int:
    return _default.score_keywords(a, b)


def compare(a: Optional[ScholarProfile], b: Optional[ScholarProfile],
            threshold: int = DEFAULT_THRESHOLD) -> MatchDecision:
    return _default.compare(a, b, threshold)
