"""Data model for author mentions and scholar profiles.

Profiles serialize to the seven-key JSON layout used by the extraction
prompts::

    {"name": ..., "workplace": ..., "email": [...], "keywords": [...],
     "education_track": [...], "professional_track": [...], "honor_track": [...]}

Unknown scalars are written as the literal string ``"null"`` and read back
as ``None``.  Provenance and language ride in a separate ``_meta`` object so
the seven canonical keys stay untouched.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, fields
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

from .errors import InvalidMention, ParseError, SchemaError
from .text import collapse_ws, fold

NULL = "null"

CANONICAL_KEYS = (
    "name",
    "workplace",
    "email",
    "keywords",
    "education_track",
    "professional_track",
    "honor_track",
)

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")


class Origin(str, enum.Enum):
    PAPER_AUTHOR = "paper_author"
    AWARD_RECIPIENT = "award_recipient"


class Language(str, enum.Enum):
    NATIVE = "native"
    ROMANIZED = "romanized"
    MIXED = "mixed"


@dataclass(frozen=True)
class ScholarMention:
    raw_name: str
    affiliation: str
    email: Optional[str] = None
    origin: Origin = Origin.PAPER_AUTHOR
    source_id: str = ""
    id: str = ""
    paper_metadata: Optional[str] = None

    def __post_init__(self):
        if not collapse_ws(self.raw_name or ""):
            raise InvalidMention("raw_name is empty")
        if self.email is not None and not _EMAIL_RE.match(self.email):
            raise InvalidMention(f"malformed email: {self.email!r}")
        if not isinstance(self.origin, Origin):
            object.__setattr__(self, "origin", Origin(self.origin))
        if not self.id:
            object.__setattr__(self, "id", f"{self.source_id}:{collapse_ws(self.raw_name)}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScholarMention":
        try:
            return cls(
                raw_name=d["raw_name"],
                affiliation=d.get("affiliation", ""),
                email=d.get("email") or None,
                origin=Origin(d.get("origin", "paper_author")),
                source_id=d.get("source_id", ""),
                id=d.get("id", ""),
                paper_metadata=d.get("paper_metadata") or None,
            )
        except (KeyError, ValueError) as exc:
            raise InvalidMention(f"bad mention record: {exc}") from exc

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "raw_name": self.raw_name,
            "affiliation": self.affiliation,
            "origin": self.origin.value,
            "source_id": self.source_id,
        }
        if self.email:
            d["email"] = self.email
        if self.paper_metadata:
            d["paper_metadata"] = self.paper_metadata
        return d


@dataclass(frozen=True)
class EducationSegment:
    school: str
    fromto: Optional[str] = None
    major: Optional[str] = None
    scholar: Optional[str] = None

    def __post_init__(self):
        if not collapse_ws(self.school or ""):
            raise SchemaError("education segment without school")


@dataclass(frozen=True)
class ProfessionalSegment:
    agency: str
    fromto: Optional[str] = None
    title: Optional[str] = None

    def __post_init__(self):
        if not collapse_ws(self.agency or ""):
            raise SchemaError("professional segment without agency")


@dataclass(frozen=True)
class HonorEntry:
    award: str
    time: Optional[str] = None

    def __post_init__(self):
        if not collapse_ws(self.award or ""):
            raise SchemaError("honor entry without award")


@dataclass(frozen=True)
class Provenance:
    url: str
    retrieved_at: str  # ISO-8601


@dataclass(frozen=True)
class ScholarProfile:
    name: Optional[str] = None
    workplace: Optional[str] = None
    email: tuple[str, ...] = ()
    keywords: tuple[str, ...] = ()
    education_track: tuple[EducationSegment, ...] = ()
    professional_track: tuple[ProfessionalSegment, ...] = ()
    honor_track: tuple[HonorEntry, ...] = ()
    provenance: tuple[Provenance, ...] = ()
    language: Optional[Language] = None

    def __post_init__(self):
        for name in ("email", "keywords", "education_track",
                     "professional_track", "honor_track", "provenance"):
            value = getattr(self, name)
            if not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))
        object.__setattr__(self, "keywords", _dedupe(self.keywords, fold))
        object.__setattr__(self, "email", _dedupe(self.email, fold))

    @property
    def segments(self) -> tuple:
        return self.education_track + self.professional_track

    def is_empty(self) -> bool:
        """No comparable content: workplace, keywords and tracks all blank."""
        return not (
            (self.workplace and self.workplace.strip())
            or self.keywords
            or self.education_track
            or self.professional_track
        )


def _dedupe(items: Iterable, key) -> tuple:
    seen = set()
    out = []
    for item in items:
        k = key(item)
        if k not in seen:
            seen.add(k)
            out.append(item)
    return tuple(out)


# -- (de)serialization ------------------------------------------------------

def _scalar_out(value: Optional[str]) -> str:
    return NULL if value is None else value


def _scalar_in(obj: dict, key: str, where: str) -> Optional[str]:
    value = obj.get(key, NULL)
    if value is None:
        return None
    if not isinstance(value, str):
        raise SchemaError(f"{where}.{key} must be a string, got {type(value).__name__}")
    return None if value == NULL else value


def _list_in(obj: dict, key: str) -> list:
    value = obj.get(key, [])
    if value is None or value == NULL:
        return []
    if not isinstance(value, list):
        raise SchemaError(f"{key} must be a list, got {type(value).__name__}")
    return value


def _segment_in(cls, item: Any, where: str):
    if not isinstance(item, dict):
        raise SchemaError(f"{where} entries must be objects")
    kwargs = {f.name: _scalar_in(item, f.name, where) for f in fields(cls)}
    return cls(**kwargs)


def profile_from_dict(obj: Any) -> ScholarProfile:
    if not isinstance(obj, dict):
        raise SchemaError(f"profile must be an object, got {type(obj).__name__}")
    for key in ("email", "keywords"):
        for item in _list_in(obj, key):
            if not isinstance(item, str):
                raise SchemaError(f"{key} entries must be strings")
    meta = obj.get("_meta") or {}
    if not isinstance(meta, dict):
        raise SchemaError("_meta must be an object")
    provenance = []
    for p in meta.get("provenance", []):
        if not isinstance(p, dict) or "url" not in p:
            raise SchemaError("_meta.provenance entries need a url")
        provenance.append(Provenance(p["url"], p.get("retrieved_at", "")))
    language = meta.get("language")
    try:
        language = Language(language) if language else None
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    return ScholarProfile(
        name=_scalar_in(obj, "name", "profile"),
        workplace=_scalar_in(obj, "workplace", "profile"),
        email=tuple(_list_in(obj, "email")),
        keywords=tuple(_list_in(obj, "keywords")),
        education_track=tuple(_segment_in(EducationSegment, s, "education_track")
                              for s in _list_in(obj, "education_track")),
        professional_track=tuple(_segment_in(ProfessionalSegment, s, "professional_track")
                                 for s in _list_in(obj, "professional_track")),
        honor_track=tuple(_segment_in(HonorEntry, s, "honor_track")
                          for s in _list_in(obj, "honor_track")),
        provenance=tuple(provenance),
        language=language,
    )


def profile_to_dict(p: ScholarProfile) -> dict:
    d = {
        "name": _scalar_out(p.name),
        "workplace": _scalar_out(p.workplace),
        "email": list(p.email),
        "keywords": list(p.keywords),
        "education_track": [
            {"fromto": _scalar_out(s.fromto), "school": s.school,
             "major": _scalar_out(s.major), "scholar": _scalar_out(s.scholar)}
            for s in p.education_track
        ],
        "professional_track": [
            {"fromto": _scalar_out(s.fromto), "agency": s.agency, "title": _scalar_out(s.title)}
            for s in p.professional_track
        ],
        "honor_track": [
            {"time": _scalar_out(h.time), "award": h.award} for h in p.honor_track
        ],
    }
    meta = {}
    if p.provenance:
        meta["provenance"] = [{"url": x.url, "retrieved_at": x.retrieved_at} for x in p.provenance]
    if p.language is not None:
        meta["language"] = p.language.value
    if meta:
        d["_meta"] = meta
    return d


def parse_profile(document: str) -> ScholarProfile:
    try:
        obj = json.loads(document)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ParseError(f"malformed profile text: {exc}") from exc
    return profile_from_dict(obj)


def serialize_profile(profile: ScholarProfile) -> str:
    return json.dumps(profile_to_dict(profile), ensure_ascii=False)


def parse_outcome(document: str) -> Optional[ScholarProfile]:
    """Like ``parse_profile`` but maps the bare ``"null"`` outcome to None."""
    try:
        obj = json.loads(document)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ParseError(f"malformed outcome text: {exc}") from exc
    if obj is None or obj == NULL:
        return None
    return profile_from_dict(obj)


# -- merge ------------------------------------------------------------------

def _pick(x: Optional[str], y: Optional[str]) -> Optional[str]:
    # Order-independent so that merge(a, b) == merge(b, a).
    if not x or not x.strip():
        return y if y and y.strip() else (x if x is not None else y)
    if not y or not y.strip():
        return x
    return max(x, y, key=lambda s: (len(collapse_ws(s)), _neg(s)))


def _neg(s: str):
    # max() with lexicographically smallest as the tie-winner
    return tuple(-ord(c) for c in s)


def segment_key(seg) -> tuple:
    return (type(seg).__name__,) + tuple(
        fold(v) if isinstance(v, str) else v for v in (getattr(seg, f.name) for f in fields(seg))
    )


def _union(a: Iterable, b: Iterable, key) -> tuple:
    return _dedupe(list(a) + list(b), key)


def _merge_language(a: Optional[Language], b: Optional[Language]) -> Optional[Language]:
    if a is None:
        return b
    if b is None or a == b:
        return a
    return Language.MIXED


def merge_profiles(a: ScholarProfile, b: ScholarProfile) -> ScholarProfile:
    """Union two profiles already judged to describe the same person."""
    return ScholarProfile(
        name=_pick(a.name, b.name),
        workplace=_pick(a.workplace, b.workplace),
        email=_union(a.email, b.email, fold),
        keywords=_union(a.keywords, b.keywords, fold),
        education_track=_union(a.education_track, b.education_track, segment_key),
        professional_track=_union(a.professional_track, b.professional_track, segment_key),
        honor_track=_union(a.honor_track, b.honor_track, segment_key),
        provenance=_union(a.provenance, b.provenance, lambda p: (p.url, p.retrieved_at)),
        language=_merge_language(a.language, b.language),
    )


def same_structure(a: ScholarProfile, b: ScholarProfile) -> bool:
    """Equality that ignores list order (what merge guarantees)."""
    da, db = profile_to_dict(a), profile_to_dict(b)
    for d in (da, db):
        for key, value in d.items():
            if isinstance(value, list):
                d[key] = sorted(json.dumps(v, sort_keys=True, ensure_ascii=False) for v in value)
    return da == db


# -- profile store ----------------------------------------------------------

def now_iso() -> str:
    return datetime.now().astimezone().isoformat(timespec="seconds")


def write_profiles(path: Path | str, profiles: Iterable[ScholarProfile]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in profiles:
            fh.write(serialize_profile(p) + "\n")


def read_profiles(path: Path | str) -> Iterator[ScholarProfile]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield parse_profile(line)
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
