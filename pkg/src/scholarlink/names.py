"""Romanized-name parsing, pinyin variants and transliteration checks.

Everything here is deterministic and tone-free: a native character maps to
the set of toneless pinyin syllables it can be read as, and a romanized
name is consistent with a native name when some reading of each character
lines up with the romanized syllables position by position.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .errors import EmptyName, PreconditionError, UnknownCharacter, UnsegmentableName
from .text import (collapse_ws, contains_token_seq, has_cjk, is_cjk, is_latin_letter,
                   match_normalize, strip_accents)


class Script(str, enum.Enum):
    LATIN = "latin"
    NATIVE_CJK = "native_cjk"
    MIXED = "mixed"


def detect_script(name: str) -> Script:
    if not name or not name.strip():
        raise EmptyName("name is empty")
    letters = [c for c in name if c.isalpha()]
    cjk = sum(1 for c in letters if is_cjk(c))
    latin = sum(1 for c in letters if is_latin_letter(c))
    if cjk and not latin:
        return Script.NATIVE_CJK
    if latin == len(letters):
        return Script.LATIN
    return Script.MIXED


# -- romanization table -----------------------------------------------------

@dataclass(frozen=True)
class RomanizationTable:
    char_map: dict
    surnames: tuple[str, ...] = ()
    inventory: frozenset = field(default=frozenset())

    def __post_init__(self):
        inv = set(self.inventory)
        for syls in self.char_map.values():
            inv.update(syls)
        object.__setattr__(self, "inventory", frozenset(inv))
        object.__setattr__(self, "_surname_rank", {s: i for i, s in enumerate(self.surnames)})
        object.__setattr__(self, "_max_syllable", max((len(s) for s in inv), default=0))

    @classmethod
    def load(cls, table_path: Path | str, surname_path: Path | str | None = None) -> "RomanizationTable":
        char_map = {}
        with open(table_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                char, _, syls = line.partition("\t")
                char_map[char] = frozenset(s.strip() for s in syls.split(",") if s.strip())
        surnames: list[str] = []
        if surname_path is not None:
            with open(surname_path, encoding="utf-8") as fh:
                for line in fh:
                    s = line.strip().lower()
                    if s and not s.startswith("#") and s not in surnames:
                        surnames.append(s)
        return cls(char_map=char_map, surnames=tuple(surnames))

    def readings(self, char: str) -> frozenset:
        try:
            return self.char_map[char]
        except KeyError:
            raise UnknownCharacter(char) from None

    def surname_rank(self, token: str) -> Optional[int]:
        return self._surname_rank.get(token)

    def segmentations(self, token: str) -> list[tuple[str, ...]]:
        """All ways to split ``token`` into inventory syllables."""
        return list(_segment(token, self.inventory, self._max_syllable))


@lru_cache(maxsize=4096)
def _segment_cached(token: str, inventory: frozenset, max_len: int) -> tuple:
    if not token:
        return ((),)
    out = []
    for n in range(min(max_len, len(token)), 0, -1):
        head = token[:n]
        if head in inventory:
            for rest in _segment_cached(token[n:], inventory, max_len):
                out.append((head,) + rest)
    return tuple(out)


def _segment(token, inventory, max_len):
    return _segment_cached(token, inventory, max_len)


def _canonical(options: list[tuple[str, ...]]) -> tuple[str, ...]:
    # fewest syllables, then longest-leading syllables ("xian" over "xi'an")
    return min(options, key=lambda seg: (len(seg), [-len(s) for s in seg]))


@lru_cache(maxsize=1)
def default_table() -> RomanizationTable:
    data = resources.files("scholarlink") / "data"
    with resources.as_file(data / "romanization.tsv") as table, \
            resources.as_file(data / "surnames.txt") as surnames:
        return RomanizationTable.load(table, surnames)


# -- parsing ----------------------------------------------------------------

@dataclass(frozen=True)
class NameVariantSet:
    """A parsed name: surname/given syllables plus its renderings.

    ``opaque`` is set (and the syllable fields empty) when the name has no
    pinyin decomposition.  ``initials`` is set instead of ``given`` when the
    given name was only printed as initials.
    """

    surname: tuple[str, ...] = ()
    given: tuple[str, ...] = ()
    initials: tuple[str, ...] = ()
    native: Optional[str] = None
    opaque: Optional[str] = None
    # alternative splits, kept for consistency checks
    surname_options: tuple[tuple[str, ...], ...] = ()
    given_options: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        if (self.given or self.initials) and not self.surname:
            raise ValueError("surname partition empty")

    @property
    def syllables(self) -> tuple[str, ...]:
        return self.surname + self.given

    @property
    def variants(self) -> frozenset[str]:
        return generate_variants(self)


_INITIAL_RE = re.compile(r"^(?:[a-z]\.?)(?:-?[a-z]\.?)*$")


def _is_initials(token: str) -> bool:
    t = token.lower()
    return bool(_INITIAL_RE.match(t)) and (len(t.replace(".", "").replace("-", "")) <= 3) and (
        "." in t or len(t) == 1)


def _pieces(part: str) -> list[str]:
    return [p for p in re.split(r"[\s\-'’]+", part.lower()) if p]


def _segment_part(part: str, table: RomanizationTable) -> list[tuple[str, ...]]:
    """All segmentations of a multi-piece name part (pieces split separately)."""
    combos: list[tuple[str, ...]] = [()]
    for piece in _pieces(part):
        options = table.segmentations(piece)
        if not options:
            return []
        combos = [c + o for c in combos for o in options]
    return combos


def _split_undelimited(token: str, table: RomanizationTable):
    """Split e.g. 'zhangyihui' using the longest known surname prefix."""
    best = None
    for options in [table.segmentations(token)]:
        for seg in options:
            for n in (2, 1):
                if len(seg) > n and "".join(seg[:n]) in table._surname_rank:
                    cand = (seg[:n], seg[n:])
                    key = (-n, len(seg), table.surname_rank("".join(seg[:n])))
                    if best is None or key < best[0]:
                        best = (key, cand)
                    break
    return None if best is None else best[1]


def parse_romanized(name: str, table: Optional[RomanizationTable] = None) -> NameVariantSet:
    """Parse a latin-script byline into surname/given syllables.

    Raises ``UnsegmentableName`` when no pinyin decomposition exists; the
    exception's ``variant_set`` holds the opaque fallback.
    """
    if detect_script(name) != Script.LATIN:
        raise PreconditionError(f"not a latin-script name: {name!r}")
    table = table or default_table()
    clean = collapse_ws(strip_accents(name))

    def opaque() -> UnsegmentableName:
        err = UnsegmentableName(clean)
        err.variant_set = NameVariantSet(opaque=clean)
        return err

    if "," in clean:
        surname_part, _, given_part = (p.strip() for p in clean.partition(","))
        surname_tokens = surname_part.split()
        given_tokens = given_part.split()
    else:
        tokens = clean.split()
        if len(tokens) == 1:
            split = _split_undelimited(tokens[0].lower(), table)
            if split is None:
                raise opaque()
            sur, giv = split
            return NameVariantSet(surname=sur, given=giv, surname_options=(sur,), given_options=(giv,))
        idx = _surname_index(tokens, table)
        surname_tokens = [tokens[idx]]
        given_tokens = tokens[:idx] + tokens[idx + 1:]

    if not surname_tokens:
        raise opaque()
    surname_opts = _segment_part(" ".join(surname_tokens), table)
    if not surname_opts:
        raise opaque()

    if given_tokens and all(_is_initials(t) for t in given_tokens):
        initials = tuple(
            ch for t in given_tokens for ch in t.lower() if ch.isalpha())
        sur = _canonical(surname_opts)
        return NameVariantSet(surname=sur, initials=initials, surname_options=tuple(surname_opts))

    given_opts = _segment_part(" ".join(given_tokens), table) if given_tokens else [()]
    if not given_opts:
        raise opaque()
    return NameVariantSet(
        surname=_canonical(surname_opts),
        given=_canonical(given_opts),
        surname_options=tuple(surname_opts),
        given_options=tuple(given_opts),
    )


def _surname_index(tokens: list[str], table: RomanizationTable) -> int:
    ends = [0, len(tokens) - 1]
    ranked = []
    for i in ends:
        tok = tokens[i].lower()
        if _is_initials(tok):
            continue
        rank = table.surname_rank(tok)
        if rank is not None:
            ranked.append((rank, i))
    if ranked:
        return min(ranked)[1]
    # Neither end is a known surname: an initial is never the surname,
    # otherwise fall back to the surname-first order.
    if _is_initials(tokens[0]):
        return len(tokens) - 1
    return 0


def parse_name(name: str, table: Optional[RomanizationTable] = None) -> NameVariantSet:
    """``parse_romanized`` that returns the opaque set instead of raising."""
    try:
        return parse_romanized(name, table)
    except UnsegmentableName as exc:
        return exc.variant_set


# -- variants ---------------------------------------------------------------

def _cap(s: str) -> str:
    return s[:1].upper() + s[1:]


def generate_variants(v: NameVariantSet) -> frozenset[str]:
    if v.opaque is not None:
        out = {v.opaque, v.opaque.lower()}
        if "," in v.opaque:
            last, _, first = (p.strip() for p in v.opaque.partition(","))
            swapped = f"{first} {last}".strip()
            out |= {swapped, swapped.lower()}
        return frozenset(out)

    sur = _cap("".join(v.surname))
    if v.initials:
        inits = "".join(f"{c.upper()}." for c in v.initials)
        return frozenset({f"{inits} {sur}", f"{sur} {inits}", f"{sur}, {inits}",
                          f"{sur.upper()} {inits}"})

    if not v.given:
        return frozenset({sur, sur.lower()})

    given = _cap("".join(v.given))
    hyph = _cap("-".join(v.given))
    init = v.given[0][0].upper()
    full = [
        f"{sur} {given}",
        f"{given} {sur}",
        f"{sur}, {given}",
        f"{sur.upper()} {given}",
    ]
    if len(v.given) > 1:
        full += [f"{sur} {hyph}", f"{hyph} {sur}", f"{sur}, {hyph}"]
    out = set(full)
    out |= {f.lower() for f in full}
    out |= {f"{init}. {sur}", f"{sur} {init}.", f"{sur}, {init}."}
    return frozenset(out)


def full_renderings(v: NameVariantSet) -> list[str]:
    """The variants that spell out every syllable (no initials)."""
    return sorted(x for x in generate_variants(v) if not re.search(r"\b[A-Za-z]\.", x))


def name_in_text(v: NameVariantSet, text_norm: str, native_names: Iterable[str] = ()) -> bool:
    """Whether a full rendering or a native form of the name occurs in text.

    ``text_norm`` must already be ``match_normalize``d.
    """
    for variant in full_renderings(v) if v.opaque is None else generate_variants(v):
        if contains_token_seq(text_norm, match_normalize(variant)):
            return True
    for native in native_names:
        if native and contains_token_seq(text_norm, match_normalize(native)):
            return True
    return False


# -- consistency ------------------------------------------------------------

@dataclass(frozen=True)
class Consistency:
    """Outcome of a transliteration check.

    ``verdict`` is None when the answer is indeterminate (a character was
    missing from the table).  ``alignment`` pairs each native character
    with the syllable it matched, or None.
    """

    verdict: Optional[bool]
    alignment: tuple[tuple[str, Optional[str]], ...] = ()
    unknown: tuple[str, ...] = ()

    def __bool__(self):
        return bool(self.verdict)


def _native_chars(native: str) -> list[str]:
    return [c for c in native if is_cjk(c)]


def consistent(romanized: str, native: str, table: Optional[RomanizationTable] = None) -> Consistency:
    if detect_script(native) != Script.NATIVE_CJK:
        raise PreconditionError(f"not a native-script name: {native!r}")
    table = table or default_table()
    chars = _native_chars(native)
    unknown = tuple(c for c in chars if c not in table.char_map)
    if unknown:
        return Consistency(None, tuple((c, None) for c in chars), unknown)

    v = parse_name(romanized, table)
    if v.opaque is not None:
        return Consistency(False, tuple((c, None) for c in chars))

    surname_opts = v.surname_options or (v.surname,)
    best: tuple = ()
    for sur in surname_opts:
        if v.initials:
            rest = chars[len(sur):]
            ok_sur = len(chars) > len(sur) and all(
                s in table.readings(c) for c, s in zip(chars, sur))
            if not ok_sur:
                continue
            if len(v.initials) == 1:
                ok = any(r.startswith(v.initials[0]) for r in table.readings(rest[0]))
            else:
                ok = len(v.initials) == len(rest) and all(
                    any(r.startswith(i) for r in table.readings(c))
                    for i, c in zip(v.initials, rest))
            if ok:
                return Consistency(True, tuple(zip(chars, sur + (None,) * len(rest))))
            continue
        for giv in v.given_options or (v.given,):
            seq = sur + giv
            if len(seq) != len(chars):
                continue
            matched = [(c, s if s in table.readings(c) else None) for c, s in zip(chars, seq)]
            if all(s is not None for _, s in matched):
                return Consistency(True, tuple(matched))
            if sum(s is not None for _, s in matched) > sum(s is not None for _, s in best):
                best = tuple(matched)
    return Consistency(False, best or tuple((c, None) for c in chars))


def transliterate(native: str, table: Optional[RomanizationTable] = None) -> list[frozenset]:
    table = table or default_table()
    return [table.readings(c) for c in _native_chars(native)]
