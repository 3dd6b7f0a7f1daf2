"""Small text utilities shared by the matchers."""
from __future__ import annotations

import re
import unicodedata

STOPWORDS = frozenset(
    "a an and at by for from in into of on or the to with".split()
)

_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
)

_EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+")
_WORD_RE = re.compile(r"[^\W_]+")


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def is_latin_letter(ch: str) -> bool:
    if not ch.isalpha():
        return False
    if ch.isascii():
        return True
    try:
        return unicodedata.name(ch).startswith("LATIN")
    except ValueError:
        return False


def has_cjk(s: str) -> bool:
    return any(is_cjk(c) for c in s)


def has_latin(s: str) -> bool:
    return any(is_latin_letter(c) for c in s)


def collapse_ws(s: str) -> str:
    return " ".join(s.split())


def fold(s: str) -> str:
    """Trim, collapse whitespace runs, case-fold."""
    return collapse_ws(s).casefold()


def strip_accents(s: str) -> str:
    decomposed = unicodedata.normalize("NFKD", s)
    return "".join(c for c in decomposed if not unicodedata.combining(c))


def match_normalize(s: str) -> str:
    """Lower-case text with punctuation turned into spaces.

    Email addresses survive intact so they can be matched as one token.
    """
    s = s.casefold()
    emails = _EMAIL_RE.findall(s)
    s = _EMAIL_RE.sub(" \x00 ", s)
    s = re.sub(r"[^\w\x00]+|_", " ", s)
    for e in emails:
        s = s.replace("\x00", e, 1)
    return collapse_ws(s)


def match_tokens(s: str) -> list[str]:
    return [t for t in match_normalize(s).split() if t not in STOPWORDS]


def contains_token_seq(haystack_norm: str, needle_norm: str) -> bool:
    """Boundary-aware substring test on ``match_normalize``d strings.

    Latin/digit boundaries are required on both sides; CJK needles match
    anywhere since CJK text is not space-delimited.
    """
    if not needle_norm:
        return False
    pattern = r"(?<![a-z0-9])" + re.escape(needle_norm) + r"(?![a-z0-9])"
    return re.search(pattern, haystack_norm) is not None


def content_tokens(s: str) -> frozenset[str]:
    """Content-bearing tokens: latin words minus stopwords, CJK bigrams."""
    out = set()
    for word in _WORD_RE.findall(strip_accents(s).casefold()):
        if has_cjk(word):
            for run in re.findall(r"[^\W\d_a-z]+", word):
                if len(run) == 1:
                    out.add(run)
                else:
                    out.update(run[i:i + 2] for i in range(len(run) - 1))
            for latin in re.findall(r"[a-z0-9]+", word):
                if latin not in STOPWORDS:
                    out.add(latin)
        elif word not in STOPWORDS:
            out.add(word)
    return frozenset(out)


def guess_language(text: str) -> str:
    cjk = sum(1 for c in text if is_cjk(c))
    latin = sum(1 for c in text if is_latin_letter(c))
    if cjk == 0 and latin == 0:
        return "none"
    # CJK characters carry roughly a word each; weight them up.
    return "zh" if cjk * 3 >= latin else "en"
