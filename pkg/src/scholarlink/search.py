"""Search client: query strategies, pluggable backends, caching, throttling.

Backends only need ``name`` and ``search(query, k)``.  A backend that can
also serve documents (the offline fixture corpus) implements ``owns(url)``
and ``fetch(url)``; everything else is fetched over HTTP.
"""
from __future__ import annotations

import enum
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Protocol
from urllib.parse import quote_plus, urljoin, urlparse

from .errors import (BackendUnavailable, DuplicateBackend, ExtractionEmpty, FetchError,
                     MissingExtra, QuotaExceeded, UnknownBackend)
from .htmltext import html_to_text, looks_like_html
from .names import Script, detect_script, parse_name
from .profile import ScholarMention
from .text import collapse_ws, contains_token_seq, fold, guess_language, match_normalize, match_tokens

log = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    PINYIN_INST_EN = "pinyin_inst_en"
    PINYIN_INST_NATIVE = "pinyin_inst_native"
    NATIVE_INST_NATIVE = "native_inst_native"
    PINYIN_INST_NATIVE_EMAIL = "pinyin_inst_native_email"


class Locale(str, enum.Enum):
    EN = "en"
    ZH = "zh"
    NONE = "none"


@dataclass(frozen=True)
class QueryExtras:
    native_name: Optional[str] = None
    translated_institution: Optional[str] = None
    research_keywords: tuple[str, ...] = ()


@dataclass(frozen=True)
class SearchQuery:
    terms: tuple[str, ...]
    strategy: Optional[Strategy] = None
    locale: Locale = Locale.NONE

    def __post_init__(self):
        terms = tuple(t for t in (collapse_ws(x) for x in self.terms) if t)
        if not terms:
            raise ValueError("query needs at least one term")
        object.__setattr__(self, "terms", terms)

    def canonical(self) -> tuple[str, ...]:
        return tuple(sorted(fold(t) for t in self.terms))

    def text(self) -> str:
        return " ".join(f'"{t}"' if " " in t else t for t in self.terms)


@dataclass(frozen=True)
class SearchResult:
    url: str
    title: str
    snippet: str
    rank: int
    backend: str


@dataclass(frozen=True)
class WebDocument:
    url: str
    text: str
    fetched_at: str
    language: str
    title: str = ""


def valid_url(url: str) -> bool:
    try:
        parts = urlparse(url)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.netloc)


# -- query construction -----------------------------------------------------

def primary_institution(affiliation: str) -> str:
    """The leading comma-separated unit of an affiliation string."""
    return collapse_ws(affiliation.split(",")[0])


def name_rendering(raw_name: str) -> str:
    """Surname-first rendering for pinyin names, given-first for others."""
    if detect_script(raw_name) != Script.LATIN:
        return collapse_ws(raw_name)
    v = parse_name(raw_name)
    if v.opaque is not None:
        if "," in v.opaque:
            last, _, first = (p.strip() for p in v.opaque.partition(","))
            return f"{first} {last}".strip()
        return v.opaque
    sur = "".join(v.surname).capitalize()
    if v.initials:
        return f"{sur} {''.join(c.upper() for c in v.initials)}"
    return f"{sur} {''.join(v.given).capitalize()}".strip()


def build_query(mention: ScholarMention, strategy: Strategy,
                extras: Optional[QueryExtras] = None) -> SearchQuery:
    strategy = Strategy(strategy)
    extras = extras or QueryExtras()
    if strategy is Strategy.NATIVE_INST_NATIVE:
        if extras.native_name:
            name = extras.native_name
        elif detect_script(mention.raw_name) == Script.NATIVE_CJK:
            name = collapse_ws(mention.raw_name)
        else:
            raise MissingExtra("native_name")
    else:
        name = name_rendering(mention.raw_name)

    if strategy is Strategy.PINYIN_INST_EN:
        institution = primary_institution(mention.affiliation)
    else:
        if not extras.translated_institution:
            raise MissingExtra("translated_institution")
        institution = extras.translated_institution

    terms = [name, institution]
    if strategy is Strategy.PINYIN_INST_NATIVE_EMAIL:
        if not mention.email:
            raise MissingExtra("email")
        terms.append(mention.email)
    terms.extend(extras.research_keywords)
    locale = Locale.EN if strategy is Strategy.PINYIN_INST_EN else Locale.ZH
    return SearchQuery(tuple(terms), strategy, locale)


# -- backends ---------------------------------------------------------------

class SearchBackend(Protocol):
    name: str

    def search(self, query: SearchQuery, k: int) -> list[SearchResult]: ...


@dataclass
class FixtureDoc:
    url: str
    title: str
    language: str
    text: str
    norm: str = ""

    def __post_init__(self):
        self.norm = match_normalize(self.title + "\n" + self.text)


class FixtureBackend:
    """Offline backend over a directory of text files.

    ``manifest.jsonl`` maps each file to ``url``/``title``/``language``.
    Scoring counts matched query tokens; a term found as a contiguous
    phrase counts double.  Documents in the query's locale outrank the
    rest; equal scores tie-break on url.
    """

    def __init__(self, docs: list[FixtureDoc], name: str = "fixture"):
        self.name = name
        self.docs = sorted(docs, key=lambda d: d.url)
        self._by_url = {d.url: d for d in self.docs}
        self._index: dict[str, set[int]] = {}
        for i, d in enumerate(self.docs):
            for tok in set(d.norm.split()):
                self._index.setdefault(tok, set()).add(i)

    @classmethod
    def from_directory(cls, directory: Path | str, name: str = "fixture") -> "FixtureBackend":
        directory = Path(directory)
        docs = []
        with open(directory / "manifest.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = json.loads(line)
                raw = (directory / entry["file"]).read_text(encoding="utf-8")
                title = entry.get("title", "")
                if looks_like_html(raw):
                    html_title, raw = html_to_text(raw)
                    title = title or html_title
                docs.append(FixtureDoc(
                    url=entry["url"], title=title,
                    language=entry.get("language") or guess_language(raw), text=raw))
        return cls(docs, name=name)

    def _candidates(self, tokens: list[str]) -> set[int]:
        out: set[int] = set()
        for tok in tokens:
            hit = self._index.get(tok)
            if hit is not None:
                out |= hit
            else:
                out |= {i for i, d in enumerate(self.docs) if tok in d.norm}
        return out

    def score(self, doc: FixtureDoc, query: SearchQuery) -> int:
        total = 0
        for term in query.terms:
            tokens = match_tokens(term)
            if not tokens:
                continue
            matched = sum(1 for t in tokens if contains_token_seq(doc.norm, t))
            if len(tokens) > 1 and contains_token_seq(doc.norm, match_normalize(term)):
                total += 2 * len(tokens)
            else:
                total += matched
        return total

    def search(self, query: SearchQuery, k: int) -> list[SearchResult]:
        all_tokens = [t for term in query.terms for t in match_tokens(term)]
        scored = []
        for i in self._candidates(all_tokens):
            doc = self.docs[i]
            s = self.score(doc, query)
            if s > 0:
                off_locale = query.locale is not Locale.NONE and doc.language != query.locale.value
                scored.append((off_locale, -s, doc.url, doc))
        scored.sort(key=lambda x: x[:3])
        return [
            SearchResult(url=d.url, title=d.title, snippet=_snippet(d, all_tokens),
                         rank=r, backend=self.name)
            for r, (_, _, _, d) in enumerate(scored[:k], 1)
        ]

    def owns(self, url: str) -> bool:
        return url in self._by_url

    def fetch(self, url: str) -> tuple[str, str, str]:
        doc = self._by_url.get(url)
        if doc is None:
            raise FetchError(404, url)
        return doc.title, doc.text, doc.language


def _snippet(doc: FixtureDoc, tokens: list[str], width: int = 160) -> str:
    low = doc.text.casefold()
    pos = min((p for p in (low.find(t) for t in tokens) if p >= 0), default=0)
    start = max(0, pos - width // 4)
    return collapse_ws(doc.text[start:start + width])


class _HttpBackend:
    """Shared plumbing for live engines: request, error mapping."""

    name = "http"

    def __init__(self, client=None, timeout: float = 15.0):
        import httpx

        self._client = client or httpx.Client(timeout=timeout, follow_redirects=True)

    def _get(self, url: str, **kwargs):
        import httpx

        try:
            resp = self._client.get(url, **kwargs)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{self.name}: {exc}") from exc
        if resp.status_code in (403, 429):
            raise QuotaExceeded(f"{self.name}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendUnavailable(f"{self.name}: HTTP {resp.status_code}")
        return resp


def _env(var: str) -> str:
    value = os.environ.get(var)
    if not value:
        raise BackendUnavailable(f"credential environment variable {var} is not set")
    return value


class BingBackend(_HttpBackend):
    name = "bing"
    endpoint = "https://api.bing.microsoft.com/v7.0/search"

    def __init__(self, key_env: str = "BING_API_KEY", client=None, name: str = "bing"):
        super().__init__(client)
        self.key_env = key_env
        self.name = name

    def search(self, query: SearchQuery, k: int) -> list[SearchResult]:
        market = {"zh": "zh-CN", "en": "en-US"}.get(query.locale.value)
        params = {"q": query.text(), "count": k}
        if market:
            params["mkt"] = market
        resp = self._get(self.endpoint, params=params,
                         headers={"Ocp-Apim-Subscription-Key": _env(self.key_env)})
        items = resp.json().get("webPages", {}).get("value", [])
        return [SearchResult(it.get("url", ""), it.get("name", ""), it.get("snippet", ""), i, self.name)
                for i, it in enumerate(items[:k], 1)]


class GoogleBackend(_HttpBackend):
    name = "google"
    endpoint = "https://www.googleapis.com/customsearch/v1"

    def __init__(self, key_env: str = "GOOGLE_API_KEY", cx_env: str = "GOOGLE_CSE_ID",
                 client=None, name: str = "google"):
        super().__init__(client)
        self.key_env, self.cx_env, self.name = key_env, cx_env, name

    def search(self, query: SearchQuery, k: int) -> list[SearchResult]:
        params = {"key": _env(self.key_env), "cx": _env(self.cx_env),
                  "q": query.text(), "num": min(k, 10)}
        lang = {"zh": "lang_zh-CN", "en": "lang_en"}.get(query.locale.value)
        if lang:
            params["lr"] = lang
        items = self._get(self.endpoint, params=params).json().get("items", [])
        return [SearchResult(it.get("link", ""), it.get("title", ""), it.get("snippet", ""), i, self.name)
                for i, it in enumerate(items[:k], 1)]


class SogouBackend(_HttpBackend):
    """Scrapes the public result page; no credentials."""

    name = "sogou"
    endpoint = "https://www.sogou.com/web"

    def __init__(self, client=None, name: str = "sogou"):
        super().__init__(client)
        self.name = name

    def search(self, query: SearchQuery, k: int) -> list[SearchResult]:
        resp = self._get(f"{self.endpoint}?query={quote_plus(query.text())}",
                         headers={"User-Agent": "Mozilla/5.0 (compatible; scholarlink)"})
        hits = parse_sogou_results(resp.text, base=self.endpoint)
        return [SearchResult(url, title, snippet, i, self.name)
                for i, (url, title, snippet) in enumerate(hits[:k], 1)]


def parse_sogou_results(html: str, base: str = "https://www.sogou.com/") -> list[tuple[str, str, str]]:
    from html.parser import HTMLParser

    class P(HTMLParser):
        def __init__(self):
            super().__init__(convert_charrefs=True)
            self.hits: list[list[str]] = []
            self.in_h3 = False
            self.link_depth = 0
            self.snip_depth = 0

        def handle_starttag(self, tag, attrs):
            a = dict(attrs)
            if tag == "h3":
                self.in_h3 = True
            elif tag == "a" and self.in_h3 and a.get("href"):
                self.hits.append([urljoin(base, a["href"]), "", ""])
                self.link_depth = 1
            elif self.snip_depth:
                self.snip_depth += 1
            elif self.hits and set((a.get("class") or "").split()) & {"str_info", "str-text", "ft", "space-txt"}:
                self.snip_depth = 1

        def handle_endtag(self, tag):
            if tag == "h3":
                self.in_h3 = False
            if tag == "a":
                self.link_depth = 0
            elif self.snip_depth:
                self.snip_depth -= 1

        def handle_data(self, data):
            if self.link_depth and self.hits:
                self.hits[-1][1] += data
            elif self.snip_depth and self.hits:
                self.hits[-1][2] += data

    p = P()
    p.feed(html)
    return [(u, collapse_ws(t), collapse_ws(s)) for u, t, s in p.hits]


class HttpFetcher:
    def __init__(self, client=None, timeout: float = 15.0):
        import httpx

        self._client = client or httpx.Client(timeout=timeout, follow_redirects=True)

    def __call__(self, url: str) -> tuple[str, str, str]:
        import httpx

        try:
            resp = self._client.get(url)
        except httpx.HTTPError as exc:
            raise FetchError(0, url) from exc
        if resp.status_code != 200:
            raise FetchError(resp.status_code, url)
        body = resp.text
        if looks_like_html(body) or "html" in resp.headers.get("content-type", ""):
            title, body = html_to_text(body)
        else:
            title = ""
        return title, body, guess_language(body)


# -- throttling and caching -------------------------------------------------

class RateLimiter:
    """Sliding-window limiter: at most ``max_requests`` per ``interval``.

    ``clock`` and ``sleep`` are injectable so tests can drive time.
    """

    def __init__(self, max_requests: int, interval: float = 1.0,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if max_requests < 1 or interval <= 0:
            raise ValueError("rate limit must allow at least one request per positive interval")
        self.max_requests = max_requests
        self.interval = interval
        self._clock = clock
        self._sleep = sleep
        self._grants: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        while True:
            with self._lock:
                now = self._clock()
                while self._grants and self._grants[0] <= now - self.interval:
                    self._grants.popleft()
                if len(self._grants) < self.max_requests:
                    self._grants.append(now)
                    return now
                wait = self._grants[0] + self.interval - now
            self._sleep(max(wait, 0.0))


class SearchCache:
    """Result/document cache keyed by day-granularity epoch.

    With a ``path`` the cache is persisted as JSON after every write.
    """

    def __init__(self, path: Path | str | None = None, clock: Callable[[], float] = time.time):
        self.path = Path(path) if path else None
        self._clock = clock
        self._lock = threading.Lock()
        self._data: dict[str, object] = {}
        if self.path and self.path.exists():
            try:
                self._data = json.loads(self.path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                log.warning("cache file %s unreadable; starting empty", self.path)

    def epoch(self) -> str:
        return datetime.fromtimestamp(self._clock(), timezone.utc).strftime("%Y-%m-%d")

    def key(self, *parts) -> str:
        return json.dumps([self.epoch(), *parts], ensure_ascii=False)

    def get(self, key: str):
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, value) -> None:
        with self._lock:
            self._data[key] = value
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                tmp = self.path.with_suffix(self.path.suffix + ".tmp")
                tmp.write_text(json.dumps(self._data, ensure_ascii=False), encoding="utf-8")
                os.replace(tmp, self.path)


@dataclass
class BackendDescriptor:
    name: str
    backend: SearchBackend
    rate_limit: Optional[RateLimiter] = None


class SearchGateway:
    def __init__(self, k: int = 10, cache: Optional[SearchCache] = None,
                 fetcher: Optional[Callable[[str], tuple[str, str, str]]] = None,
                 min_chars: int = 40, clock: Callable[[], float] = time.time):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.cache = cache or SearchCache(clock=clock)
        self.fetcher = fetcher
        self.min_chars = min_chars
        self._clock = clock
        self._backends: dict[str, BackendDescriptor] = {}
        self._key_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.backend_calls: dict[str, int] = {}
        self.fetch_calls = 0

    def register_backend(self, descriptor: BackendDescriptor) -> None:
        if descriptor.name in self._backends:
            raise DuplicateBackend(descriptor.name)
        self._backends[descriptor.name] = descriptor
        self.backend_calls.setdefault(descriptor.name, 0)

    def list_backends(self) -> list[str]:
        return list(self._backends)

    def _descriptor(self, name: Optional[str]) -> BackendDescriptor:
        if name is None:
            if not self._backends:
                raise UnknownBackend("no backend registered")
            return next(iter(self._backends.values()))
        try:
            return self._backends[name]
        except KeyError:
            raise UnknownBackend(name) from None

    def _key_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._key_locks.setdefault(key, threading.Lock())

    def search(self, query: SearchQuery, backend: Optional[str] = None) -> list[SearchResult]:
        desc = self._descriptor(backend)
        key = self.cache.key("search", desc.name, self.k, list(query.canonical()), query.locale.value)
        with self._key_lock(key):
            cached = self.cache.get(key)
            if cached is not None:
                return [SearchResult(**r) for r in cached]
            if desc.rate_limit is not None:
                desc.rate_limit.acquire()
            self.backend_calls[desc.name] += 1
            raw = desc.backend.search(query, self.k)
            results, seen = [], set()
            for r in sorted(raw, key=lambda r: r.rank):
                if valid_url(r.url) and r.url not in seen:
                    seen.add(r.url)
                    results.append(SearchResult(r.url, r.title, r.snippet, len(results) + 1, desc.name))
            results = results[: self.k]
            self.cache.put(key, [asdict(r) for r in results])
            return results

    def fetch(self, url: str) -> WebDocument:
        key = self.cache.key("doc", url)
        cached = self.cache.get(key)
        if cached is not None:
            return WebDocument(**cached)
        source = next((d.backend for d in self._backends.values()
                       if hasattr(d.backend, "owns") and d.backend.owns(url)), None)
        self.fetch_calls += 1
        if source is not None:
            title, text, language = source.fetch(url)
        elif self.fetcher is not None:
            title, text, language = self.fetcher(url)
        else:
            raise FetchError(404, url)
        if len(text.strip()) < self.min_chars:
            raise ExtractionEmpty(f"{url}: {len(text.strip())} characters of main text")
        stamp = datetime.fromtimestamp(self._clock(), timezone.utc).isoformat(timespec="seconds")
        doc = WebDocument(url=url, text=text, fetched_at=stamp, language=language, title=title)
        self.cache.put(key, asdict(doc))
        return doc
