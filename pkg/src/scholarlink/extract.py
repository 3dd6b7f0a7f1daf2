"""Mention -> profile extraction over retrieved web documents.

Per document: biographical filter, then target-match filter (a
deterministic name pre-check before the LLM is asked), then LLM profile
extraction.  Extracted profiles are grouped with the disambiguation
scorer and merged within each group.
"""
from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .disambiguate import Disambiguator, Verdict
from .errors import ExtractionEmpty, FetchError, SchemaError
from .names import RomanizationTable, Script, detect_script, name_in_text, parse_name
from .profile import (Language, Provenance, ScholarMention, ScholarProfile, merge_profiles,
                      profile_from_dict, profile_to_dict, serialize_profile)
from .search import QueryExtras, SearchGateway, Strategy, WebDocument, build_query
from .text import collapse_ws, match_normalize

log = logging.getLogger(__name__)

# Characters of page text handed to the LLM per call.
MAX_PROMPT_CHARS = 6000


class AuditLog:
    """Thread-safe line-delimited audit trail, optionally mirrored to a file."""

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def record(self, kind: str, **fields) -> None:
        entry = {"kind": kind, **fields}
        with self._lock:
            self.records.append(entry)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")


@dataclass(frozen=True)
class ExtractionOutcome:
    profile: Optional[ScholarProfile] = None
    candidates: tuple[ScholarProfile, ...] = ()
    evidence: tuple[str, ...] = ()
    strategy: tuple[str, ...] = ()

    def __post_init__(self):
        if self.profile is not None and self.candidates:
            raise ValueError("outcome cannot carry both a profile and candidates")
        if self.profile is not None and not self.evidence:
            raise ValueError("a profile needs at least one evidence url")

    @property
    def found(self) -> bool:
        return self.profile is not None or bool(self.candidates)

    def to_text(self) -> str:
        """The profile text, a JSON list of candidates, or the bare "null"."""
        if self.profile is not None:
            return serialize_profile(self.profile)
        if self.candidates:
            return json.dumps([profile_to_dict(c) for c in self.candidates], ensure_ascii=False)
        return '"null"'

    def to_dict(self) -> dict:
        return {
            "profile": profile_to_dict(self.profile) if self.profile else None,
            "candidates": [profile_to_dict(c) for c in self.candidates],
            "evidence": list(self.evidence),
            "strategy": list(self.strategy),
        }


NULL_OUTCOME = ExtractionOutcome()


def _clip(text: str) -> str:
    return text if len(text) <= MAX_PROMPT_CHARS else text[:MAX_PROMPT_CHARS]


class ExtractAgent:
    def __init__(self, search: SearchGateway, llm, disambiguator: Optional[Disambiguator] = None,
                 backend: Optional[str] = None, provider: Optional[str] = None,
                 audit: Optional[AuditLog] = None, workers: int = 1,
                 table: Optional[RomanizationTable] = None):
        self.search = search
        self.table = table
        self.llm = llm
        self.disambiguator = disambiguator or Disambiguator()
        self.backend = backend
        self.provider = provider
        self.audit = audit or AuditLog()
        self.workers = max(1, workers)

    def _ask(self, template: str, slots: dict):
        return self.llm.complete_structured(template, slots, provider=self.provider).value

    def _map(self, fn, items: Sequence):
        if self.workers == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(fn, items))

    # -- retrieval ----------------------------------------------------------

    def gather(self, mention: ScholarMention, strategy: Strategy | str,
               extras: Optional[QueryExtras] = None) -> list[WebDocument]:
        return self.gather_many(mention, [strategy], extras)

    def gather_many(self, mention: ScholarMention, strategies: Iterable[Strategy | str],
                    extras: Optional[QueryExtras] = None) -> list[WebDocument]:
        """Fetch the top-k results of each strategy's query, deduplicated by url."""
        urls: list[str] = []
        for strategy in strategies:
            query = build_query(mention, Strategy(strategy), extras)
            for result in self.search.search(query, self.backend):
                if result.url not in urls:
                    urls.append(result.url)
        docs = []
        for url in urls:
            try:
                docs.append(self.search.fetch(url))
            except (FetchError, ExtractionEmpty) as exc:
                self.audit.record("fetch_skipped", mention=mention.id, url=url, reason=str(exc))
        return docs

    # -- filters ------------------------------------------------------------

    def filter_biographical(self, doc: WebDocument) -> bool:
        if not doc.text.strip():
            return False
        return bool(self._ask("is_biographical", {
            "url": doc.url, "title": doc.title, "text": _clip(doc.text)})["verdict"])

    def name_precheck(self, doc: WebDocument, mention: ScholarMention,
                      native_names: Iterable[str] = ()) -> bool:
        """Cheap lexical test that the page names the scholar at all."""
        text_norm = match_normalize(doc.title + "\n" + doc.text)
        natives = [n for n in native_names if n]
        if detect_script(mention.raw_name) == Script.NATIVE_CJK:
            natives.append(collapse_ws(mention.raw_name))
            return any(match_normalize(n) in text_norm for n in natives)
        return name_in_text(parse_name(mention.raw_name, self.table), text_norm, natives)

    def filter_target_match(self, doc: WebDocument, mention: ScholarMention,
                            native_names: Iterable[str] = ()) -> bool:
        native_names = tuple(native_names)
        if not self.name_precheck(doc, mention, native_names):
            return False
        return bool(self._ask("is_target", {
            "url": doc.url, "text": _clip(doc.text), "name": mention.raw_name,
            "affiliation": mention.affiliation, "native_names": ", ".join(native_names)})["verdict"])

    def _screen(self, mention: ScholarMention, native_names: tuple[str, ...]):
        def screen(doc: WebDocument) -> bool:
            bio = self.filter_biographical(doc)
            target = bio and self.filter_target_match(doc, mention, native_names)
            self.audit.record("filter", mention=mention.id, url=doc.url,
                              biographical=bio, target=target)
            return target
        return screen

    # -- extraction ---------------------------------------------------------

    def _extract_one(self, doc: WebDocument, mention: ScholarMention) -> Optional[ScholarProfile]:
        value = self._ask("extract_profile", {
            "url": doc.url, "text": _clip(doc.text),
            "name": mention.raw_name, "affiliation": mention.affiliation})
        try:
            profile = profile_from_dict(value)
        except SchemaError as exc:
            self.audit.record("extract_rejected", mention=mention.id, url=doc.url, reason=str(exc))
            return None
        language = Language.NATIVE if doc.language == "zh" else Language.ROMANIZED
        return replace(profile, provenance=(Provenance(doc.url, doc.fetched_at),), language=language)

    def group(self, profiles: Sequence[ScholarProfile]) -> list[ScholarProfile]:
        """First-fit grouping of profiles that the scorer judges the same person."""
        groups: list[ScholarProfile] = []
        for p in profiles:
            for i, rep in enumerate(groups):
                if self.disambiguator.compare(rep, p).verdict is Verdict.SAME:
                    groups[i] = merge_profiles(rep, p)
                    break
            else:
                groups.append(p)
        return groups

    def extract_profile(self, docs: Sequence[WebDocument], mention: ScholarMention,
                        strategy: Sequence[str] = ()) -> ExtractionOutcome:
        extracted = [(d, p) for d, p in zip(docs, self._map(lambda d: self._extract_one(d, mention), docs))
                     if p is not None]
        if not extracted:
            return ExtractionOutcome(strategy=tuple(strategy))
        evidence = tuple(d.url for d, _ in extracted)
        groups = self.group([p for _, p in extracted])
        if len(groups) == 1:
            return ExtractionOutcome(profile=groups[0], evidence=evidence, strategy=tuple(strategy))
        return ExtractionOutcome(candidates=tuple(groups), evidence=evidence, strategy=tuple(strategy))

    def run(self, mention: ScholarMention, strategies: Sequence[Strategy | str],
            extras: Optional[QueryExtras] = None,
            native_names: Iterable[str] = ()) -> ExtractionOutcome:
        """gather -> filter_biographical -> filter_target_match -> extract_profile."""
        names = [Strategy(s).value for s in strategies]
        docs = self.gather_many(mention, names, extras)
        keep = self._map(self._screen(mention, tuple(native_names)), docs)
        survivors = [d for d, ok in zip(docs, keep) if ok]
        outcome = self.extract_profile(survivors, mention, names)
        self.audit.record("outcome", mention=mention.id, strategy=names,
                          evidence=list(outcome.evidence), found=outcome.found,
                          candidates=len(outcome.candidates))
        return outcome
