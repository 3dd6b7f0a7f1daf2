"""Institution translation, research-area keywords and native-name recovery."""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import MissingExtra, PreconditionError
from .extract import AuditLog, ExtractAgent
from .names import RomanizationTable, Script, consistent, default_table, detect_script, full_renderings, parse_name
from .profile import ScholarMention
from .search import QueryExtras, Strategy, primary_institution
from .text import collapse_ws, fold, has_cjk, has_latin, match_normalize, contains_token_seq

log = logging.getLogger(__name__)


class Confidence(str, enum.Enum):
    EXACT_EVIDENCE = "exact_evidence"
    INFERRED = "inferred"


@dataclass(frozen=True)
class NativeNameHypothesis:
    native: str
    evidence_urls: tuple[str, ...]
    consistent: Optional[bool]  # None when a character is missing from the table
    confidence: Confidence
    affiliation_support: int = 0  # translated-institution units seen on the best evidence page

    def to_dict(self) -> dict:
        return {"native": self.native, "evidence_urls": list(self.evidence_urls),
                "consistent": self.consistent, "confidence": self.confidence.value,
                "affiliation_support": self.affiliation_support}


class InstitutionTable:
    """Bilingual lookup: English institution unit -> native rendering."""

    def __init__(self, rows: dict[str, str]):
        self._rows = {fold(en): native for en, native in rows.items()}

    @classmethod
    def load(cls, path: Path | str | None = None) -> "InstitutionTable":
        if path is None:
            path = resources.files("scholarlink") / "data" / "institutions.tsv"
        rows = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for rec in csv.reader(fh, delimiter="\t"):
                if len(rec) >= 2 and rec[0].strip() and not rec[0].startswith("#"):
                    rows[rec[0].strip()] = rec[1].strip()
        return cls(rows)

    def get(self, unit: str) -> Optional[str]:
        return self._rows.get(fold(unit))

    def translate(self, affiliation: str) -> Optional[str]:
        """Translate the known units of an affiliation; None when none are known.

        A translation that is contained in a longer one is dropped, so
        "University of Chinese Academy of Sciences, Chinese Academy of
        Sciences" yields only the former.
        """
        found: list[str] = []
        for unit in affiliation.split(","):
            native = self.get(unit)
            if native and native not in found:
                found.append(native)
        kept = [n for n in found if not any(n != m and n in m for m in found)]
        return " ".join(kept) or None


def _is_native(text: str) -> bool:
    return has_cjk(text) and not has_latin(text)


class TranslateAgent:
    def __init__(self, extract: ExtractAgent, llm, institutions: Optional[InstitutionTable] = None,
                 table: Optional[RomanizationTable] = None, provider: Optional[str] = None,
                 audit: Optional[AuditLog] = None):
        self.extract = extract
        self.llm = llm
        self.institutions = institutions or InstitutionTable.load()
        self.table = table or default_table()
        self.provider = provider
        self.audit = audit or extract.audit

    def _ask(self, template: str, slots: dict, language: str = "en"):
        tpl = self.llm.template(template, language)
        return self.llm.complete_structured(tpl, slots, provider=self.provider).value

    def translate_institution(self, affiliation: str) -> str:
        affiliation = collapse_ws(affiliation or "")
        if not affiliation:
            raise PreconditionError("affiliation is empty")
        if _is_native(affiliation):
            return affiliation
        known = self.institutions.translate(affiliation)
        if known:
            return known
        return collapse_ws(self._ask("translate_institution", {"affiliation": affiliation})["institution"])

    def identify_research_area(self, paper_metadata: str, target_language: str = "zh") -> list[str]:
        if not collapse_ws(paper_metadata or ""):
            raise PreconditionError("paper metadata is empty")
        value = self._ask("research_area", {"metadata": paper_metadata, "language": target_language})
        return [collapse_ws(k) for k in value["keywords"] if collapse_ws(k)]

    def retrieve_native_name(self, mention: ScholarMention, use_email: bool = False,
                             translated_institution: Optional[str] = None) -> list[NativeNameHypothesis]:
        """Ask the LLM for the native-script name on each retrieved page.

        Hypotheses are ordered consistent first, then by how many units of
        the translated institution their evidence pages mention (this is
        what separates homonyms), then by number of supporting pages, then
        by the name itself.  Inconsistent ones are kept and flagged.
        """
        if detect_script(mention.raw_name) != Script.LATIN:
            raise PreconditionError("native-name retrieval needs a romanized name")
        if use_email and not mention.email:
            raise MissingExtra("email")
        institution = translated_institution or self.translate_institution(mention.affiliation)
        extras = QueryExtras(translated_institution=institution)
        strategies = [Strategy.PINYIN_INST_NATIVE]
        if use_email:
            strategies.append(Strategy.PINYIN_INST_NATIVE_EMAIL)
        docs = self.extract.gather_many(mention, strategies, extras)

        variant = parse_name(mention.raw_name, self.table)
        renderings = [match_normalize(r) for r in full_renderings(variant)] if variant.opaque is None else []
        email = mention.email if use_email else ""
        units = [u for u in institution.split() if u]
        support: dict[str, list[str]] = {}
        affiliation: dict[str, int] = {}
        exact: set[str] = set()
        for doc in docs:
            value = self._ask("native_name", {
                "url": doc.url, "text": doc.text[:6000], "name": mention.raw_name,
                "affiliation": mention.affiliation, "email": email or ""})
            native = collapse_ws(value.get("native_name") or "")
            if not native:
                continue
            if detect_script(native) != Script.NATIVE_CJK:
                self.audit.record("native_name_rejected", mention=mention.id, url=doc.url, value=native)
                continue
            support.setdefault(native, []).append(doc.url)
            seen = sum(1 for u in units if u in doc.text)
            affiliation[native] = max(affiliation.get(native, 0), seen)
            norm = match_normalize(doc.text)
            if native in doc.text and (
                    any(contains_token_seq(norm, r) for r in renderings)
                    or (email and email.casefold() in norm)):
                exact.add(native)

        hypotheses = [
            NativeNameHypothesis(
                native=native,
                evidence_urls=tuple(urls),
                consistent=consistent(mention.raw_name, native, self.table).verdict,
                confidence=Confidence.EXACT_EVIDENCE if native in exact else Confidence.INFERRED,
                affiliation_support=affiliation[native],
            )
            for native, urls in support.items()
        ]
        rank = {True: 0, None: 1, False: 2}
        hypotheses.sort(key=lambda h: (rank[h.consistent], -h.affiliation_support,
                                       -len(h.evidence_urls), h.native))
        for h in hypotheses:
            self.audit.record("native_name", mention=mention.id, **h.to_dict())
        return hypotheses
