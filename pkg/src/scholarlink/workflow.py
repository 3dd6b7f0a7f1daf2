"""Per-mention state machine and cross-mention resolution.

run():

    consistency_check --native script----------------> direct_search -> done
                      --latin, non-pinyin or mixed----> direct_search -> done
                      --pinyin, baseline mode---------> direct_search -> done
                      --latin pinyin------------------> translate_enrich
    translate_enrich  --profile or candidates---------> done / multi_identity
                      --nothing found-----------------> native_name_search
    native_name_search -------------------------------> done / multi_identity

resolve() folds terminal states into a registry of merged profiles,
first-fit in input order.
"""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .disambiguate import Disambiguator, MatchDecision, Verdict
from .errors import PreconditionError
from .extract import ExtractAgent, ExtractionOutcome
from .names import Script, detect_script, parse_name
from .profile import ScholarMention, ScholarProfile, merge_profiles
from .search import QueryExtras, Strategy
from .translate import NativeNameHypothesis, TranslateAgent

log = logging.getLogger(__name__)


class Step(str, enum.Enum):
    CONSISTENCY_CHECK = "consistency_check"
    DIRECT_SEARCH = "direct_search"
    TRANSLATE_ENRICH = "translate_enrich"
    NATIVE_NAME_SEARCH = "native_name_search"
    MULTI_IDENTITY = "multi_identity"
    DONE = "done"


LEGAL = {
    Step.CONSISTENCY_CHECK: {Step.DIRECT_SEARCH, Step.TRANSLATE_ENRICH},
    Step.DIRECT_SEARCH: {Step.MULTI_IDENTITY, Step.DONE},
    Step.TRANSLATE_ENRICH: {Step.NATIVE_NAME_SEARCH, Step.MULTI_IDENTITY, Step.DONE},
    Step.NATIVE_NAME_SEARCH: {Step.MULTI_IDENTITY, Step.DONE},
    Step.MULTI_IDENTITY: {Step.DONE},
    Step.DONE: set(),
}


class Mode(str, enum.Enum):
    """How far the romanized-name path goes."""
    PINYIN_INST_EN = "pinyin_inst_en"          # baseline: pinyin + English institution
    PINYIN_INST_NATIVE = "pinyin_inst_native"  # + translated institution, no native-name stage
    FULL = "full"                              # + native-name stage


@dataclass
class WorkflowState:
    mention: ScholarMention
    step: Step = Step.CONSISTENCY_CHECK
    history: list[Step] = field(default_factory=lambda: [Step.CONSISTENCY_CHECK])
    translated_institution: Optional[str] = None
    research_keywords: tuple[str, ...] = ()
    hypotheses: tuple[NativeNameHypothesis, ...] = ()
    outcome: Optional[ExtractionOutcome] = None

    def advance(self, step: Step) -> None:
        if step not in LEGAL[self.step]:
            raise RuntimeError(f"illegal transition {self.step.value} -> {step.value}")
        self.step = step
        self.history.append(step)

    def finish(self, outcome: ExtractionOutcome) -> "WorkflowState":
        self.outcome = outcome
        if outcome.candidates:
            self.advance(Step.MULTI_IDENTITY)
        self.advance(Step.DONE)
        return self

    def to_dict(self) -> dict:
        return {
            "mention": self.mention.id,
            "path": [s.value for s in self.history],
            "translated_institution": self.translated_institution,
            "research_keywords": list(self.research_keywords),
            "hypotheses": [h.to_dict() for h in self.hypotheses],
            "outcome": self.outcome.to_dict() if self.outcome else None,
        }


@dataclass
class ResolutionResult:
    mapping: dict[str, str]
    registry: dict[str, ScholarProfile]
    unresolved: list[str]
    decisions: list[dict]
    paths: dict[str, list[str]] = field(default_factory=dict)
    candidates: dict[str, int] = field(default_factory=dict)  # mention id -> candidate count


class Workflow:
    def __init__(self, extract: ExtractAgent, translate: TranslateAgent,
                 disambiguator: Optional[Disambiguator] = None, mode: Mode | str = Mode.FULL,
                 use_email: bool = True, max_hypotheses: int = 3, workers: int = 1):
        self.extract = extract
        self.translate = translate
        self.disambiguator = disambiguator or extract.disambiguator
        self.mode = Mode(mode)
        self.use_email = use_email
        self.max_hypotheses = max_hypotheses
        self.workers = max(1, workers)

    def run(self, mention: ScholarMention) -> WorkflowState:
        state = WorkflowState(mention)
        script = detect_script(mention.raw_name)
        if script == Script.NATIVE_CJK:
            state.advance(Step.DIRECT_SEARCH)
            state.translated_institution = self.translate.translate_institution(mention.affiliation)
            extras = QueryExtras(native_name=mention.raw_name,
                                 translated_institution=state.translated_institution)
            return state.finish(self.extract.run(mention, [Strategy.NATIVE_INST_NATIVE], extras))

        if script == Script.MIXED or parse_name(mention.raw_name).opaque is not None:
            # Not a pinyin name: nothing to translate, search it as printed.
            state.advance(Step.DIRECT_SEARCH)
            return state.finish(self.extract.run(mention, [Strategy.PINYIN_INST_EN]))

        if self.mode is Mode.PINYIN_INST_EN:
            state.advance(Step.DIRECT_SEARCH)
            return state.finish(self.extract.run(mention, [Strategy.PINYIN_INST_EN]))

        state.advance(Step.TRANSLATE_ENRICH)
        state.translated_institution = self.translate.translate_institution(mention.affiliation)
        if mention.paper_metadata:
            state.research_keywords = tuple(self.translate.identify_research_area(mention.paper_metadata, "zh"))
        extras = QueryExtras(translated_institution=state.translated_institution,
                             research_keywords=state.research_keywords)
        email = self.use_email and bool(mention.email)
        strategies = [Strategy.PINYIN_INST_NATIVE]
        if email:
            strategies.append(Strategy.PINYIN_INST_NATIVE_EMAIL)
        outcome = self.extract.run(mention, strategies, extras)
        if outcome.found or self.mode is Mode.PINYIN_INST_NATIVE:
            return state.finish(outcome)

        state.advance(Step.NATIVE_NAME_SEARCH)
        state.hypotheses = tuple(self.translate.retrieve_native_name(
            mention, use_email=email, translated_institution=state.translated_institution))
        # Inconsistent hypotheses stay on record but are not searched.
        usable = [h for h in state.hypotheses if h.consistent is not False][: self.max_hypotheses]
        for hyp in usable:
            extras = QueryExtras(native_name=hyp.native,
                                 translated_institution=state.translated_institution,
                                 research_keywords=state.research_keywords)
            outcome = self.extract.run(mention, [Strategy.NATIVE_INST_NATIVE], extras,
                                       native_names=[hyp.native])
            if outcome.found:
                break
        return state.finish(outcome)

    def run_all(self, mentions: Sequence[ScholarMention]) -> list[WorkflowState]:
        if self.workers == 1:
            return [self.run(m) for m in mentions]
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(self.run, mentions))

    def resolve(self, states: Sequence[WorkflowState]) -> ResolutionResult:
        return resolve(states, self.disambiguator)


def _log(decisions: list, kind: str, first: str, second: str, d: MatchDecision) -> None:
    decisions.append({"kind": kind, "first": first, "second": second, **d.to_dict()})


def resolve(states: Sequence[WorkflowState], disambiguator: Optional[Disambiguator] = None) -> ResolutionResult:
    """Greedy first-fit agglomeration of extracted profiles.

    After a merge the grown profile may now match another registry entry;
    such entries are coalesced so registry profiles stay pairwise
    different.
    """
    disambiguator = disambiguator or Disambiguator()
    registry: dict[str, ScholarProfile] = {}
    members: dict[str, list[str]] = {}
    unresolved: list[str] = []
    decisions: list[dict] = []
    paths: dict[str, list[str]] = {}
    candidates: dict[str, int] = {}
    counter = 0

    for state in states:
        if state.step is not Step.DONE or state.outcome is None:
            raise PreconditionError(f"mention {state.mention.id} has no terminal state")
        mid = state.mention.id
        paths[mid] = [s.value for s in state.history]
        profile = state.outcome.profile
        if profile is None:
            unresolved.append(mid)
            if state.outcome.candidates:
                candidates[mid] = len(state.outcome.candidates)
            continue
        target = None
        for sid, rep in registry.items():
            decision = disambiguator.compare(profile, rep)
            _log(decisions, "attach", mid, sid, decision)
            if decision.verdict is Verdict.SAME:
                target = sid
                break
        if target is None:
            counter += 1
            target = f"scholar-{counter:03d}"
            registry[target] = profile
            members[target] = [mid]
        else:
            registry[target] = merge_profiles(registry[target], profile)
            members[target].append(mid)
            _coalesce(target, registry, members, disambiguator, decisions)

    mapping = {mid: sid for sid, mids in members.items() for mid in mids}
    order = {s.mention.id: i for i, s in enumerate(states)}
    mapping = dict(sorted(mapping.items(), key=lambda kv: order[kv[0]]))
    return ResolutionResult(mapping, registry, unresolved, decisions, paths, candidates)


def _coalesce(sid: str, registry: dict, members: dict, disambiguator: Disambiguator,
              decisions: list) -> None:
    changed = True
    while changed:
        changed = False
        for other in list(registry):
            if other == sid:
                continue
            decision = disambiguator.compare(registry[sid], registry[other])
            _log(decisions, "coalesce", sid, other, decision)
            if decision.verdict is Verdict.SAME:
                registry[sid] = merge_profiles(registry[sid], registry.pop(other))
                members[sid].extend(members.pop(other))
                changed = True
                break
