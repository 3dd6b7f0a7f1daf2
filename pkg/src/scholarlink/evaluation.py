"""Recall / precision / accuracy over labeled datasets, rendered as grid tables.

Metric definitions:

* profile recall: mentions resolved to a correct profile / mentions whose
  scholar has a profile.  A profile is correct when every evidence url
  belongs to the gold scholar.
* native-name recall: mentions with at least one hypothesis / mentions
  with a gold native name; precision: mentions whose top hypothesis equals
  the gold name / mentions with at least one hypothesis.
* disambiguation accuracy: correct verdicts / decided pairs.  Undecidable
  pairs are left out of the denominator and counted separately.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .disambiguate import Disambiguator, MatchDecision, Verdict
from .errors import DatasetError, InvalidMention, SchemaError
from .extract import ExtractionOutcome
from .names import Script, detect_script
from .profile import ScholarMention, ScholarProfile, profile_from_dict
from .translate import NativeNameHypothesis


# -- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class Gold:
    profile_found: bool
    scholar: Optional[str] = None
    native_name: Optional[str] = None
    same_as: Optional[str] = None
    profile_urls: tuple[str, ...] = ()
    reachable: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "Gold":
        return cls(
            profile_found=bool(d["profile_found"]),
            scholar=d.get("scholar"),
            native_name=d.get("native_name"),
            same_as=d.get("same_as"),
            profile_urls=tuple(d.get("profile_urls", ())),
            reachable=bool(d.get("reachable", d["profile_found"])),
        )


@dataclass(frozen=True)
class LabeledItem:
    mention: ScholarMention
    gold: Gold


@dataclass(frozen=True)
class LabeledDataset:
    name: str
    items: tuple[LabeledItem, ...]
    description: str = ""

    def __post_init__(self):
        validate_dataset(self)

    @classmethod
    def load(cls, path: Path | str, name: Optional[str] = None, description: str = "") -> "LabeledDataset":
        path = Path(path)
        items = []
        try:
            for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                items.append(LabeledItem(ScholarMention.from_dict(rec["mention"]),
                                         Gold.from_dict(rec["gold"])))
        except (OSError, json.JSONDecodeError, KeyError, InvalidMention) as exc:
            raise DatasetError(f"{path}: {exc}") from exc
        return cls(name or path.stem, tuple(items), description)

    def by_id(self) -> dict[str, LabeledItem]:
        return {it.mention.id: it for it in self.items}


def validate_dataset(ds: LabeledDataset) -> None:
    if not ds.items:
        raise DatasetError(f"dataset {ds.name!r} is empty")
    ids = [it.mention.id for it in ds.items]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise DatasetError(f"duplicate mention ids: {dupes}")
    index = dict(zip(ids, ds.items))
    for it in ds.items:
        partner = it.gold.same_as
        if partner is None:
            continue
        if partner not in index:
            raise DatasetError(f"{it.mention.id}: same_as points at unknown id {partner!r}")
        if index[partner].gold.same_as != it.mention.id:
            raise DatasetError(f"same_as is not symmetric between {it.mention.id!r} and {partner!r}")


@dataclass(frozen=True)
class LabeledPair:
    id: str
    first: Optional[ScholarProfile]
    second: Optional[ScholarProfile]
    same: bool


def load_pairs(path: Path | str) -> list[LabeledPair]:
    pairs = []
    try:
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            pairs.append(LabeledPair(
                id=rec["id"],
                first=profile_from_dict(rec["first"]) if rec.get("first") else None,
                second=profile_from_dict(rec["second"]) if rec.get("second") else None,
                same=bool(rec["same"])))
    except (OSError, json.JSONDecodeError, KeyError, SchemaError) as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    if not pairs:
        raise DatasetError(f"{path}: no labeled pairs")
    ids = [p.id for p in pairs]
    if len(set(ids)) != len(ids):
        raise DatasetError(f"{path}: duplicate pair ids")
    return pairs


# -- pure metrics -----------------------------------------------------------

def rate(hits: int, n: int) -> float:
    return hits / n if n else 0.0


def format_percent(value: float) -> str:
    """One-decimal percentage, rounding halves up (0.86666 -> "86.7%")."""
    pct = (Decimal(repr(value)) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return f"{pct}%"


@dataclass(frozen=True)
class Cell:
    n: int
    hits: int
    false_positives: int = 0
    recall: Optional[float] = None
    precision: Optional[float] = None
    accuracy: Optional[float] = None
    undecidable: int = 0
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.hits <= self.n:
            raise ValueError("hits must lie in [0, n]")
        for v in (self.recall, self.precision, self.accuracy):
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError("rates must lie in [0, 1]")


def profile_correct(outcome: Optional[ExtractionOutcome], gold: Gold) -> bool:
    if outcome is None or outcome.profile is None:
        return False
    return bool(outcome.evidence) and set(outcome.evidence) <= set(gold.profile_urls)


def profile_recall(items: Sequence[LabeledItem], outcomes: Mapping[str, ExtractionOutcome]) -> Cell:
    eligible = [it for it in items if it.gold.profile_found]
    hits = sum(profile_correct(outcomes.get(it.mention.id), it.gold) for it in eligible)
    wrong = sum(1 for it in items
                if (o := outcomes.get(it.mention.id)) is not None and o.profile is not None
                and not profile_correct(o, it.gold))
    return Cell(n=len(eligible), hits=hits, false_positives=wrong, recall=rate(hits, len(eligible)))


def native_name_metrics(items: Sequence[LabeledItem],
                        hypotheses: Mapping[str, Sequence[NativeNameHypothesis]]) -> Cell:
    eligible = [it for it in items if it.gold.native_name]
    answered = [it for it in eligible if hypotheses.get(it.mention.id)]
    correct = sum(1 for it in answered if hypotheses[it.mention.id][0].native == it.gold.native_name)
    return Cell(n=len(eligible), hits=len(answered), false_positives=len(answered) - correct,
                recall=rate(len(answered), len(eligible)), precision=rate(correct, len(answered)),
                details={"correct": correct})


def disambiguation_accuracy(pairs: Sequence[LabeledPair], decisions: Sequence[MatchDecision]) -> Cell:
    if len(pairs) != len(decisions):
        raise DatasetError("one decision per labeled pair is required")
    tp = tn = fp = fn = undecidable = 0
    for pair, d in zip(pairs, decisions):
        if d.verdict is Verdict.UNDECIDABLE:
            undecidable += 1
        elif d.verdict is Verdict.SAME:
            tp, fp = (tp + 1, fp) if pair.same else (tp, fp + 1)
        else:
            tn, fn = (tn + 1, fn) if not pair.same else (tn, fn + 1)
    decided = tp + tn + fp + fn
    return Cell(n=decided, hits=tp + tn, false_positives=fp, accuracy=rate(tp + tn, decided),
                undecidable=undecidable, details={"tp": tp, "tn": tn, "fp": fp, "fn": fn})


# -- reports ----------------------------------------------------------------

@dataclass
class MetricReport:
    title: str
    metrics: tuple[str, ...]
    cells: dict[tuple[str, str, str], Cell] = field(default_factory=dict)  # (strategy, backend, provider)

    def axes(self) -> tuple[list[str], list[str], list[str]]:
        def ordered(i):
            out = []
            for key in self.cells:
                if key[i] not in out:
                    out.append(key[i])
            return out
        return ordered(0), ordered(1), ordered(2)

    def render_text(self) -> str:
        strategies, backends, providers = self.axes()
        blocks = [self.title]
        for metric in self.metrics:
            for strategy in strategies:
                header = [f"{strategy} ({metric})"] + backends
                rows = [header]
                for provider in providers:
                    row = [provider]
                    for backend in backends:
                        cell = self.cells.get((strategy, backend, provider))
                        value = getattr(cell, metric) if cell else None
                        row.append("-" if value is None else format_percent(value))
                    rows.append(row)
                widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
                rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
                lines = [rule]
                for j, r in enumerate(rows):
                    lines.append("| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |")
                    if j == 0:
                        lines.append(rule)
                lines.append(rule)
                blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "metrics": list(self.metrics),
            "cells": [
                {"strategy": s, "backend": b, "provider": p, **asdict(c)}
                for (s, b, p), c in self.cells.items()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"


# -- harness ----------------------------------------------------------------

Grid = Iterable[tuple[str, str, str]]


def eval_profile_recall(dataset: LabeledDataset, workflow_factory: Callable[[str, str, str], object],
                        grid: Grid) -> MetricReport:
    """``workflow_factory(strategy, backend, provider)`` returns a Workflow."""
    report = MetricReport("Profile recall", ("recall",))
    for strategy, backend, provider in grid:
        wf = workflow_factory(strategy, backend, provider)
        states = wf.run_all([it.mention for it in dataset.items])
        outcomes = {s.mention.id: s.outcome for s in states}
        report.cells[(strategy, backend, provider)] = profile_recall(dataset.items, outcomes)
    return report


def eval_native_name(dataset: LabeledDataset, translate_factory: Callable[[str, str, str], object],
                     grid: Grid) -> MetricReport:
    """Grid strategies: ``pinyin_inst_native`` or ``pinyin_inst_native_email``."""
    report = MetricReport("Native-name recall and precision", ("recall", "precision"))
    items = [it for it in dataset.items if detect_script(it.mention.raw_name) == Script.LATIN]
    for strategy, backend, provider in grid:
        agent = translate_factory(strategy, backend, provider)
        with_email = strategy.endswith("_email")
        hyps = {}
        for it in items:
            if not it.gold.native_name:
                continue
            hyps[it.mention.id] = agent.retrieve_native_name(
                it.mention, use_email=with_email and bool(it.mention.email))
        report.cells[(strategy, backend, provider)] = native_name_metrics(items, hyps)
    return report


def eval_disambiguation_accuracy(pairs: Sequence[LabeledPair],
                                 disambiguators: Mapping[str, Disambiguator],
                                 strategy: str = "retrieved_profiles", backend: str = "-") -> MetricReport:
    """One cell per provider key in ``disambiguators``."""
    if not pairs:
        raise DatasetError("no labeled pairs")
    report = MetricReport("Disambiguation accuracy", ("accuracy",))
    for provider, d in disambiguators.items():
        decisions = [d.compare(p.first, p.second) for p in pairs]
        report.cells[(strategy, backend, provider)] = disambiguation_accuracy(pairs, decisions)
    return report
