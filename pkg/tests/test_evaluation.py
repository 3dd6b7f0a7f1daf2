from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from scholarlink.disambiguate import MatchDecision, MatchScore, Verdict
from scholarlink.errors import DatasetError
from scholarlink.evaluation import (Cell, Gold, LabeledDataset, LabeledItem, LabeledPair, MetricReport,
                                    disambiguation_accuracy, eval_disambiguation_accuracy, format_percent,
                                    load_pairs, native_name_metrics, profile_correct, profile_recall, rate)
from scholarlink.extract import ExtractionOutcome
from scholarlink.profile import ScholarMention, ScholarProfile
from scholarlink.translate import Confidence, NativeNameHypothesis


def item(mid, **gold):
    gold.setdefault("profile_found", True)
    return LabeledItem(ScholarMention(raw_name="Lin, Jing", affiliation="X University", source_id=mid),
                       Gold(**gold))


def decision(verdict):
    return MatchDecision(MatchScore(), 7, Verdict(verdict))


@pytest.mark.parametrize("value, text", [
    (13 / 15, "86.7%"),
    (0.0005, "0.1%"),   # halves round up
    (0.0, "0.0%"),
    (1.0, "100.0%"),
    (2 / 3, "66.7%"),
    (0.125, "12.5%"),
])
def test_format_percent(value, text):
    assert format_percent(value) == text


@given(st.integers(0, 1000), st.integers(1, 1000))
def test_rate_and_percent_stay_in_range(hits, n):
    hits = min(hits, n)
    r = rate(hits, n)
    assert 0.0 <= r <= 1.0 and format_percent(r).endswith("%")
    assert rate(0, 0) == 0.0


def test_cell_validation():
    with pytest.raises(ValueError):
        Cell(n=2, hits=3)
    with pytest.raises(ValueError):
        Cell(n=2, hits=1, recall=1.5)


def test_profile_correctness_needs_evidence_inside_gold():
    gold = Gold(profile_found=True, profile_urls=("https://a.org/1", "https://a.org/2"))
    p = ScholarProfile(name="A")
    assert profile_correct(ExtractionOutcome(profile=p, evidence=("https://a.org/2",)), gold)
    assert not profile_correct(ExtractionOutcome(profile=p, evidence=("https://a.org/2", "https://b.org/")), gold)
    assert not profile_correct(ExtractionOutcome(candidates=(p, p)), gold)
    assert not profile_correct(None, gold)


def test_profile_recall_counts():
    items = [item("a", profile_urls=("u1",)), item("b", profile_urls=("u2",)),
             item("c", profile_found=False)]
    p = ScholarProfile(name="A")
    outcomes = {"a:Lin, Jing": ExtractionOutcome(profile=p, evidence=("u1",)),
                "b:Lin, Jing": ExtractionOutcome(profile=p, evidence=("u9",)),
                "c:Lin, Jing": ExtractionOutcome(profile=p, evidence=("u3",))}
    cell = profile_recall(items, outcomes)
    assert (cell.n, cell.hits, cell.false_positives, cell.recall) == (2, 1, 2, 0.5)


def test_native_name_metrics():
    items = [item("a", native_name="林静"), item("b", native_name="林静"), item("c", native_name="林静"),
             item("d")]

    def hyp(native):
        return NativeNameHypothesis(native, ("u",), True, Confidence.INFERRED)

    cell = native_name_metrics(items, {"a:Lin, Jing": [hyp("林静")], "b:Lin, Jing": [hyp("林晶"), hyp("林静")],
                                       "c:Lin, Jing": []})
    assert (cell.n, cell.hits, cell.recall, cell.precision) == (3, 2, 2 / 3, 0.5)


def test_disambiguation_accuracy_hand_counts():
    pairs = [LabeledPair(str(i), None, None, same) for i, same in enumerate([True, True, False, False, True])]
    decisions = [decision(v) for v in ["same", "different", "same", "different", "undecidable"]]
    cell = disambiguation_accuracy(pairs, decisions)
    assert cell.details == {"tp": 1, "tn": 1, "fp": 1, "fn": 1}
    assert cell.n == 4 and cell.accuracy == 0.5 and cell.undecidable == 1
    with pytest.raises(DatasetError):
        disambiguation_accuracy(pairs, decisions[:2])


def test_report_rendering_and_json():
    report = MetricReport("Profile recall", ("recall",))
    report.cells[("full", "fixture", "stub")] = Cell(n=3, hits=2, recall=2 / 3)
    report.cells[("full", "bing", "stub")] = Cell(n=3, hits=3, recall=1.0)
    text = report.render_text()
    assert text.startswith("Profile recall\n")
    assert "| full (recall) | fixture | bing   |" in text
    assert "| stub          | 66.7%   | 100.0% |" in text
    data = json.loads(report.to_json())
    assert [c["backend"] for c in data["cells"]] == ["fixture", "bing"]


def test_missing_cells_render_as_dash():
    report = MetricReport("R", ("recall",))
    report.cells[("a", "x", "p")] = Cell(n=1, hits=1, recall=1.0)
    report.cells[("b", "y", "p")] = Cell(n=1, hits=0, recall=0.0)
    assert "| p          | 100.0% | - |" in report.render_text()


def test_eval_disambiguation_requires_pairs():
    with pytest.raises(DatasetError):
        eval_disambiguation_accuracy([], {})


# -- dataset validation -------------------------------------------------------

def test_dataset_validation():
    with pytest.raises(DatasetError):
        LabeledDataset("empty", ())
    with pytest.raises(DatasetError):
        LabeledDataset("dupes", (item("a"), item("a")))
    with pytest.raises(DatasetError):
        LabeledDataset("dangling", (item("a", same_as="zzz"),))
    with pytest.raises(DatasetError):
        LabeledDataset("one-way", (item("a", same_as="b:Lin, Jing"), item("b")))
    ok = LabeledDataset("ok", (item("a", same_as="b:Lin, Jing"), item("b", same_as="a:Lin, Jing")))
    assert set(ok.by_id()) == {"a:Lin, Jing", "b:Lin, Jing"}


def test_dataset_load_errors(tmp_path):
    with pytest.raises(DatasetError):
        LabeledDataset.load(tmp_path / "missing.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"mention": {"raw_name": "x", "affiliation": "y"}}\n')
    with pytest.raises(DatasetError):
        LabeledDataset.load(bad)


def test_gold_reachable_defaults_to_profile_found():
    assert Gold.from_dict({"profile_found": False}).reachable is False
    assert Gold.from_dict({"profile_found": True, "reachable": False}).reachable is False


def test_load_pairs_errors(tmp_path):
    path = tmp_path / "pairs.jsonl"
    path.write_text("")
    with pytest.raises(DatasetError):
        load_pairs(path)
    path.write_text('{"id": "a", "first": null, "second": null, "same": true}\n' * 2)
    with pytest.raises(DatasetError):
        load_pairs(path)
    path.write_text('{"id": "a", "first": {"name": 1}, "same": true}\n')
    with pytest.raises(DatasetError):
        load_pairs(path)


def test_fixture_files_load(dataset, labeled_pairs):
    assert len(dataset.items) == 27 and len(labeled_pairs) == 15


def test_full_recall_equals_hand_count_of_reachable_mentions(run_config, dataset):
    from scholarlink.config import build_pipeline
    from scholarlink.evaluation import eval_profile_recall
    report = eval_profile_recall(dataset, lambda s, b, p: build_pipeline(run_config, mode=s).workflow,
                                 [("full", "fixture", "stub")])
    cell = report.cells[("full", "fixture", "stub")]
    reachable = sum(1 for it in dataset.items if it.gold.reachable)
    with_profile = sum(1 for it in dataset.items if it.gold.profile_found)
    assert (cell.hits, cell.n, cell.false_positives) == (reachable, with_profile, 0) == (23, 24, 0)
