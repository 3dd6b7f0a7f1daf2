from __future__ import annotations

import json
from pathlib import Path

import pytest

from scholarlink.config import build_pipeline, default_config_path, fixture_dir, load_config
from scholarlink.evaluation import LabeledDataset, load_pairs
from scholarlink.names import default_table
from scholarlink.profile import ScholarProfile, parse_profile

DATA = Path(__file__).parent / "data"


def sample_text(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def table():
    return default_table()


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return fixture_dir()


@pytest.fixture(scope="session")
def run_config():
    return load_config(default_config_path())


@pytest.fixture
def pipeline(run_config):
    """A fresh offline pipeline (new cache and scripted provider per test)."""
    return build_pipeline(run_config)


@pytest.fixture(scope="session")
def dataset(fixtures) -> LabeledDataset:
    return LabeledDataset.load(fixtures / "dataset.jsonl")


@pytest.fixture(scope="session")
def labeled_pairs(fixtures):
    return load_pairs(fixtures / "pairs.jsonl")


@pytest.fixture(scope="session")
def mentions(dataset):
    return {it.mention.id: it.mention for it in dataset.items}


@pytest.fixture(scope="session")
def zhang_pair() -> tuple[ScholarProfile, ScholarProfile]:
    return parse_profile(sample_text("zhang_brief.json")), parse_profile(sample_text("zhang_detailed.json"))


@pytest.fixture(scope="session")
def qiang_profile() -> ScholarProfile:
    return parse_profile(sample_text("qiang_full.json"))


def read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
