"""Command-line entry point.

Exit codes: 0 success (including "not found"), 2 usage, 3 config,
4 search backend / LLM provider, 5 data or schema.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import RunConfig, build_pipeline, default_config_path, load_config
from .disambiguate import Disambiguator
from .errors import ConfigError, DataError, GatewayError, InvalidMention
from .evaluation import (LabeledDataset, eval_disambiguation_accuracy, eval_native_name,
                         eval_profile_recall, load_pairs)
from .profile import Origin, ScholarMention, parse_outcome, profile_to_dict, write_profiles
from .workflow import Mode

log = logging.getLogger("scholarlink")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_GATEWAY, EXIT_DATA = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML run config (default: bundled fixture config)")
    p.add_argument("--backend", help="search backend name (comma list for evaluate)")
    p.add_argument("--provider", help="LLM provider name (comma list for evaluate)")
    p.add_argument("--strategy", help="workflow mode: full, pinyin_inst_en, pinyin_inst_native "
                                      "(comma list for evaluate)")
    p.add_argument("--k", type=int, help="results read per query")
    p.add_argument("--threshold", type=int, help="same-scholar score threshold")
    p.add_argument("--seed", type=int, help="seed recorded in the run manifest")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="scholarlink",
                                     description="Link scholar mentions to web profiles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def mention_args(p):
        p.add_argument("--name", required=True, help="name as printed, e.g. 'Zhang, Yihui'")
        p.add_argument("--affiliation", required=True)
        p.add_argument("--origin", choices=[o.value for o in Origin], default=Origin.PAPER_AUTHOR.value)
        p.add_argument("--source-id", default="cli")
        p.add_argument("--metadata", help="paper title/abstract/venue text")

    p = sub.add_parser("extract", parents=[common], help="extract a profile for one mention")
    mention_args(p)
    p.add_argument("--email", help="author email address")

    p = sub.add_parser("translate-name", parents=[common], help="recover native-name hypotheses")
    mention_args(p)
    p.add_argument("--email", nargs="?", const=True, default=None,
                   help="use email augmentation; optionally give the address")

    p = sub.add_parser("compare", parents=[common], help="score two profile files")
    p.add_argument("first", type=Path)
    p.add_argument("second", type=Path)

    p = sub.add_parser("run", parents=[common], help="resolve a manifest of mentions")
    p.add_argument("manifest", type=Path)
    p.add_argument("--no-email", action="store_true", help="disable email-augmented queries")

    p = sub.add_parser("evaluate", parents=[common], help="metric reports over a labeled dataset")
    p.add_argument("dataset", type=Path, nargs="?")
    p.add_argument("--pairs", type=Path, help="labeled profile pairs for disambiguation accuracy")
    return parser


# -- helpers ----------------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(args.config or default_config_path())
    cfg = cfg.override(k=args.k, threshold=args.threshold, seed=args.seed)
    single = lambda v: v if v is None or "," not in v else None
    return cfg.override(backend=single(args.backend), provider=single(args.provider))


def _mode(value: Optional[str], default: str) -> str:
    value = value or default
    try:
        return Mode(value).value
    except ValueError:
        raise UsageError(f"unknown strategy {value!r}; choose from {[m.value for m in Mode]}") from None


def _mention(args, email: Optional[str]) -> ScholarMention:
    try:
        return ScholarMention(raw_name=args.name, affiliation=args.affiliation, email=email,
                              origin=Origin(args.origin), source_id=args.source_id,
                              paper_metadata=args.metadata)
    except InvalidMention as exc:
        raise UsageError(str(exc)) from exc


def _out(args, default: Optional[str] = None) -> Optional[Path]:
    out = args.out or (Path(default) if default else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _run_manifest(out: Path, cfg: RunConfig, pipeline, command: str, extra: dict) -> None:
    _write_json(out / "run_manifest.json", {
        "command": command,
        "version": __version__,
        "config": cfg.source,
        "config_hash": cfg.digest(),
        "cache_epoch": pipeline.search.cache.epoch() if pipeline else None,
        "seed": cfg.seed,
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **extra,
    })


def _read_profile_file(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_outcome(text) if text.strip() else None


# -- commands ---------------------------------------------------------------

def cmd_extract(args) -> int:
    cfg = _config(args)
    out = _out(args)
    pipeline = build_pipeline(cfg, mode=_mode(args.strategy, cfg.mode),
                              audit_path=out / "audit.jsonl" if out else None)
    state = pipeline.workflow.run(_mention(args, args.email))
    print(state.outcome.to_text())
    if out:
        _write_json(out / "outcome.json", state.to_dict())
        if state.outcome.profile is not None:
            write_profiles(out / "profiles.jsonl", [state.outcome.profile])
        _run_manifest(out, cfg, pipeline, "extract", {"mode": pipeline.workflow.mode.value})
    return EXIT_OK


def cmd_translate_name(args) -> int:
    use_email = args.email is not None
    address = args.email if isinstance(args.email, str) else None
    if args.email is True:
        raise UsageError("--email needs an address for this mention (e.g. --email name@host)")
    cfg = _config(args)
    out = _out(args)
    pipeline = build_pipeline(cfg, audit_path=out / "audit.jsonl" if out else None)
    hyps = pipeline.translate.retrieve_native_name(_mention(args, address), use_email=use_email)
    print(json.dumps([h.to_dict() for h in hyps], ensure_ascii=False, indent=2))
    if out:
        _write_json(out / "hypotheses.json", [h.to_dict() for h in hyps])
        _run_manifest(out, cfg, pipeline, "translate-name", {"use_email": use_email})
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    a, b = _read_profile_file(args.first), _read_profile_file(args.second)
    decision = Disambiguator(threshold=cfg.threshold, keyword_cap=cfg.keyword_cap).compare(a, b)
    print(json.dumps(decision.to_dict(), ensure_ascii=False, indent=2))
    out = _out(args)
    if out:
        record = {"first": str(args.first), "second": str(args.second), **decision.to_dict()}
        with open(out / "decisions.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    return EXIT_OK


def _read_manifest(path: Path) -> list[ScholarMention]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    mentions = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{n}: {exc}") from exc
        mentions.append(ScholarMention.from_dict(rec.get("mention", rec)))
    return mentions


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.no_email:
        cfg = cfg.override(use_email=False)
    mentions = _read_manifest(args.manifest)
    out = _out(args, "scholarlink-out")
    (out / "audit.jsonl").unlink(missing_ok=True)
    pipeline = build_pipeline(cfg, mode=_mode(args.strategy, cfg.mode), audit_path=out / "audit.jsonl")
    states = pipeline.workflow.run_all(mentions)
    result = pipeline.workflow.resolve(states)
    _write_json(out / "mapping.json", result.mapping)
    _write_jsonl(out / "registry.jsonl", ({"scholar_id": sid, "profile": profile_to_dict(p)}
                                          for sid, p in result.registry.items()))
    _write_json(out / "unresolved.json", {"unresolved": result.unresolved, "candidates": result.candidates})
    _write_jsonl(out / "decisions.jsonl", result.decisions)
    _write_jsonl(out / "states.jsonl", (s.to_dict() for s in states))
    _run_manifest(out, cfg, pipeline, "run", {"mode": pipeline.workflow.mode.value,
                                              "mentions": len(mentions)})
    print(f"{len(mentions)} mentions: {len(result.mapping)} mapped to {len(result.registry)} scholars, "
          f"{len(result.unresolved)} unresolved; results in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if args.dataset is None and args.pairs is None:
        raise UsageError("give a dataset, --pairs, or both")
    out = _out(args, "scholarlink-eval")
    backends = (args.backend or cfg.backend).split(",")
    providers = (args.provider or cfg.provider).split(",")
    strategies = [_mode(s, cfg.mode) for s in (args.strategy.split(",") if args.strategy
                                               else [m.value for m in Mode])]
    reports = []
    if args.dataset is not None:
        dataset = LabeledDataset.load(args.dataset)

        def workflow(strategy, backend, provider):
            return build_pipeline(cfg, mode=strategy, backend=backend, provider=provider).workflow

        def translator(strategy, backend, provider):
            return build_pipeline(cfg, backend=backend, provider=provider).translate

        reports.append(eval_profile_recall(
            dataset, workflow, [(s, b, p) for s in strategies for b in backends for p in providers]))
        reports.append(eval_native_name(
            dataset, translator, [(s, b, p) for s in ("pinyin_inst_native", "pinyin_inst_native_email")
                                  for b in backends for p in providers]))
    if args.pairs is not None:
        pairs = load_pairs(args.pairs)
        judges = {p: build_pipeline(cfg, provider=p).disambiguator for p in providers}
        reports.append(eval_disambiguation_accuracy(pairs, judges))
    text = "\n".join(r.render_text() for r in reports)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.json").write_text(
        json.dumps([r.to_dict() for r in reports], ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    _run_manifest(out, cfg, None, "evaluate", {"strategies": strategies, "backends": backends,
                                                "providers": providers})
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "translate-name": cmd_translate_name,
    "compare": cmd_compare,
    "run": cmd_run,
    "evaluate": cmd_evaluate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    random.seed(args.seed or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"scholarlink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"scholarlink: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GatewayError as exc:
        print(f"scholarlink: gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except DataError as exc:
        print(f"scholarlink: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
