"""Build the offline fixture corpus from ``fixtures/world.yaml``.

Usage::

    python -m scholarlink.fixture_world            # rewrite the fixture files
    python -m scholarlink.fixture_world --check    # fail if they are stale

Outputs, relative to the fixture directory:

* ``corpus/`` page files plus ``corpus/manifest.jsonl``
* ``stub_script.jsonl``  scripted LLM responses
* ``mentions.jsonl``     run manifest
* ``dataset.jsonl``      mentions with gold labels
* ``pairs.jsonl``        labeled profile pairs

The scripted responses answer the way a careful reader of each page
would: a page is on-target for a mention only when its subject is one of
the mention's intended scholars, and a native name is only read off a
page that shows it next to the romanized name or the given email.
"""
from __future__ import annotations

import argparse
import html
import itertools
import json
import sys
from pathlib import Path
from typing import Optional

import yaml

from .config import fixture_dir
from .disambiguate import Disambiguator
from .errors import ScholarLinkError
from .names import Script, detect_script, full_renderings, parse_name
from .profile import profile_from_dict
from .text import contains_token_seq, match_normalize
from .translate import InstitutionTable

LIST_FIELDS = ("email", "keywords", "education_track", "professional_track", "honor_track")


class WorldError(ScholarLinkError):
    pass


def _dump(records) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def subset(profile: dict, keep: dict) -> dict:
    """Name plus the kept workplace and list items of ``profile``."""
    out = {"name": profile["name"], "workplace": "null"}
    if "workplace" in keep:
        out["workplace"] = profile["workplace"]
    for f in LIST_FIELDS:
        items = profile.get(f, [])
        sel = keep.get(f)
        if sel == "all":
            out[f] = list(items)
        elif sel:
            out[f] = [items[i] for i in sel]
        elif f != "email":
            out[f] = []
    return out


def render_html(title: str, text: str) -> str:
    body = "\n".join(f"    <p>{html.escape(line)}</p>" for line in text.strip().splitlines())
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n"
        f"  <meta charset=\"utf-8\">\n  <title>{html.escape(title)}</title>\n"
        "  <script>window.analytics = {};</script>\n</head>\n<body>\n"
        "  <nav><a href=\"/\">首页 Home</a> | <a href=\"/people\">师资 People</a> | <a href=\"/news\">新闻 News</a></nav>\n"
        "  <header>门户网站 Portal</header>\n"
        f"  <main>\n{body}\n  </main>\n"
        "  <footer>版权所有 Copyright. 联系我们 Contact us.</footer>\n</body>\n</html>\n"
    )


def render_nav_only(title: str, text: str) -> str:
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n"
        f"  <meta charset=\"utf-8\">\n  <title>{html.escape(title)}</title>\n</head>\n<body>\n"
        f"  <nav>{html.escape(text.strip())}</nav>\n"
        "  <footer>版权所有</footer>\n</body>\n</html>\n"
    )


class World:
    def __init__(self, raw: dict):
        self.scholars: dict[str, dict] = raw["scholars"]
        self.pages: list[dict] = raw["pages"]
        self.mentions: list[dict] = raw["mentions"]
        self.pairs: list[dict] = raw.get("pairs", [])
        self.page_by_id = {p["id"]: p for p in self.pages}
        if len(self.page_by_id) != len(self.pages):
            raise WorldError("duplicate page ids")

    @classmethod
    def load(cls, path: Path | str) -> "World":
        return cls(yaml.safe_load(Path(path).read_text(encoding="utf-8")))

    # -- derived views ------------------------------------------------------

    def page_profile(self, page: dict) -> Optional[dict]:
        spec = page.get("profile")
        if spec is None:
            return None
        base = self.scholars[page["subject"]]["profile"]
        return dict(base) if spec == "full" else subset(base, spec["keep"])

    def subject_urls(self, sid: str) -> list[str]:
        return [p["url"] for p in self.pages if p.get("subject") == sid and p.get("profile")]

    def pair_side(self, side) -> dict:
        if isinstance(side, str):
            return self.page_profile(self.page_by_id[side])
        if "page" in side:
            return subset(self.page_profile(self.page_by_id[side["page"]]), side["keep"])
        return side

    def page_file(self, page: dict) -> str:
        return page["id"] + (".html" if page.get("html") or page.get("nav_only") else ".txt")

    # -- outputs ------------------------------------------------------------

    def corpus(self) -> dict[str, str]:
        files, manifest = {}, []
        for page in self.pages:
            name = self.page_file(page)
            if page.get("nav_only"):
                files[name] = render_nav_only(page["title"], page["text"])
            elif page.get("html"):
                files[name] = render_html(page["title"], page["text"])
            else:
                files[name] = page["text"].strip() + "\n"
            manifest.append({"file": name, "url": page["url"], "title": page["title"],
                             "language": page["language"]})
        files["manifest.jsonl"] = _dump(manifest)
        return {f"corpus/{k}": v for k, v in files.items()}

    def mention_record(self, m: dict) -> dict:
        rec = {"id": m["id"], "raw_name": m["raw_name"], "affiliation": m["affiliation"],
               "origin": m["origin"], "source_id": m["source_id"]}
        for opt in ("email", "paper_metadata"):
            if m.get(opt):
                rec[opt] = m[opt]
        return rec

    def stub_script(self, institutions: InstitutionTable) -> list[dict]:
        entries: list[dict] = []
        for page in self.pages:
            if page.get("biographical"):
                entries.append({"template": "is_biographical", "key": {"url": page["url"]},
                                "response": {"verdict": True}})
            profile = self.page_profile(page)
            if profile is not None:
                entries.append({"template": "extract_profile", "key": {"url": page["url"]},
                                "response": profile})

        for m in self.mentions:
            targets = set(m["targets"])
            for page in self.pages:
                if page.get("biographical") and page.get("subject") in targets:
                    entries.append({"template": "is_target",
                                    "key": {"url": page["url"], "name": m["raw_name"],
                                            "affiliation": m["affiliation"]},
                                    "response": {"verdict": True}})
            entries.extend(self._native_name_entries(m))
            if m.get("paper_metadata"):
                if not m.get("research_area"):
                    raise WorldError(f"{m['id']}: paper metadata without research_area answer")
                entries.append({"template": "research_area",
                                "key": {"metadata": m["paper_metadata"], "language": "zh"},
                                "response": {"keywords": m["research_area"]}})
            needs_llm = (detect_script(m["affiliation"]) != Script.NATIVE_CJK
                         and institutions.translate(m["affiliation"]) is None)
            if m.get("translate_institution"):
                entries.append({"template": "translate_institution",
                                "key": {"affiliation": m["affiliation"]},
                                "response": {"institution": m["translate_institution"]}})
            elif needs_llm and detect_script(m["raw_name"]) == Script.LATIN \
                    and parse_name(m["raw_name"]).opaque is None:
                raise WorldError(f"{m['id']}: affiliation needs a translate_institution answer")

        for template in ("is_biographical", "is_target", "keyword_related", "institution_equivalent"):
            entries.append({"template": template, "default": True, "response": {"verdict": False}})
        entries.append({"template": "native_name", "default": True, "response": {"native_name": None}})
        return _dedupe(entries)

    def _native_name_entries(self, m: dict) -> list[dict]:
        if detect_script(m["raw_name"]) != Script.LATIN:
            return []
        variant = parse_name(m["raw_name"])
        if variant.opaque is not None:
            return []
        renderings = [match_normalize(r) for r in full_renderings(variant)]
        out = []
        for page in self.pages:
            for sid in page.get("people", []):
                if sid not in m["targets"]:
                    continue
                native = self.scholars[sid]["native"]
                norm = match_normalize(page["title"] + "\n" + page["text"])
                named = any(contains_token_seq(norm, r) for r in renderings)
                for email in ("", m.get("email") or ""):
                    shown = named or (email and email.casefold() in norm)
                    if shown:
                        out.append({"template": "native_name",
                                    "key": {"url": page["url"], "name": m["raw_name"], "email": email},
                                    "response": {"native_name": native}})
        return out

    def dataset(self) -> list[dict]:
        out = []
        for m in self.mentions:
            sid = m.get("scholar")
            urls = self.subject_urls(sid) if sid else []
            gold = {
                "scholar": sid,
                "profile_found": bool(urls),
                "reachable": bool(urls) and m.get("reachable", True),
                "profile_urls": urls,
                "native_name": self.scholars[sid].get("native") if sid else None,
            }
            out.append({"mention": self.mention_record(m), "gold": gold})
        return out

    def pair_records(self) -> list[dict]:
        return [{"id": p["id"], "first": self.pair_side(p["first"]),
                 "second": self.pair_side(p["second"]), "same": p["same"]} for p in self.pairs]

    # -- sanity checks ------------------------------------------------------

    def check(self, scorer: Optional[Disambiguator] = None) -> None:
        """Distinct scholars must score below threshold, one scholar's pages at or above."""
        scorer = scorer or Disambiguator()
        profiled = {sid: profile_from_dict(s["profile"]) for sid, s in self.scholars.items() if "profile" in s}
        for (a, pa), (b, pb) in itertools.combinations(profiled.items(), 2):
            d = scorer.compare(pa, pb)
            if d.score.total >= scorer.threshold:
                raise WorldError(f"{a} and {b} score {d.score.total}: would merge")
        by_subject: dict[str, list[dict]] = {}
        for page in self.pages:
            if page.get("profile"):
                by_subject.setdefault(page["subject"], []).append(page)
        for sid, pages in by_subject.items():
            for p, q in itertools.combinations(pages, 2):
                d = scorer.compare(profile_from_dict(self.page_profile(p)),
                                   profile_from_dict(self.page_profile(q)))
                if d.score.total < scorer.threshold:
                    raise WorldError(f"{p['id']} and {q['id']} score {d.score.total}: would split {sid}")
        ids = [m["id"] for m in self.mentions]
        if len(set(ids)) != len(ids):
            raise WorldError("duplicate mention ids")


def _dedupe(entries: list[dict]) -> list[dict]:
    seen, out = set(), []
    for e in entries:
        key = json.dumps(e, sort_keys=True, ensure_ascii=False)
        if key not in seen:
            seen.add(key)
            out.append(e)
    return out


def build(world_path: Path | str | None = None) -> dict[str, str]:
    """Relative path -> file content for every generated fixture file."""
    world = World.load(world_path or fixture_dir() / "world.yaml")
    world.check()
    files = world.corpus()
    files["stub_script.jsonl"] = _dump(world.stub_script(InstitutionTable.load()))
    files["mentions.jsonl"] = _dump(world.mention_record(m) for m in world.mentions)
    files["dataset.jsonl"] = _dump(world.dataset())
    files["pairs.jsonl"] = _dump(world.pair_records())
    return files


def stale_files(files: dict[str, str], out: Path) -> list[str]:
    return sorted(rel for rel, text in files.items()
                  if not (out / rel).exists() or (out / rel).read_text(encoding="utf-8") != text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m scholarlink.fixture_world", description=__doc__.splitlines()[0])
    ap.add_argument("--world", type=Path, default=None, help="world file (default: bundled world.yaml)")
    ap.add_argument("--out", type=Path, default=None, help="output directory (default: bundled fixtures/)")
    ap.add_argument("--check", action="store_true", help="only report files that differ")
    args = ap.parse_args(argv)
    out = args.out or fixture_dir()
    try:
        files = build(args.world)
    except (WorldError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    stale = stale_files(files, out)
    if args.check:
        for rel in stale:
            print(f"stale: {rel}")
        return 1 if stale else 0
    for rel in stale:
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(files[rel], encoding="utf-8")
    print(f"{len(files)} files, {len(stale)} written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
