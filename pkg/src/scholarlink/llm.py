"""LLM client with schema-validated structured output.

Prompts live in ``prompts/*.md`` as YAML front matter plus a body with
``{{slot}}`` markers; output schemas live in ``prompts/schemas/*.json``.
Every value handed back to callers has passed JSON-schema validation.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Protocol

import jsonschema
import yaml

from .errors import (ContentRefusal, DuplicateProvider, ProviderError, SchemaViolation,
                     TemplateError, UnknownProvider)

log = logging.getLogger(__name__)

_SLOT_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str
    slots: tuple[str, ...]
    schema_ref: str
    key_slots: tuple[str, ...] = ()
    language: str = "en"
    label: str = "reconstructed"

    def __post_init__(self):
        used = set(_SLOT_RE.findall(self.text))
        undeclared = used - set(self.slots)
        if undeclared:
            raise TemplateError(f"{self.id}: undeclared slots {sorted(undeclared)}")
        if not set(self.key_slots) <= set(self.slots):
            raise TemplateError(f"{self.id}: key slots must be declared slots")

    def render(self, values: dict[str, Any]) -> str:
        missing = [s for s in self.slots if s not in values]
        if missing:
            raise TemplateError(f"{self.id}: unbound slots {missing}")
        return _SLOT_RE.sub(lambda m: _slot_text(values[m.group(1)]), self.text)

    def key(self, values: dict[str, Any]) -> dict[str, str]:
        return {s: _slot_text(values.get(s)) for s in self.key_slots}


def _slot_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return "; ".join(str(v) for v in value)
    return str(value)


def fingerprint(template_id: str, key: dict[str, str]) -> str:
    blob = json.dumps([template_id, key], sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:24]


def _prompt_dir():
    return resources.files("scholarlink") / "prompts"


def load_schemas(directory: Path | str | None = None) -> dict[str, dict]:
    base = Path(directory) if directory else Path(str(_prompt_dir() / "schemas"))
    schemas = {}
    for path in sorted(base.glob("*.json")):
        schema = json.loads(path.read_text(encoding="utf-8"))
        jsonschema.Draft202012Validator.check_schema(schema)
        schemas[path.stem] = schema
    return schemas


def load_templates(directory: Path | str | None = None,
                   schemas: Optional[dict[str, dict]] = None) -> dict[str, PromptTemplate]:
    base = Path(directory) if directory else Path(str(_prompt_dir()))
    schemas = schemas if schemas is not None else load_schemas(base / "schemas")
    templates = {}
    for path in sorted(base.glob("*.md")):
        raw = path.read_text(encoding="utf-8")
        if not raw.startswith("---"):
            raise TemplateError(f"{path}: missing front matter")
        _, head, body = raw.split("---", 2)
        meta = yaml.safe_load(head) or {}
        tpl = PromptTemplate(
            id=meta["id"],
            text=body.strip() + "\n",
            slots=tuple(meta.get("slots", ())),
            schema_ref=meta["schema"],
            key_slots=tuple(meta.get("key_slots", ())),
            language=meta.get("language", "en"),
            label=meta.get("label", "reconstructed"),
        )
        if tpl.schema_ref not in schemas:
            raise TemplateError(f"{tpl.id}: unknown schema {tpl.schema_ref!r}")
        # one file per task per language; key "<id>" for en, "<id>.<lang>" otherwise
        templates[tpl.id if tpl.language == "en" else f"{tpl.id}.{tpl.language}"] = tpl
    return templates


# -- providers --------------------------------------------------------------

@dataclass
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def add(self, other: "Usage") -> None:
        self.prompt_tokens += other.prompt_tokens
        self.completion_tokens += other.completion_tokens


@dataclass(frozen=True)
class LLMRequest:
    template_id: str
    key: dict
    prompt: str
    attempt: int = 0

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.template_id, self.key)


@dataclass
class ProviderReply:
    text: str
    usage: Usage = field(default_factory=Usage)
    refusal: bool = False


class LLMProvider(Protocol):
    name: str

    def complete(self, request: LLMRequest) -> ProviderReply: ...


class ScriptedProvider:
    """Deterministic offline provider replaying canned responses.

    Script entries (one JSON object per line) look like::

        {"template": "is_biographical", "key": {"url": "..."}, "response": {...}}
        {"fingerprint": "<hex>", "response": "..."}
        {"template": "is_target", "default": true, "response": {"verdict": false}}
        {"template": "...", "key": {...}, "refusal": true}

    Several entries with one fingerprint are replayed in order; the last
    one repeats once the sequence is exhausted.
    """

    def __init__(self, entries: list[dict] = (), name: str = "stub"):
        self.name = name
        self._responses: dict[str, list] = defaultdict(list)
        self._cursor: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()
        self.requests: list[LLMRequest] = []
        for entry in entries:
            self.add(entry)

    @classmethod
    def from_file(cls, path: Path | str, name: str = "stub") -> "ScriptedProvider":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entries.append(json.loads(line))
        return cls(entries, name=name)

    @staticmethod
    def entry_fingerprint(entry: dict) -> str:
        if "fingerprint" in entry:
            return entry["fingerprint"]
        if entry.get("default"):
            return f"default:{entry['template']}"
        return fingerprint(entry["template"], {k: _slot_text(v) for k, v in entry.get("key", {}).items()})

    def add(self, entry: dict) -> None:
        if entry.get("refusal"):
            reply = None
        else:
            resp = entry["response"]
            reply = resp if isinstance(resp, str) else json.dumps(resp, ensure_ascii=False)
        self._responses[self.entry_fingerprint(entry)].append(reply)

    def complete(self, request: LLMRequest) -> ProviderReply:
        with self._lock:
            self.requests.append(request)
            fp = request.fingerprint
            if fp not in self._responses:
                fp = f"default:{request.template_id}"
            seq = self._responses.get(fp)
            if not seq:
                raise ProviderError(f"no scripted response for {request.template_id} {request.key}")
            i = min(self._cursor[fp], len(seq) - 1)
            self._cursor[fp] += 1
            text = seq[i]
        usage = Usage(len(request.prompt) // 4, len(text or "") // 4)
        if text is None:
            return ProviderReply("", usage, refusal=True)
        return ProviderReply(text, usage)


class HttpChatProvider:
    """Chat-completions style HTTP endpoint (OpenAI-compatible JSON)."""

    def __init__(self, name: str, url: str, model: str, api_key_env: str,
                 client=None, timeout: float = 60.0):
        import httpx

        self.name = name
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, request: LLMRequest) -> ProviderReply:
        import httpx

        key = os.environ.get(self.api_key_env)
        if not key:
            raise ProviderError(f"credential environment variable {self.api_key_env} is not set")
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": request.prompt}],
        }
        try:
            resp = self._client.post(self.url, json=body, headers={"Authorization": f"Bearer {key}"})
        except httpx.HTTPError as exc:
            raise ProviderError(f"{self.name}: {exc}") from exc
        if resp.status_code >= 400:
            raise ProviderError(f"{self.name}: HTTP {resp.status_code}")
        data = resp.json()
        try:
            choice = data["choices"][0]
            message = choice["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"{self.name}: unexpected response shape") from exc
        u = data.get("usage") or {}
        usage = Usage(u.get("prompt_tokens", 0), u.get("completion_tokens", 0))
        if message.get("refusal") or choice.get("finish_reason") == "content_filter":
            return ProviderReply(message.get("refusal") or "", usage, refusal=True)
        return ProviderReply(message.get("content") or "", usage)


@dataclass
class ProviderDescriptor:
    name: str
    provider: LLMProvider
    max_concurrency: int = 4


@dataclass(frozen=True)
class StructuredCompletion:
    raw: str
    value: Any
    provider: str
    usage: Usage
    retries: int


def extract_json(text: str) -> Any:
    """Parse JSON from a model reply, tolerating code fences and chatter."""
    s = text.strip()
    fence = re.match(r"^```(?:json)?\s*(.*?)\s*```$", s, re.S)
    if fence:
        s = fence.group(1)
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        pass
    for opener, closer in (("{", "}"), ("[", "]")):
        i, j = s.find(opener), s.rfind(closer)
        if 0 <= i < j:
            try:
                return json.loads(s[i:j + 1])
            except json.JSONDecodeError:
                continue
    raise ValueError("reply is not valid JSON")


class LLMGateway:
    def __init__(self, templates: Optional[dict[str, PromptTemplate]] = None,
                 schemas: Optional[dict[str, dict]] = None, retries: int = 2):
        if retries < 0:
            raise ValueError("retries must be >= 0")
        self.schemas = schemas if schemas is not None else load_schemas()
        self.templates = templates if templates is not None else load_templates(schemas=self.schemas)
        self.retries = retries
        self._providers: dict[str, ProviderDescriptor] = {}
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._usage_lock = threading.Lock()
        self.usage: dict[str, Usage] = {}
        self.calls: dict[str, int] = {}

    def register_provider(self, descriptor: ProviderDescriptor) -> None:
        if descriptor.name in self._providers:
            raise DuplicateProvider(descriptor.name)
        self._providers[descriptor.name] = descriptor
        self._semaphores[descriptor.name] = threading.BoundedSemaphore(max(1, descriptor.max_concurrency))
        self.usage[descriptor.name] = Usage()
        self.calls[descriptor.name] = 0

    def list_providers(self) -> list[str]:
        return list(self._providers)

    def template(self, template_id: str, language: str = "en") -> PromptTemplate:
        key = template_id if language == "en" else f"{template_id}.{language}"
        tpl = self.templates.get(key) or self.templates.get(template_id)
        if tpl is None:
            raise TemplateError(f"unknown template {template_id!r}")
        return tpl

    def _descriptor(self, name: Optional[str]) -> ProviderDescriptor:
        if name is None:
            if not self._providers:
                raise UnknownProvider("no provider registered")
            return next(iter(self._providers.values()))
        try:
            return self._providers[name]
        except KeyError:
            raise UnknownProvider(name) from None

    def complete_structured(self, template: PromptTemplate | str, slots: dict[str, Any],
                            schema: Optional[dict] = None,
                            provider: Optional[str] = None) -> StructuredCompletion:
        tpl = self.template(template) if isinstance(template, str) else template
        schema = schema if schema is not None else self.schemas[tpl.schema_ref]
        desc = self._descriptor(provider)
        base = tpl.render(slots) + (
            "\nRespond with only a JSON value matching this schema:\n"
            + json.dumps(schema, ensure_ascii=False) + "\n")
        key = tpl.key(slots)
        prompt = base
        last_error = ""
        validator = jsonschema.Draft202012Validator(schema)
        for attempt in range(self.retries + 1):
            request = LLMRequest(tpl.id, key, prompt, attempt)
            with self._semaphores[desc.name]:
                reply = desc.provider.complete(request)
            with self._usage_lock:
                self.usage[desc.name].add(reply.usage)
                self.calls[desc.name] += 1
            if reply.refusal:
                raise ContentRefusal(f"{desc.name} refused {tpl.id}: {reply.text[:200]}")
            try:
                value = extract_json(reply.text)
                error = jsonschema.exceptions.best_match(validator.iter_errors(value))
                if error is not None:
                    raise ValueError(error.message)
            except ValueError as exc:
                last_error = str(exc)
                log.debug("%s attempt %d invalid: %s", tpl.id, attempt, last_error)
                prompt = (base + "\nYour previous reply was rejected: " + last_error
                          + "\nReply again with only the JSON value.\n")
                continue
            return StructuredCompletion(reply.text, value, desc.name, reply.usage, attempt)
        raise SchemaViolation(
            f"{tpl.id}: output failed validation after {self.retries} retries: {last_error}",
            last_error, self.retries + 1)
