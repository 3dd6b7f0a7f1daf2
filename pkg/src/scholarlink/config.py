"""Run configuration (YAML) and pipeline assembly."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .disambiguate import Disambiguator
from .errors import ConfigError
from .extract import AuditLog, ExtractAgent
from .llm import HttpChatProvider, LLMGateway, ProviderDescriptor, ScriptedProvider, load_schemas, load_templates
from .names import RomanizationTable, default_table
from .search import (BackendDescriptor, BingBackend, FixtureBackend, GoogleBackend, RateLimiter,
                     SearchCache, SearchGateway, SogouBackend)
from .translate import InstitutionTable, TranslateAgent
from .workflow import Mode, Workflow

BACKEND_TYPES = ("fixture", "bing", "google", "sogou")
PROVIDER_TYPES = ("scripted", "http")


@dataclass(frozen=True)
class BackendConfig:
    name: str
    type: str
    corpus: Optional[str] = None
    key_env: Optional[str] = None
    cx_env: Optional[str] = None
    rate_requests: Optional[int] = None
    rate_interval: float = 1.0


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    type: str
    script: Optional[str] = None
    url: Optional[str] = None
    model: Optional[str] = None
    api_key_env: Optional[str] = None
    max_concurrency: int = 4


@dataclass(frozen=True)
class RunConfig:
    backend: str
    provider: str
    backends: dict[str, BackendConfig]
    providers: dict[str, ProviderConfig]
    mode: str = Mode.FULL.value
    use_email: bool = True
    k: int = 10
    retries: int = 2
    threshold: int = 7
    keyword_cap: Optional[int] = None
    max_hypotheses: int = 3
    min_chars: int = 40
    workers: int = 1
    seed: int = 0
    cache: Optional[str] = None
    prompts: Optional[str] = None
    romanization: Optional[str] = None
    surnames: Optional[str] = None
    institutions: Optional[str] = None
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.threshold < 1:
            raise ConfigError("threshold must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            Mode(self.mode)
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}") from None
        if self.backend not in self.backends:
            raise ConfigError(f"backend {self.backend!r} is not configured")
        if self.provider not in self.providers:
            raise ConfigError(f"provider {self.provider!r} is not configured")

    def override(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _path(base: Path, value, what: str, must_exist: bool = True) -> Optional[str]:
    if value is None:
        return None
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if must_exist and not p.exists():
        raise ConfigError(f"{what}: path does not exist: {p}")
    return str(p)


def _int(raw: dict, key: str, default):
    value = raw.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer")
    return value


def parse_config(raw: dict, base: Path, source: Optional[str] = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    backends = {}
    for name, spec in (raw.get("backends") or {}).items():
        spec = spec or {}
        kind = spec.get("type", name)
        if kind not in BACKEND_TYPES:
            raise ConfigError(f"backend {name!r}: unknown type {kind!r}")
        rate = spec.get("rate_limit") or {}
        backends[name] = BackendConfig(
            name=name, type=kind,
            corpus=_path(base, spec.get("corpus"), f"backend {name} corpus"),
            key_env=spec.get("key_env"), cx_env=spec.get("cx_env"),
            rate_requests=rate.get("requests"), rate_interval=float(rate.get("interval", 1.0)))
        if kind == "fixture" and backends[name].corpus is None:
            raise ConfigError(f"backend {name!r}: fixture backend needs a corpus path")
    providers = {}
    for name, spec in (raw.get("providers") or {}).items():
        spec = spec or {}
        kind = spec.get("type", "http")
        if kind not in PROVIDER_TYPES:
            raise ConfigError(f"provider {name!r}: unknown type {kind!r}")
        providers[name] = ProviderConfig(
            name=name, type=kind,
            script=_path(base, spec.get("script"), f"provider {name} script"),
            url=spec.get("url"), model=spec.get("model"), api_key_env=spec.get("api_key_env"),
            max_concurrency=int(spec.get("max_concurrency", 4)))
        if kind == "scripted" and providers[name].script is None:
            raise ConfigError(f"provider {name!r}: scripted provider needs a script path")
        if kind == "http" and not (spec.get("url") and spec.get("model") and spec.get("api_key_env")):
            raise ConfigError(f"provider {name!r}: http provider needs url, model and api_key_env")
    paths = raw.get("paths") or {}
    keyword_cap = _int(raw, "keyword_cap", None)
    return RunConfig(
        backend=raw.get("backend") or next(iter(backends), ""),
        provider=raw.get("provider") or next(iter(providers), ""),
        backends=backends, providers=providers,
        mode=raw.get("mode", Mode.FULL.value),
        use_email=bool(raw.get("use_email", True)),
        k=_int(raw, "k", 10), retries=_int(raw, "retries", 2), threshold=_int(raw, "threshold", 7),
        keyword_cap=keyword_cap, max_hypotheses=_int(raw, "max_hypotheses", 3),
        min_chars=_int(raw, "min_chars", 40), workers=_int(raw, "workers", 1), seed=_int(raw, "seed", 0),
        cache=_path(base, paths.get("cache"), "cache", must_exist=False),
        prompts=_path(base, paths.get("prompts"), "prompts"),
        romanization=_path(base, paths.get("romanization"), "romanization table"),
        surnames=_path(base, paths.get("surnames"), "surname list"),
        institutions=_path(base, paths.get("institutions"), "institution table"),
        source=source,
    )


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw or {}, path.resolve().parent, str(path))


def fixture_dir() -> Path:
    return Path(str(resources.files("scholarlink") / "fixtures"))


def default_config_path() -> Path:
    return fixture_dir() / "config.yaml"


# -- assembly ---------------------------------------------------------------

@dataclass
class Pipeline:
    config: RunConfig
    search: SearchGateway
    llm: LLMGateway
    disambiguator: Disambiguator
    extract: ExtractAgent
    translate: TranslateAgent
    workflow: Workflow
    audit: AuditLog


def _backend(cfg: BackendConfig):
    if cfg.type == "fixture":
        return FixtureBackend.from_directory(cfg.corpus, name=cfg.name)
    if cfg.type == "bing":
        return BingBackend(key_env=cfg.key_env or "BING_API_KEY", name=cfg.name)
    if cfg.type == "google":
        return GoogleBackend(key_env=cfg.key_env or "GOOGLE_API_KEY",
                             cx_env=cfg.cx_env or "GOOGLE_CSE_ID", name=cfg.name)
    return SogouBackend(name=cfg.name)


def _provider(cfg: ProviderConfig):
    if cfg.type == "scripted":
        return ScriptedProvider.from_file(cfg.script, name=cfg.name)
    if not os.environ.get(cfg.api_key_env):
        raise ConfigError(f"provider {cfg.name!r}: environment variable {cfg.api_key_env} is not set")
    return HttpChatProvider(cfg.name, cfg.url, cfg.model, cfg.api_key_env)


def _table(config: RunConfig) -> RomanizationTable:
    if config.romanization:
        return RomanizationTable.load(config.romanization, config.surnames)
    return default_table()


def build_pipeline(config: RunConfig, mode: Optional[str] = None, backend: Optional[str] = None,
                   provider: Optional[str] = None, audit_path: Path | str | None = None,
                   cache: Optional[SearchCache] = None) -> Pipeline:
    backend = backend or config.backend
    provider = provider or config.provider
    if backend not in config.backends:
        raise ConfigError(f"backend {backend!r} is not configured")
    if provider not in config.providers:
        raise ConfigError(f"provider {provider!r} is not configured")
    bcfg, pcfg = config.backends[backend], config.providers[provider]

    search = SearchGateway(k=config.k, cache=cache or SearchCache(config.cache), min_chars=config.min_chars)
    limiter = RateLimiter(bcfg.rate_requests, bcfg.rate_interval) if bcfg.rate_requests else None
    search.register_backend(BackendDescriptor(backend, _backend(bcfg), limiter))

    schemas = load_schemas(Path(config.prompts) / "schemas" if config.prompts else None)
    templates = load_templates(config.prompts, schemas)
    llm = LLMGateway(templates, schemas, retries=config.retries)
    llm.register_provider(ProviderDescriptor(provider, _provider(pcfg), pcfg.max_concurrency))

    table = _table(config)
    disambiguator = Disambiguator.with_llm(llm, provider, threshold=config.threshold,
                                           keyword_cap=config.keyword_cap)
    audit = AuditLog(audit_path)
    extract = ExtractAgent(search, llm, disambiguator, backend=backend, provider=provider,
                           audit=audit, workers=config.workers, table=table)
    institutions = InstitutionTable.load(config.institutions)
    translate = TranslateAgent(extract, llm, institutions, table=table, provider=provider, audit=audit)
    workflow = Workflow(extract, translate, disambiguator, mode=mode or config.mode,
                        use_email=config.use_email, max_hypotheses=config.max_hypotheses,
                        workers=config.workers)
    return Pipeline(config, search, llm, disambiguator, extract, translate, workflow, audit)
