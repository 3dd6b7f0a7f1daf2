from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest

from scholarlink.errors import (ContentRefusal, DuplicateProvider, ProviderError, SchemaViolation,
                                TemplateError, UnknownProvider)
from scholarlink.llm import (HttpChatProvider, LLMGateway, LLMRequest, PromptTemplate, ProviderDescriptor,
                             ProviderReply, ScriptedProvider, extract_json, fingerprint, load_schemas,
                             load_templates)

VERDICT = {"type": "object", "properties": {"verdict": {"type": "boolean"}}, "required": ["verdict"]}


class SequenceProvider:
    """Returns canned replies in order and counts calls."""

    def __init__(self, replies, name="seq"):
        self.name = name
        self.replies = list(replies)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        text = self.replies[min(len(self.requests) - 1, len(self.replies) - 1)]
        return ProviderReply(text)


def gateway(provider, retries=2):
    gw = LLMGateway(retries=retries)
    gw.register_provider(ProviderDescriptor(provider.name, provider))
    return gw


def test_bundled_templates_and_schemas():
    schemas = load_schemas()
    templates = load_templates(schemas=schemas)
    assert set(templates) == {"extract_profile", "institution_equivalent", "is_biographical", "is_target",
                              "keyword_related", "native_name", "research_area", "translate_institution"}
    for tpl in templates.values():
        assert tpl.schema_ref in schemas and tpl.label == "reconstructed"
        assert set(tpl.key_slots) <= set(tpl.slots)


def test_template_slots_are_checked():
    with pytest.raises(TemplateError):
        PromptTemplate("t", "Hello {{who}}", slots=(), schema_ref="verdict")
    with pytest.raises(TemplateError):
        PromptTemplate("t", "Hello", slots=("a",), schema_ref="verdict", key_slots=("b",))
    tpl = PromptTemplate("t", "Hello {{ who }} / {{list}}", slots=("who", "list"), schema_ref="verdict")
    assert tpl.render({"who": None, "list": ["a", "b"]}) == "Hello  / a; b"
    with pytest.raises(TemplateError):
        tpl.render({"who": "x"})


def test_template_missing_front_matter(tmp_path):
    (tmp_path / "schemas").mkdir()
    (tmp_path / "schemas" / "verdict.json").write_text(json.dumps(VERDICT))
    (tmp_path / "bad.md").write_text("no front matter")
    with pytest.raises(TemplateError):
        load_templates(tmp_path)


def test_language_specific_template_falls_back_to_english(tmp_path):
    (tmp_path / "schemas").mkdir()
    (tmp_path / "schemas" / "verdict.json").write_text(json.dumps(VERDICT))
    for lang, body in (("en", "Is it?"), ("zh", "是吗?")):
        (tmp_path / f"q_{lang}.md").write_text(
            f"---\nid: q\nschema: verdict\nlanguage: {lang}\n---\n{body}\n", encoding="utf-8")
    gw = LLMGateway(load_templates(tmp_path), load_schemas(tmp_path / "schemas"))
    assert gw.template("q", "zh").text.startswith("是吗")
    assert gw.template("q", "fr").text.startswith("Is it")
    with pytest.raises(TemplateError):
        gw.template("missing")


@pytest.mark.parametrize("text, value", [
    ('{"verdict": true}', {"verdict": True}),
    ('```json\n{"verdict": false}\n```', {"verdict": False}),
    ('Sure! Here it is: {"verdict": true} Hope that helps.', {"verdict": True}),
    ('["a", "b"]', ["a", "b"]),
    ("null", None),
])
def test_extract_json(text, value):
    assert extract_json(text) == value


def test_extract_json_rejects_prose():
    with pytest.raises(ValueError):
        extract_json("I cannot answer that.")


# -- retry contract ---------------------------------------------------------------

@pytest.mark.parametrize("retries", [0, 1, 2, 5])
def test_retry_loop_stops_at_exactly_r(retries):
    provider = SequenceProvider(['{"verdict": "maybe"}'])
    gw = gateway(provider, retries)
    with pytest.raises(SchemaViolation) as err:
        gw.complete_structured("keyword_related", {"first": "a", "second": "b"})
    assert len(provider.requests) == retries + 1  # one first try plus R retries
    assert gw.calls["seq"] == retries + 1
    assert err.value.attempts == retries + 1
    assert [r.attempt for r in provider.requests] == list(range(retries + 1))


def test_retry_feeds_back_the_error_and_recovers():
    provider = SequenceProvider(["not json", '{"verdict": 1}', '{"verdict": true}'])
    out = gateway(provider, 2).complete_structured("keyword_related", {"first": "a", "second": "b"})
    assert out.value == {"verdict": True} and out.retries == 2
    assert "previous reply was rejected" in provider.requests[1].prompt
    assert "previous reply was rejected" not in provider.requests[0].prompt


def test_refusal_is_not_retried():
    provider = ScriptedProvider([{"template": "keyword_related", "default": True, "refusal": True}])
    gw = gateway(provider)
    with pytest.raises(ContentRefusal):
        gw.complete_structured("keyword_related", {"first": "a", "second": "b"})
    assert len(provider.requests) == 1


def test_usage_is_accumulated():
    provider = SequenceProvider(['{"verdict": true}'])
    gw = gateway(provider)
    gw.complete_structured("keyword_related", {"first": "a", "second": "b"})
    gw.complete_structured("keyword_related", {"first": "a", "second": "c"})
    assert gw.calls["seq"] == 2 and gw.usage["seq"].prompt_tokens == 0


def test_provider_registry():
    gw = LLMGateway()
    with pytest.raises(UnknownProvider):
        gw.complete_structured("keyword_related", {"first": "a", "second": "b"})
    gw.register_provider(ProviderDescriptor("a", SequenceProvider(["{}"], "a")))
    with pytest.raises(DuplicateProvider):
        gw.register_provider(ProviderDescriptor("a", SequenceProvider(["{}"], "a")))
    with pytest.raises(UnknownProvider):
        gw.complete_structured("keyword_related", {"first": "a", "second": "b"}, provider="b")
    assert gw.list_providers() == ["a"]
    with pytest.raises(ValueError):
        LLMGateway(retries=-1)


def test_concurrency_cap_per_provider():
    active, peak, lock = [0], [0], threading.Lock()

    class Slow:
        name = "slow"

        def complete(self, request):
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.01)
            with lock:
                active[0] -= 1
            return ProviderReply('{"verdict": true}')

    gw = LLMGateway()
    gw.register_provider(ProviderDescriptor("slow", Slow(), max_concurrency=3))
    with ThreadPoolExecutor(12) as pool:
        list(pool.map(lambda i: gw.complete_structured("keyword_related", {"first": str(i), "second": "x"}),
                      range(24)))
    assert peak[0] <= 3


# -- scripted provider ---------------------------------------------------------------

def test_scripted_provider_matches_on_key_slots_only():
    provider = ScriptedProvider([
        {"template": "is_biographical", "key": {"url": "https://a.org/"}, "response": {"verdict": True}},
        {"template": "is_biographical", "default": True, "response": {"verdict": False}},
    ])
    gw = gateway(provider)
    hit = gw.complete_structured("is_biographical", {"url": "https://a.org/", "title": "anything", "text": "..."})
    miss = gw.complete_structured("is_biographical", {"url": "https://b.org/", "title": "", "text": ""})
    assert hit.value == {"verdict": True} and miss.value == {"verdict": False}


def test_scripted_sequences_repeat_the_last_reply():
    fp = fingerprint("keyword_related", {"first": "a", "second": "b"})
    provider = ScriptedProvider([{"fingerprint": fp, "response": "x"}, {"fingerprint": fp, "response": "y"}])
    request = LLMRequest("keyword_related", {"first": "a", "second": "b"}, "prompt")
    assert [provider.complete(request).text for _ in range(3)] == ["x", "y", "y"]
    with pytest.raises(ProviderError):
        provider.complete(LLMRequest("other", {}, "p"))


def test_scripted_provider_from_file(tmp_path):
    path = tmp_path / "s.jsonl"
    path.write_text('{"template": "t", "key": {"a": ["x", "y"]}, "response": "ok"}\n\n')
    provider = ScriptedProvider.from_file(path)
    assert provider.complete(LLMRequest("t", {"a": "x; y"}, "")).text == "ok"


# -- http provider ----------------------------------------------------------------------

def _http(handler, monkeypatch, key="sk-test"):
    if key:
        monkeypatch.setenv("LLM_KEY", key)
    else:
        monkeypatch.delenv("LLM_KEY", raising=False)
    return HttpChatProvider("live", "https://llm.example/v1/chat/completions", "m1", "LLM_KEY",
                            client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_provider_round_trip(monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["Authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": '{"verdict": true}'},
                                                      "finish_reason": "stop"}],
                                         "usage": {"prompt_tokens": 11, "completion_tokens": 3}})

    gw = gateway(_http(handler, monkeypatch))
    out = gw.complete_structured("keyword_related", {"first": "a", "second": "b"})
    assert out.value == {"verdict": True} and out.usage.prompt_tokens == 11
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"]["model"] == "m1" and seen["body"]["temperature"] == 0


def test_http_provider_errors(monkeypatch):
    with pytest.raises(ProviderError):
        _http(lambda r: httpx.Response(200, json={}), monkeypatch, key=None).complete(LLMRequest("t", {}, "p"))
    with pytest.raises(ProviderError):
        _http(lambda r: httpx.Response(503), monkeypatch).complete(LLMRequest("t", {}, "p"))
    with pytest.raises(ProviderError):
        _http(lambda r: httpx.Response(200, json={"choices": []}), monkeypatch).complete(LLMRequest("t", {}, "p"))
    refused = _http(lambda r: httpx.Response(200, json={"choices": [{"message": {"content": None, "refusal": "no"}}]}),
                    monkeypatch).complete(LLMRequest("t", {}, "p"))
    assert refused.refusal and refused.text == "no"
