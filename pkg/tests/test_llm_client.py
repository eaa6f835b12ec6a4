import json
import threading
import time

import httpx
import pytest

from htcprompt.errors import AuthError, MalformedResponse, RateLimitExhausted, RequestTimeout, ScriptMiss
from htcprompt.llm_client import (
    CONTAMINATION_SAMPLING,
    ChatRequest,
    EchoOracle,
    HttpBackend,
    LLMClient,
    MockBackend,
    Perturbing,
    RequestRejected,
    RequestTag,
    RetryPolicy,
    Scripted,
    estimate_tokens,
    mock_backend,
)


def ok_body(content="Machine Learning", usage=True):
    body = {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}
    if usage:
        body["usage"] = {"prompt_tokens": 11, "completion_tokens": 2, "total_tokens": 13}
    return body


def http_client(handler, **kw):
    backend = HttpBackend(base_url="https://llm.test/v1", api_key="sk-test", transport=httpx.MockTransport(handler))
    kw.setdefault("sleep", lambda s: None)
    return LLMClient(backend, **kw)


REQ = ChatRequest("gpt-4o-mini-2024-07-18", "### Passage\nhello\n\n### Answer", tag=RequestTag("d1", "DL"))


class TestPayload:
    def test_wire_format(self):
        seen = {}

        def handler(request: httpx.Request):
            seen["url"] = str(request.url)
            seen["auth"] = request.headers["authorization"]
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json=ok_body())

        resp = http_client(handler).complete(REQ)
        assert seen["url"] == "https://llm.test/v1/chat/completions"
        assert seen["auth"] == "Bearer sk-test"
        assert seen["body"] == {
            "model": "gpt-4o-mini-2024-07-18",
            "messages": [{"role": "user", "content": REQ.prompt_text}],
            "temperature": 1.0,
            "top_p": 1.0,
        }
        assert (resp.text, resp.prompt_tokens, resp.completion_tokens) == ("Machine Learning", 11, 2)
        assert not resp.usage_estimated
        assert resp.correlation_id == "d1#DL#full"

    def test_contamination_sampling(self):
        req = CONTAMINATION_SAMPLING.request("m", "p")
        assert req.to_payload() == {
            "model": "m",
            "messages": [{"role": "user", "content": "p"}],
            "temperature": 0.0,
            "top_p": 1.0,
            "max_completion_tokens": 500,
        }

    def test_tag_stays_off_the_wire(self):
        assert "tag" not in json.dumps(REQ.to_payload())

    @pytest.mark.parametrize("kw", [{"temperature": 2.5}, {"top_p": 0}, {"max_completion_tokens": 0}])
    def test_invalid_sampling(self, kw):
        with pytest.raises(ValueError):
            ChatRequest("m", "p", **kw)

    def test_missing_usage_is_estimated(self):
        client = http_client(lambda r: httpx.Response(200, json=ok_body("two words", usage=False)))
        resp = client.complete(REQ)
        assert resp.usage_estimated
        assert resp.prompt_tokens == estimate_tokens(REQ.prompt_text)
        assert resp.completion_tokens == 2

    def test_null_content_uses_refusal(self):
        body = {"choices": [{"message": {"content": None, "refusal": "I can't help"}}]}
        assert http_client(lambda r: httpx.Response(200, json=body)).complete(REQ).text == "I can't help"


class TestErrors:
    def test_retry_then_success(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 3:
                return httpx.Response(429 if len(calls) == 1 else 503, text="busy")
            return httpx.Response(200, json=ok_body())

        pauses = []
        client = http_client(handler, sleep=pauses.append, retry=RetryPolicy(5, 0.5, 30), jitter_seed=0)
        resp = client.complete(REQ)
        assert resp.attempts == 3 and len(calls) == 3
        assert len(pauses) == 2
        assert 0 <= pauses[0] <= 0.5 and 0 <= pauses[1] <= 1.0
        assert client.counters.attempts == 3 and client.request_count == 1

    def test_retries_exhausted(self):
        client = http_client(lambda r: httpx.Response(500), retry=RetryPolicy(3))
        with pytest.raises(RateLimitExhausted):
            client.complete(REQ)
        assert client.counters.attempts == 3
        assert client.counters.failures == 1

    def test_timeout_is_retried_then_reported(self):
        def handler(request):
            raise httpx.ReadTimeout("slow", request=request)

        client = http_client(handler, retry=RetryPolicy(2))
        with pytest.raises(RequestTimeout):
            client.complete(REQ)
        assert client.counters.attempts == 2

    @pytest.mark.parametrize("status", [401, 403])
    def test_auth_not_retried(self, status):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(status, text="bad key")

        with pytest.raises(AuthError):
            http_client(handler).complete(REQ)
        assert len(calls) == 1

    def test_other_4xx_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(400, text="bad request")

        with pytest.raises(RequestRejected):
            http_client(handler).complete(REQ)
        assert len(calls) == 1

    @pytest.mark.parametrize(
        "body",
        [b"not json", b"{}", b'{"choices": []}', b'{"choices": [{"message": "x"}]}', b'{"choices": [{"message": {"content": 5}}]}'],
    )
    def test_malformed(self, body):
        with pytest.raises(MalformedResponse):
            http_client(lambda r: httpx.Response(200, content=body)).complete(REQ)

    def test_missing_key(self, monkeypatch):
        monkeypatch.delenv("OPENAI_API_KEY", raising=False)
        with pytest.raises(AuthError):
            HttpBackend(base_url="https://llm.test/v1")

    def test_key_from_environment(self, monkeypatch):
        monkeypatch.setenv("OPENAI_API_KEY", "sk-env")
        monkeypatch.setenv("OPENAI_BASE_URL", "https://other.test/v1/")
        backend = HttpBackend()
        assert backend.endpoint == "https://other.test/v1/chat/completions"


class TestConcurrency:
    def test_in_flight_bound(self):
        lock = threading.Lock()
        state = {"now": 0, "peak": 0}

        def rule(request):
            with lock:
                state["now"] += 1
                state["peak"] = max(state["peak"], state["now"])
            time.sleep(0.01)
            with lock:
                state["now"] -= 1
            return "x"

        client = LLMClient(MockBackend(rule), max_in_flight=3)
        threads = [threading.Thread(target=client.complete, args=(ChatRequest("m", f"p{i}"),)) for i in range(20)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert state["peak"] <= 3
        assert client.request_count == 20


def test_audit_log(tmp_path):
    audit = tmp_path / "audit.jsonl"

    def handler(request):
        body = json.loads(request.content)
        if "fail" in body["messages"][0]["content"]:
            return httpx.Response(401)
        return httpx.Response(200, json=ok_body())

    with http_client(handler, audit_path=audit) as client:
        client.complete(REQ)
        with pytest.raises(AuthError):
            client.complete(ChatRequest("m", "fail now"))
    records = [json.loads(line) for line in audit.read_text().splitlines()]
    assert [r["status"] for r in records] == ["ok", "error"]
    ok = records[0]
    assert ok["correlation_id"] == "d1#DL#full"
    assert ok["prompt_sha256"] == REQ.prompt_sha256
    assert (ok["prompt_tokens"], ok["completion_tokens"], ok["usage"]) == (11, 2, "api-reported")
    assert "sk-test" not in audit.read_text()
    assert REQ.prompt_text not in audit.read_text()


class TestMocks:
    ANSWERS = {"doc": ("Computer Science", "Machine Learning")}

    def test_echo_oracle(self):
        oracle = EchoOracle(self.ANSWERS)
        dl = ChatRequest("m", "p", tag=RequestTag("doc", "DL"))
        dh = ChatRequest("m", "p", tag=RequestTag("doc", "DH"))
        tmh1 = ChatRequest("m", "p", tag=RequestTag("doc", "TMH", 1))
        assert oracle(dl) == "Machine Learning"
        assert oracle(dh) == "Computer Science > Machine Learning"
        assert oracle(tmh1) == "Computer Science"
        with pytest.raises(ScriptMiss):
            oracle(ChatRequest("m", "p", tag=RequestTag("other", "DL")))

    def test_scripted(self):
        rule = Scripted({"a": "A"}, fallback="?")
        assert rule(ChatRequest("m", "a")) == "A"
        assert rule(ChatRequest("m", "b")) == "?"
        with pytest.raises(ScriptMiss):
            Scripted({}, strict=True)(ChatRequest("m", "b"))

    def test_mock_backend_from_mapping(self):
        client = LLMClient(mock_backend({"q": "answer text"}))
        resp = client.complete(ChatRequest("m", "q"))
        assert resp.text == "answer text"
        assert resp.usage_estimated and resp.completion_tokens == 2 and resp.backend == "mock"

    def test_perturbing_typo_is_deterministic(self):
        rule = Perturbing(lambda r: "Machine Learning", "typo", seed=3)
        out = rule(ChatRequest("m", "x"))
        assert out == "Machne Learning"
        assert out == rule(ChatRequest("m", "y"))

    @pytest.mark.parametrize("corruption, expected", [("case", "mACHINE lEARNING"), ("punct", "Machine Learning.")])
    def test_perturbing_other(self, corruption, expected):
        assert Perturbing(lambda r: "Machine Learning", corruption)(ChatRequest("m", "x")) == expected

    def test_perturbing_rejects_unknown(self):
        with pytest.raises(ValueError):
            Perturbing(lambda r: "", "shuffle")


def test_estimate_tokens():
    assert estimate_tokens("") == 0
    assert estimate_tokens("a b\nc") == 4
