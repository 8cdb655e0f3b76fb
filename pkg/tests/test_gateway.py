import json
import threading
import time

import httpx
import pytest

from sentisim.errors import AuthError, BackendError, ConfigError, MalformedResponse
from sentisim.gateway import (
    BackendConfig, ChatRequest, Gateway, cache_key, complete, mock_noisy, noisy_category,
)
from sentisim.profiles import SENTIMENT_LABELS


def _req(text="hello", **kw):
    return ChatRequest((("system", "persona"), ("user", text)), **kw)


def _ok(content="Sentiment: Neutral"):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content},
                                                  "finish_reason": "stop"}]})


def _http(handler, **kw):
    cfg = BackendConfig(kind="http", endpoint_url="http://stub.local/v1", backoff_base=1.0, **kw)
    sleeps = []
    return Gateway(cfg, sleep=sleeps.append, transport=httpx.MockTransport(handler)), sleeps


def test_request_invariants():
    with pytest.raises(ConfigError):
        ChatRequest(())
    with pytest.raises(ConfigError):
        ChatRequest((("assistant", "x"),))
    with pytest.raises(ConfigError):
        BackendConfig(kind="http")
    with pytest.raises(ConfigError):
        BackendConfig(kind="mock_fixed", max_concurrency=0)


def test_mock_fixed_reply():
    resp = complete(_req(metadata={"task": "sentiment"}), BackendConfig(kind="mock_fixed", fixed_reply="Neutral"))
    assert resp.text.startswith("Sentiment: Neutral")
    assert resp.attempt_count == 1


def test_mock_echo_returns_truth():
    resp = complete(_req(metadata={"task": "sentiment", "truth": 5}), BackendConfig(kind="mock_echo_truth"))
    assert "Sentiment: Positive" in resp.text
    with pytest.raises(BackendError):
        complete(_req(metadata={"task": "sentiment"}), BackendConfig(kind="mock_echo_truth"))


def test_cache_key_examples():
    a, b = _req(), _req()
    assert cache_key(a) == cache_key(b)
    assert cache_key(a, trial_index=1) != cache_key(a, trial_index=2)
    swapped = ChatRequest((("user", "persona"), ("user", "hello")))
    assert cache_key(swapped) != cache_key(a)
    assert cache_key(_req("x\r\ny")) == cache_key(_req("x\ny"))
    assert cache_key(_req(temperature=0.2)) != cache_key(a)


def test_cache_roundtrip(tmp_path):
    cfg = BackendConfig(kind="mock_noisy", shift_prob=0.5, cache_dir=str(tmp_path), mock_seed=3)
    with Gateway(cfg) as gw:
        req = _req(metadata={"task": "sentiment", "truth": 3})
        first = gw.complete(req)
        second = gw.complete(req)
    assert second.cached and second.text == first.text and second.attempt_count == 1
    assert len(list(tmp_path.glob("*.json"))) == 1
    entry = json.loads(next(tmp_path.glob("*.json")).read_text())
    assert entry["text"] == first.text and entry["request"]["trial_index"] == 0


def test_mock_noisy_examples():
    assert all(mock_noisy("Neutral", s, 0.0) == "Neutral" for s in range(200))
    assert all(mock_noisy("Positive", s, 1.0) == "Slightly Positive" for s in range(200))
    assert all(mock_noisy("Negative", s, 1.0) == "Slightly Negative" for s in range(200))
    hits = sum(noisy_category(3, s, 0.5, 5) == 3 for s in range(10_000))
    assert abs(hits / 10_000 - 0.5) <= 0.02
    assert mock_noisy("Neutral", 9, 0.5) == mock_noisy("Neutral", 9, 0.5)


def test_retries_then_success():
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(503) if len(calls) < 3 else _ok()

    gw, sleeps = _http(handler, max_retries=3)
    resp = gw.complete(_req())
    assert resp.text == "Sentiment: Neutral" and resp.attempt_count == 3
    assert len(sleeps) == 2
    assert 0 <= sleeps[0] <= 0.001 and 0 <= sleeps[1] <= 0.002  # full jitter under base*2^k ms


def test_retry_exhaustion_carries_status():
    gw, sleeps = _http(lambda r: httpx.Response(429), max_retries=2)
    with pytest.raises(BackendError) as info:
        gw.complete(_req())
    assert info.value.status == 429 and info.value.exit_code == 3
    assert gw.calls == 3 and len(sleeps) == 2


def test_transport_errors_are_retried():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    gw, _ = _http(handler, max_retries=1)
    with pytest.raises(BackendError, match="2 attempt"):
        gw.complete(_req())


@pytest.mark.parametrize("status", [401, 403])
def test_auth_failure_is_single_attempt(status):
    gw, sleeps = _http(lambda r: httpx.Response(status), max_retries=5)
    with pytest.raises(AuthError):
        gw.complete(_req())
    assert gw.calls == 1 and not sleeps


@pytest.mark.parametrize("body", [b"not json", b'{"choices": []}', b'{"choices": [{"message": {"content": 3}}]}'])
def test_malformed_response(body):
    gw, _ = _http(lambda r: httpx.Response(200, content=body), max_retries=3)
    with pytest.raises(MalformedResponse):
        gw.complete(_req())
    assert gw.calls == 1


def test_wire_format_and_bearer_token(monkeypatch):
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return _ok("Answer: 4")

    monkeypatch.setenv("SENTISIM_TEST_TOKEN", "sekret")
    gw, _ = _http(handler, auth_token_env="SENTISIM_TEST_TOKEN")
    gw.complete(_req(model_id="m1", temperature=0.1, max_tokens=20, seed=5))
    assert seen["url"] == "http://stub.local/v1/chat/completions"
    assert seen["auth"] == "Bearer sekret"
    assert seen["body"] == {"model": "m1", "temperature": 0.1, "max_tokens": 20, "seed": 5,
                            "messages": [{"role": "system", "content": "persona"},
                                         {"role": "user", "content": "hello"}]}


def test_missing_token_env(monkeypatch):
    monkeypatch.delenv("SENTISIM_ABSENT", raising=False)
    gw, _ = _http(lambda r: _ok(), auth_token_env="SENTISIM_ABSENT")
    with pytest.raises(AuthError):
        gw.complete(_req())


def test_concurrency_bound_holds():
    def slow(request):
        time.sleep(0.01)
        return _ok()

    gw, _ = _http(slow, max_concurrency=3)
    threads = [threading.Thread(target=gw.complete, args=(_req(str(i)),)) for i in range(24)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert gw.calls == 24
    assert 1 <= gw.max_in_flight <= 3 and gw.in_flight == 0


def test_scripted_sequence_and_callable():
    gw = Gateway(BackendConfig(kind="mock_scripted", script=["a", "b"]))
    assert [gw.complete(_req()).text for _ in range(3)] == ["a", "b", "b"]
    gw = Gateway(BackendConfig(kind="mock_scripted", script=lambda req: req.messages[-1][1].upper()))
    assert gw.complete(_req("hey")).text == "HEY"


def test_labels_cover_sentiment_scale():
    assert len(SENTIMENT_LABELS) == 5
