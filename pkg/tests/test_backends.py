import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from alas.backends import (
    ChatMessage,
    CompletionRequest,
    HttpBackend,
    MissingApiKey,
    ModelSpec,
    ProtocolError,
    ScriptedBackend,
    ScriptExhausted,
    TransportError,
    builtin_model_specs,
    complete,
)

REQ = CompletionRequest((ChatMessage("system", "sys"), ChatMessage("user", "hi")), 1.0, 4096)


def test_scripted_pops_in_order():
    b = ScriptedBackend(["A", "B"])
    assert complete(b, REQ).text == "A"
    assert complete(b, REQ).text == "B"
    with pytest.raises(ScriptExhausted):
        complete(b, REQ)
    assert b.requests == [REQ, REQ, REQ]


def test_scripted_raises_exceptions():
    b = ScriptedBackend([TransportError("boom"), "ok"])
    with pytest.raises(TransportError):
        b.complete(REQ)
    assert b.complete(REQ).text == "ok"


def test_scripted_is_repeatable():
    logs = []
    for _ in range(2):
        b = ScriptedBackend(["x", "y"])
        out = [b.complete(REQ).text for _ in range(2)]
        logs.append((out, b.requests))
    assert logs[0] == logs[1]


def test_scripted_thread_safe():
    b = ScriptedBackend([str(i) for i in range(200)])
    got = []
    lock = threading.Lock()

    def worker():
        for _ in range(50):
            t = b.complete(REQ).text
            with lock:
                got.append(t)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(got, key=int) == [str(i) for i in range(200)]


def test_builtin_specs():
    specs = builtin_model_specs()
    assert len(specs) == 2
    assert (specs[0].model_tag, specs[0].context_window, specs[0].max_output) == ("gpt-3.5-turbo-16k", 16384, 4096)
    assert (specs[1].model_tag, specs[1].context_window, specs[1].max_output) == ("gpt-4-1106-preview", 128000, 4096)


def test_model_spec_invariant():
    with pytest.raises(ValueError):
        ModelSpec("m", 10, 10)


def test_request_needs_messages():
    with pytest.raises(ValueError):
        CompletionRequest(())


class _Stub(BaseHTTPRequestHandler):
    status = 200
    body = {"choices": [{"message": {"role": "assistant", "content": "stub reply"}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 5, "completion_tokens": 2}}
    seen: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        type(self).seen.append((self.path, self.headers.get("Authorization"), self.rfile.read(length)))
        payload = self.body if isinstance(self.body, bytes) else json.dumps(self.body).encode()
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub(monkeypatch):
    monkeypatch.setenv("STUB_KEY", "secret")
    handler = type("Handler", (_Stub,), {"seen": []})
    server = HTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield handler, f"http://127.0.0.1:{server.server_port}/v1"
    server.shutdown()
    server.server_close()


def _backend(url):
    return HttpBackend(ModelSpec("gpt-3.5-turbo-16k", 16384, 4096), base_url=url, api_key_env="STUB_KEY", timeout=5)


def test_http_roundtrip(stub):
    handler, url = stub
    res = _backend(url).complete(REQ)
    assert res.text == "stub reply" and res.completion_tokens == 2 and res.finish_reason == "stop"
    path, auth, body = handler.seen[0]
    assert path == "/v1/chat/completions" and auth == "Bearer secret"
    sent = json.loads(body)
    assert sent == {"model": "gpt-3.5-turbo-16k",
                    "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "hi"}],
                    "temperature": 1.0, "max_tokens": 4096}


def test_http_resends_identical_bytes(stub):
    handler, url = stub
    b = _backend(url)
    b.complete(REQ)
    b.complete(REQ)
    assert handler.seen[0][2] == handler.seen[1][2] == b.encode(REQ)


@pytest.mark.parametrize("status, exc", [(429, TransportError), (503, TransportError), (400, ProtocolError)])
def test_http_error_classes(stub, status, exc):
    handler, url = stub
    handler.status = status
    with pytest.raises(exc):
        _backend(url).complete(REQ)


def test_http_bad_body(stub):
    handler, url = stub
    handler.body = b"not json"
    with pytest.raises(ProtocolError):
        _backend(url).complete(REQ)


def test_http_connection_refused(monkeypatch):
    monkeypatch.setenv("STUB_KEY", "k")
    with pytest.raises(TransportError):
        _backend("http://127.0.0.1:9").complete(REQ)


def test_missing_key(monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)
    with pytest.raises(MissingApiKey) as ei:
        HttpBackend(ModelSpec("m", 10, 5), api_key_env="NOPE_KEY")
    assert ei.value.env_var == "NOPE_KEY"
