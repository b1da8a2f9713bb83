"""Backend wire protocol: response validation, mock scripts, HTTP client."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from mtsent.backends import (BackendError, BackendResponse, HttpBackend,
                             MockBackend, parse_reported_confidence)


# --- response validation -------------------------------------------------

def test_response_rejects_positive_logprobs():
    with pytest.raises(ValueError):
        BackendResponse(text="x", token_logprobs=(("a", 0.1),),
                        reported_confidence=None)
    ok = BackendResponse(text="x", token_logprobs=(("a", -0.5), ("b", 0.0)),
                         reported_confidence=None)
    assert ok.token_logprobs[0] == ("a", -0.5)


def test_response_rejects_out_of_range_confidence():
    with pytest.raises(ValueError):
        BackendResponse(text="x", token_logprobs=None,
                        reported_confidence=1.5)


def test_parse_reported_confidence_variants():
    assert parse_reported_confidence("Aspect: food\nConfidence: 0.85") == 0.85
    assert parse_reported_confidence("confidence: 0.5\n") == 0.5
    assert parse_reported_confidence("Confidence: 1") == 1.0
    assert parse_reported_confidence("  Confidence:  0.99  ") == 0.99
    assert parse_reported_confidence("no score here") is None
    # not a standalone line -> no match
    assert parse_reported_confidence("my Confidence: 0.9 is high") is None


# --- mock backend --------------------------------------------------------

def write_script(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows),
                    encoding="utf-8")


def test_mock_exact_epoch_beats_wildcard(tmp_path):
    script = tmp_path / "s.jsonl"
    write_script(script, [
        {"instance_id": "a", "template_id": "aspect", "epoch": None,
         "text": "fallback"},
        {"instance_id": "a", "template_id": "aspect", "epoch": 1,
         "text": "exact"},
    ])
    mock = MockBackend(script)
    assert mock.complete("p", meta=("a", "aspect", 1)).text == "exact"
    assert mock.complete("p", meta=("a", "aspect", 0)).text == "fallback"
    assert mock.complete("p", meta=("a", "aspect", 7)).text == "fallback"


def test_mock_missing_entry_and_meta_errors(tmp_path):
    script = tmp_path / "s.jsonl"
    write_script(script, [{"instance_id": "a", "template_id": "aspect",
                           "epoch": None, "text": "x"}])
    mock = MockBackend(script)
    with pytest.raises(BackendError, match="no entry"):
        mock.complete("p", meta=("b", "aspect", 0))
    with pytest.raises(BackendError, match="meta"):
        mock.complete("p")


def test_mock_scripted_error_raises(tmp_path):
    script = tmp_path / "s.jsonl"
    write_script(script, [{"instance_id": "a", "template_id": "polarity",
                           "epoch": None, "error": "boom"}])
    with pytest.raises(BackendError, match="boom"):
        MockBackend(script).complete("p", meta=("a", "polarity", 0))


def test_mock_logprobs_and_confidence_passthrough(tmp_path):
    script = tmp_path / "s.jsonl"
    write_script(script, [
        {"instance_id": "a", "template_id": "opinion", "epoch": None,
         "text": "tasty\nConfidence: 0.77",
         "token_logprobs": [["tasty", -0.2]]},
    ])
    mock = MockBackend(script)
    with_lp = mock.complete("p", logprobs=True, meta=("a", "opinion", 0))
    assert with_lp.token_logprobs == (("tasty", -0.2),)
    assert with_lp.reported_confidence == 0.77
    without = mock.complete("p", logprobs=False, meta=("a", "opinion", 0))
    assert without.token_logprobs is None


def test_mock_call_count_filters(tmp_path):
    script = tmp_path / "s.jsonl"
    write_script(script, [
        {"instance_id": "a", "template_id": "aspect", "epoch": None,
         "text": "x"},
        {"instance_id": "b", "template_id": "aspect", "epoch": None,
         "text": "y"},
    ])
    mock = MockBackend(script)
    mock.complete("p", meta=("a", "aspect", 0))
    mock.complete("p", meta=("a", "aspect", 1))
    mock.complete("p", meta=("b", "aspect", 0))
    assert mock.call_count() == 3
    assert mock.call_count(instance_id="a") == 2
    assert mock.call_count(instance_id="b", template_id="aspect") == 1
    assert mock.call_count(template_id="polarity") == 0


def test_mock_malformed_script_line(tmp_path):
    script = tmp_path / "s.jsonl"
    script.write_text('{"instance_id": }\n', encoding="utf-8")
    with pytest.raises(ValueError, match="s.jsonl:1"):
        MockBackend(script)


# --- HTTP backend against a real local server ----------------------------

class _Script:
    """Shared state telling the handler what to do, recording requests."""

    def __init__(self, steps):
        self.steps = list(steps)
        self.requests = []
        self.lock = threading.Lock()


def _make_handler(script):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers["Content-Length"])
            body = json.loads(self.rfile.read(length))
            with script.lock:
                script.requests.append(
                    {"body": body, "auth": self.headers.get("Authorization")})
                step = script.steps.pop(0) if script.steps else ("status", 500)
            kind, payload = step
            if kind == "status":
                self.send_response(payload)
                self.end_headers()
                return
            data = json.dumps(payload).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *a):
            pass

    return Handler


@pytest.fixture
def http_server():
    def start(steps):
        script = _Script(steps)
        server = ThreadingHTTPServer(("127.0.0.1", 0), _make_handler(script))
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        url = f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
        return script, server, url

    servers = []

    def factory(steps):
        script, server, url = start(steps)
        servers.append(server)
        return script, url

    yield factory
    for s in servers:
        s.shutdown()
        s.server_close()


def _ok(text, logprobs=None):
    choice = {"message": {"content": text}}
    if logprobs is not None:
        choice["logprobs"] = {
            "content": [{"token": t, "logprob": lp} for t, lp in logprobs]}
    return ("json", {"choices": [choice]})


def test_http_request_shape_and_parse(http_server, monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "sk-test")
    script, url = http_server([_ok("food\nConfidence: 0.9",
                                   logprobs=[("food", -0.1)])])
    backend = HttpBackend(url, model="toy", retry_base=0.0)
    resp = backend.complete("extract the aspect", logprobs=True)
    assert resp.text.startswith("food")
    assert resp.token_logprobs == (("food", -0.1),)
    assert resp.reported_confidence == 0.9
    req = script.requests[0]
    assert req["auth"] == "Bearer sk-test"
    assert req["body"]["model"] == "toy"
    assert req["body"]["temperature"] == 0
    assert req["body"]["logprobs"] is True
    assert req["body"]["messages"] == [
        {"role": "user", "content": "extract the aspect"}]


def test_http_no_key_sends_no_auth_header(http_server, monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    script, url = http_server([_ok("x")])
    HttpBackend(url, retry_base=0.0).complete("p")
    assert script.requests[0]["auth"] is None


def test_http_4xx_fails_immediately(http_server):
    script, url = http_server([("status", 404)])
    with pytest.raises(BackendError, match="404"):
        HttpBackend(url, retry_base=0.0).complete("p")
    assert len(script.requests) == 1  # no retries on client errors


def test_http_5xx_retries_then_succeeds(http_server):
    script, url = http_server([("status", 500), ("status", 502), _ok("ok")])
    resp = HttpBackend(url, retry_base=0.0).complete("p")
    assert resp.text == "ok"
    assert len(script.requests) == 3


def test_http_gives_up_after_max_retries(http_server):
    script, url = http_server([("status", 500)] * 5)
    with pytest.raises(BackendError, match="unreachable after 3"):
        HttpBackend(url, retry_base=0.0).complete("p")
    assert len(script.requests) == 3


def test_http_malformed_response_is_error(http_server):
    script, url = http_server([("json", {"unexpected": True})])
    with pytest.raises(BackendError, match="malformed"):
        HttpBackend(url, retry_base=0.0).complete("p")
