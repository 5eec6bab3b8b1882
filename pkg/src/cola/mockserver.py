"""Deterministic offline model server speaking the gateway wire protocol.

Responses for caption/vqa/generate come from a fixture file mapping
request digests (see :func:`cola.gateway.request_digest`) to reply text;
the embed route always serves hashed character-trigram embeddings.
Unknown caption/vqa digests fall back to the deterministic answer
``"unknown"``; unknown generate digests answer with the alphabetically
first choice found on the prompt's ``Choices:`` line.

Fixture file schema (JSON):

    {
      "responses": {"<digest>": "reply text", ...},
      "flaky":     {"<digest>": <n>, ...},   # first n requests get a 500
      "fail_all":  false,                    # every model request gets a 500
      "delay_ms":  0                         # per-request artificial delay
    }

The server also exposes ``GET /v1/health`` and an instrumentation route
``GET /v1/stats`` reporting how many model requests it served and the
maximum number it ever handled concurrently.
"""

from __future__ import annotations

import base64
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from cola.embedding import DEFAULT_DIM, trigram_embedding
from cola.gateway import request_digest

FALLBACK_ANSWER = "unknown"

_CHOICES_LINE = re.compile(r"^Choices: (.*)$", re.MULTILINE)
_CHOICE_MARKER = re.compile(r"\(([a-z])\) ")


def _choices_from_prompt(prompt: str) -> list[str]:
    match = _CHOICES_LINE.search(prompt)
    if not match:
        return []
    rest = " " + match.group(1)
    parts = re.split(r" \([a-z]\) ", rest)
    return [p for p in parts[1:] if p]


class MockState:
    """Fixtures plus thread-safe request instrumentation."""

    def __init__(self, fixtures: dict | None = None):
        fixtures = fixtures or {}
        self.responses: dict[str, str] = dict(fixtures.get("responses", {}))
        self.flaky: dict[str, int] = {k: int(v) for k, v in fixtures.get("flaky", {}).items()}
        self.fail_all: bool = bool(fixtures.get("fail_all", False))
        self.delay_ms: int = int(fixtures.get("delay_ms", 0))
        self.lock = threading.Lock()
        self.requests = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self._flaky_seen: dict[str, int] = {}

    def enter(self) -> None:
        with self.lock:
            self.requests += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)

    def leave(self) -> None:
        with self.lock:
            self.in_flight -= 1

    def should_fail(self, digest: str) -> bool:
        if self.fail_all:
            return True
        budget = self.flaky.get(digest)
        if budget is None:
            return False
        with self.lock:
            seen = self._flaky_seen.get(digest, 0)
            self._flaky_seen[digest] = seen + 1
            return seen < budget

    def stats(self) -> dict:
        with self.lock:
            return {"requests": self.requests, "max_in_flight": self.max_in_flight}


class _Handler(BaseHTTPRequestHandler):
    state: MockState  # set by the server factory

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _reply(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        if self.path == "/v1/health":
            self._reply(200, {"ok": True})
        elif self.path == "/v1/stats":
            self._reply(200, self.state.stats())
        else:
            self._reply(404, {"error": f"no such route: {self.path}"})

    def do_POST(self) -> None:
        kind = {
            "/v1/caption": "caption",
            "/v1/vqa": "vqa",
            "/v1/generate": "generate",
            "/v1/embed": "embed",
        }.get(self.path)
        if kind is None:
            self._reply(404, {"error": f"no such route: {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._reply(400, {"error": "request body is not valid JSON"})
            return

        self.state.enter()
        try:
            if self.state.delay_ms:
                threading.Event().wait(self.state.delay_ms / 1000.0)
            self._handle_model_request(kind, body)
        finally:
            self.state.leave()

    def _handle_model_request(self, kind: str, body: dict) -> None:
        try:
            digest = self._digest_of(kind, body)
        except (KeyError, ValueError, TypeError) as exc:
            self._reply(400, {"error": f"bad request: {exc}"})
            return
        if self.state.should_fail(digest):
            self._reply(500, {"error": "scripted failure"})
            return

        if kind == "embed":
            vec = trigram_embedding(body["text"], DEFAULT_DIM)
            self._reply(200, {"vector": [float(v) for v in vec], "dim": DEFAULT_DIM})
            return

        text = self.state.responses.get(digest)
        if text is None:
            if kind == "generate":
                choices = _choices_from_prompt(body.get("prompt", ""))
                text = sorted(choices)[0] if choices else FALLBACK_ANSWER
            else:
                text = FALLBACK_ANSWER
        field = {"caption": "caption", "vqa": "answer", "generate": "text"}[kind]
        self._reply(200, {field: text})

    @staticmethod
    def _digest_of(kind: str, body: dict) -> str:
        if kind == "caption":
            return request_digest("caption", image_bytes=base64.b64decode(body["image_b64"]))
        if kind == "vqa":
            return request_digest(
                "vqa",
                image_bytes=base64.b64decode(body["image_b64"]),
                text=body["question"],
                choices=body.get("choices"),
            )
        if kind == "generate":
            return request_digest("generate", text=body["prompt"])
        if not body.get("text"):
            raise ValueError("embed requires nonempty text")
        return request_digest("embed", text=body["text"])


class MockModelServer:
    """In-process mock server; bind port 0 for an ephemeral port."""

    def __init__(self, fixtures: dict | None = None, host: str = "127.0.0.1", port: int = 0):
        self.state = MockState(fixtures)
        handler = type("BoundHandler", (_Handler,), {"state": self.state})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockModelServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockModelServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def load_fixtures(path: str | Path) -> dict:
    """Load and sanity-check a fixture file."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ValueError(f"fixture file {path} must contain a JSON object")
    responses = payload.get("responses", {})
    if not isinstance(responses, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in responses.items()
    ):
        raise ValueError(f"fixture file {path}: 'responses' must map digests to strings")
    return payload


def serve_mock(fixture_path: str | Path | None, port: int, host: str = "127.0.0.1") -> MockModelServer:
    """Start a mock server from a fixture file (CLI entry point helper)."""
    fixtures = load_fixtures(fixture_path) if fixture_path else None
    server = MockModelServer(fixtures, host=host, port=port)
    return server.start()
