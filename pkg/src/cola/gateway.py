"""Cached, retrying HTTP client over black-box model endpoints.

Wire protocol (JSON over HTTP, all routes under an endpoint's base_url):

    POST /v1/caption   {"image_b64": str}                              -> {"caption": str}
    POST /v1/vqa       {"image_b64": str, "question": str,
                        "choices": [str]?}                             -> {"answer": str}
    POST /v1/generate  {"prompt": str}                                 -> {"text": str}
    POST /v1/embed     {"text": str}                                   -> {"vector": [num], "dim": int}

Non-2xx responses carry ``{"error": str}``.  Images cross the wire as
base64-encoded PNG.  Every reply is cached on disk, content-addressed by
a digest of the request, so a warmed cache replays a run with zero
network traffic.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import requests

from cola.frames import Frame, encode_frame_png

logger = logging.getLogger(__name__)

CAPABILITIES = ("caption", "vqa", "generate", "embed")


class GatewayError(RuntimeError):
    """Base class for model gateway failures."""


class CapabilityError(GatewayError):
    """Endpoint does not declare the required capability."""


class TransportError(GatewayError):
    """All attempts failed at the transport level or with 5xx statuses."""


class ServiceError(GatewayError):
    """The service answered with a permanent error or a malformed body."""


class OversizePromptError(GatewayError):
    """Prompt exceeds the endpoint's declared maximum length."""


@dataclass(frozen=True)
class ModelEndpoint:
    """A named black-box model service."""

    name: str
    base_url: str
    capabilities: frozenset = frozenset()
    timeout_ms: int = 30000
    max_retries: int = 3
    max_concurrency: int = 4
    backoff_ms: int = 250
    max_prompt_chars: int | None = None
    bearer_token: str | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("endpoint name must be nonempty")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))
        unknown = self.capabilities - set(CAPABILITIES)
        if unknown:
            raise ValueError(f"unknown capabilities {sorted(unknown)}")


@dataclass(frozen=True)
class ModelResponse:
    endpoint_name: str
    request_kind: str
    text: str | None = None
    vector: tuple[float, ...] | None = None
    latency_ms: int = 0
    from_cache: bool = False
    attempts: int = 0


@dataclass(frozen=True)
class CacheKey:
    endpoint_name: str
    request_kind: str
    digest: str


def request_digest(
    kind: str,
    image_bytes: bytes | None = None,
    text: str | None = None,
    choices: Sequence[str] | None = None,
) -> str:
    """Collision-resistant digest of a request's content.

    Equal inputs give equal digests; any byte difference gives a
    different digest.  The same function keys the client cache and the
    mock server's fixture table.
    """
    h = hashlib.sha256()
    h.update(kind.encode("utf-8"))
    h.update(b"\x00")
    if image_bytes is not None:
        h.update(hashlib.sha256(image_bytes).digest())
    h.update(b"\x00")
    if text is not None:
        h.update(text.encode("utf-8"))
    h.update(b"\x00")
    for choice in choices or ():
        h.update(choice.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


def _image_to_b64(image: Frame | bytes) -> tuple[str, bytes]:
    raw = encode_frame_png(image) if isinstance(image, Frame) else bytes(image)
    return base64.b64encode(raw).decode("ascii"), raw


class ResponseCache:
    """Content-addressed on-disk cache, one JSON file per key.

    Entries are published atomically (write-temp-then-rename), so
    concurrent writers race safely: the last writer wins and every
    stored entry is byte-valid.  A corrupt entry is treated as a miss
    and rewritten.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, key: CacheKey) -> Path:
        return self.root / key.endpoint_name / key.request_kind / f"{key.digest}.json"

    def get(self, key: CacheKey) -> dict | None:
        path = self._path(key)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, OSError, UnicodeDecodeError) as exc:
            logger.warning("corrupt cache entry %s (%s); treating as miss", path, exc)
            return None
        if not isinstance(payload, dict):
            logger.warning("corrupt cache entry %s (not an object); treating as miss", path)
            return None
        return payload

    def put(self, key: CacheKey, payload: dict) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fp:
                json.dump(payload, fp, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise


def cached_call(
    cache: ResponseCache, key: CacheKey, thunk: Callable[[], dict]
) -> tuple[dict, bool]:
    """Return (payload, from_cache); the thunk runs only on a miss."""
    hit = cache.get(key)
    if hit is not None:
        return hit, True
    payload = thunk()
    cache.put(key, payload)
    return payload, False


class ModelGateway:
    """Uniform client over caption/vqa/generate/embed endpoints.

    Safe for concurrent use; per-endpoint in-flight requests are bounded
    by a counting limiter sized from ``max_concurrency``.
    """

    def __init__(self, cache_dir: str | Path, session: requests.Session | None = None):
        self.cache = ResponseCache(cache_dir)
        self._session = session or requests.Session()
        self._limiters: dict[str, threading.Semaphore] = {}
        self._limiter_lock = threading.Lock()

    def _limiter(self, endpoint: ModelEndpoint) -> threading.Semaphore:
        with self._limiter_lock:
            sem = self._limiters.get(endpoint.name)
            if sem is None:
                sem = threading.Semaphore(endpoint.max_concurrency)
                self._limiters[endpoint.name] = sem
            return sem

    def _post(self, endpoint: ModelEndpoint, route: str, body: dict) -> tuple[dict, int]:
        """POST with bounded concurrency and exponential-backoff retries.

        Makes exactly ``max_retries + 1`` attempts before giving up on
        transport failures and 5xx statuses; 4xx statuses fail fast.
        Returns (response JSON, attempts used).
        """
        url = endpoint.base_url.rstrip("/") + route
        headers = {}
        if endpoint.bearer_token:
            headers["Authorization"] = f"Bearer {endpoint.bearer_token}"
        timeout = endpoint.timeout_ms / 1000.0
        attempts = endpoint.max_retries + 1
        limiter = self._limiter(endpoint)
        for attempt in range(1, attempts + 1):
            try:
                with limiter:
                    resp = self._session.post(url, json=body, headers=headers, timeout=timeout)
            except requests.RequestException as exc:
                logger.warning(
                    "%s%s attempt %d/%d failed: %s", endpoint.name, route, attempt, attempts, exc
                )
                if attempt == attempts:
                    raise TransportError(
                        f"{endpoint.name}{route}: transport failure after {attempts} attempts"
                    ) from exc
            else:
                if 200 <= resp.status_code < 300:
                    try:
                        return resp.json(), attempt
                    except ValueError as exc:
                        raise ServiceError(
                            f"{endpoint.name}{route}: malformed response body"
                        ) from exc
                if resp.status_code >= 500:
                    logger.warning(
                        "%s%s attempt %d/%d got status %d",
                        endpoint.name, route, attempt, attempts, resp.status_code,
                    )
                    if attempt == attempts:
                        raise TransportError(
                            f"{endpoint.name}{route}: status {resp.status_code} "
                            f"after {attempts} attempts"
                        )
                else:
                    raise ServiceError(f"{endpoint.name}{route}: status {resp.status_code}")
            time.sleep(endpoint.backoff_ms / 1000.0 * 2 ** (attempt - 1))
        raise AssertionError("unreachable")

    def _require(self, endpoint: ModelEndpoint, capability: str) -> None:
        if capability not in endpoint.capabilities:
            raise CapabilityError(f"endpoint {endpoint.name} lacks capability {capability!r}")

    def _text_call(
        self, endpoint: ModelEndpoint, kind: str, route: str, body: dict,
        key: CacheKey, response_field: str,
    ) -> ModelResponse:
        cached = self.cache.get(key)
        if cached is not None and "text" in cached:
            return ModelResponse(
                endpoint_name=endpoint.name, request_kind=kind,
                text=cached["text"], from_cache=True,
            )
        start = time.monotonic()
        payload, attempts = self._post(endpoint, route, body)
        latency_ms = round((time.monotonic() - start) * 1000)
        text = payload.get(response_field)
        if not isinstance(text, str) or not text.strip():
            raise ServiceError(
                f"{endpoint.name}{route}: missing or empty {response_field!r} in response"
            )
        text = text.strip()
        self.cache.put(key, {"text": text})
        return ModelResponse(
            endpoint_name=endpoint.name, request_kind=kind, text=text,
            latency_ms=latency_ms, attempts=attempts,
        )

    def caption(self, endpoint: ModelEndpoint, image: Frame | bytes) -> ModelResponse:
        """Caption an image; result is trimmed and cached."""
        self._require(endpoint, "caption")
        image_b64, raw = _image_to_b64(image)
        key = CacheKey(endpoint.name, "caption", request_digest("caption", image_bytes=raw))
        return self._text_call(
            endpoint, "caption", "/v1/caption", {"image_b64": image_b64}, key, "caption"
        )

    def vqa_answer(
        self,
        endpoint: ModelEndpoint,
        image: Frame | bytes,
        question: str,
        choices: Sequence[str] | None = None,
    ) -> ModelResponse:
        """Ask a visual question; choices, when present, are forwarded verbatim."""
        self._require(endpoint, "vqa")
        if not question:
            raise ValueError("question must be nonempty")
        image_b64, raw = _image_to_b64(image)
        body: dict = {"image_b64": image_b64, "question": question}
        if choices is not None:
            body["choices"] = list(choices)
        key = CacheKey(
            endpoint.name, "vqa",
            request_digest("vqa", image_bytes=raw, text=question, choices=choices),
        )
        return self._text_call(endpoint, "vqa", "/v1/vqa", body, key, "answer")

    def generate(self, endpoint: ModelEndpoint, prompt: str) -> ModelResponse:
        """Generate a text continuation for a prompt."""
        self._require(endpoint, "generate")
        if not prompt:
            raise ValueError("prompt must be nonempty")
        if endpoint.max_prompt_chars is not None and len(prompt) > endpoint.max_prompt_chars:
            raise OversizePromptError(
                f"prompt of {len(prompt)} chars exceeds {endpoint.name}'s "
                f"limit of {endpoint.max_prompt_chars}"
            )
        key = CacheKey(endpoint.name, "generate", request_digest("generate", text=prompt))
        return self._text_call(endpoint, "generate", "/v1/generate", {"prompt": prompt}, key, "text")

    def embed_text(self, endpoint: ModelEndpoint, text: str) -> ModelResponse:
        """Embed text as a fixed-dimension vector."""
        self._require(endpoint, "embed")
        if not text:
            raise ValueError("text must be nonempty")
        key = CacheKey(endpoint.name, "embed", request_digest("embed", text=text))
        cached = self.cache.get(key)
        if cached is not None and "vector" in cached:
            return ModelResponse(
                endpoint_name=endpoint.name, request_kind="embed",
                vector=tuple(cached["vector"]), from_cache=True,
            )
        start = time.monotonic()
        payload, attempts = self._post(endpoint, "/v1/embed", {"text": text})
        latency_ms = round((time.monotonic() - start) * 1000)
        vector = payload.get("vector")
        if not isinstance(vector, list) or not vector:
            raise ServiceError(f"{endpoint.name}/v1/embed: missing vector in response")
        vector = [float(v) for v in vector]
        self.cache.put(key, {"vector": vector})
        return ModelResponse(
            endpoint_name=endpoint.name, request_kind="embed",
            vector=tuple(vector), latency_ms=latency_ms, attempts=attempts,
        )

    def embedder(self, endpoint: ModelEndpoint) -> Callable[[str], np.ndarray]:
        """Text -> vector callable bound to an embed-capable endpoint."""
        return lambda text: np.asarray(self.embed_text(endpoint, text).vector, dtype=np.float64)
