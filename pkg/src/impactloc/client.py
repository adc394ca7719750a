"""Chat-completions client: one user message per prompt, greedy decoding.

The wire format is the common chat-completions shape. Transport is a plain
callable (request dict, config) -> (status, parsed body), so tests inject
scripted fakes and the runner plugs in the offline stub endpoint; the
default transport posts over HTTP with requests. Transport failures, 5xx
and 429 are retried with exponential backoff; other failures become error
descriptors immediately. complete never raises for a single post: every
outcome is a RawResponse. Successful completions are cached on disk keyed
by model, prompt checksum and decoding parameters, so reruns are free and
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import requests

from .corpus import Post
from .prompts import PromptSpec, build_prompt

Transport = Callable[[dict, "InferenceConfig"], tuple[int, object]]


class TransportError(Exception):
    """Network-level failure (connection, timeout); always retryable."""


@dataclass(frozen=True)
class InferenceConfig:
    endpoint_url: str
    model_id: str
    temperature: float = 0.0
    top_p: float = 0.9
    max_output_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    api_key: str | None = None

    def __post_init__(self) -> None:
        if not self.endpoint_url:
            raise ValueError("endpoint_url must be set (flag, config, or ENDPOINT_URL)")
        if not self.model_id:
            raise ValueError("model_id must be set")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "InferenceConfig":
        """Build a config taking endpoint and key from ENDPOINT_URL / API_KEY."""
        values = {
            "endpoint_url": os.environ.get("ENDPOINT_URL", ""),
            "api_key": os.environ.get("API_KEY") or None,
        }
        values.update(overrides)
        return cls(**values)


def prompt_checksum(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def build_request(prompt: str, cfg: InferenceConfig) -> dict:
    """The request body: single user message, no system message."""
    return {
        "model": cfg.model_id,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "max_tokens": cfg.max_output_tokens,
    }


def canonical_request_json(prompt: str, cfg: InferenceConfig) -> str:
    """Stable serialization of the request body (sorted keys, no spaces)."""
    return json.dumps(build_request(prompt, cfg), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class RawResponse:
    """Outcome of one completion attempt chain: text or an error descriptor."""

    post_id: str
    prompt_sha256: str
    text: str | None
    error: str | None
    attempts: int
    latency_s: float
    cached: bool = False

    def __post_init__(self) -> None:
        if (self.text is None) == (self.error is None):
            raise ValueError("exactly one of text/error must be set")

    @property
    def ok(self) -> bool:
        return self.error is None


class ResponseCache:
    """One JSON file per (model, prompt, decoding parameters) key.

    Writes are atomic (temp file + rename) and lock-guarded, so concurrent
    workers computing the same prompt cannot corrupt an entry. Only
    successful completions are stored.
    """

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(cfg: InferenceConfig, prompt_sha256: str) -> str:
        blob = json.dumps(
            {
                "model_id": cfg.model_id,
                "prompt_sha256": prompt_sha256,
                "temperature": cfg.temperature,
                "top_p": cfg.top_p,
                "max_tokens": cfg.max_output_tokens,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, cfg: InferenceConfig, prompt_sha256: str, post_id: str) -> RawResponse | None:
        path = self._path(self.key(cfg, prompt_sha256))
        with self._lock:
            if not path.exists():
                return None
            entry = json.loads(path.read_text(encoding="utf-8"))
        resp = entry["response"]
        return RawResponse(
            post_id=post_id,
            prompt_sha256=prompt_sha256,
            text=resp["text"],
            error=None,
            attempts=int(resp["attempts"]),
            latency_s=float(resp["latency_s"]),
            cached=True,
        )

    def put(self, cfg: InferenceConfig, raw: RawResponse, request: dict) -> None:
        if not raw.ok:
            raise ValueError("only successful responses are cached")
        key = self.key(cfg, raw.prompt_sha256)
        entry = {
            "key": key,
            "request": request,
            "response": {"text": raw.text, "attempts": raw.attempts, "latency_s": raw.latency_s},
        }
        blob = json.dumps(entry, sort_keys=True, ensure_ascii=False, indent=1)
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(blob)
                os.replace(tmp, self._path(key))
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)


def requests_transport(request: dict, cfg: InferenceConfig) -> tuple[int, object]:
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    try:
        resp = requests.post(cfg.endpoint_url, json=request, headers=headers, timeout=cfg.timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    try:
        payload = resp.json()
    except ValueError:
        payload = None
    return resp.status_code, payload


def _extract_text(payload: object) -> str | None:
    try:
        content = payload["choices"][0]["message"]["content"]  # type: ignore[index]
    except (TypeError, KeyError, IndexError):
        return None
    return content if isinstance(content, str) else None


def complete(
    prompt: str,
    cfg: InferenceConfig,
    *,
    transport: Transport | None = None,
    cache: ResponseCache | None = None,
    post_id: str = "",
    sleep: Callable[[float], None] = time.sleep,
) -> RawResponse:
    """Run one prompt to a RawResponse; never raises for request failures."""
    checksum = prompt_checksum(prompt)
    if cache is not None:
        hit = cache.get(cfg, checksum, post_id)
        if hit is not None:
            return hit
    transport = transport or requests_transport
    request = build_request(prompt, cfg)
    start = time.monotonic()
    attempts = 0
    last_error = "unknown"
    while attempts <= cfg.max_retries:
        attempts += 1
        retryable = False
        try:
            status, payload = transport(request, cfg)
        except TransportError as exc:
            last_error = f"transport: {exc}"
            retryable = True
        else:
            if status == 200:
                text = _extract_text(payload)
                if text is None:
                    last_error = "invalid_response_body"
                elif not text.strip():
                    last_error = "empty_completion"
                else:
                    raw = RawResponse(
                        post_id=post_id,
                        prompt_sha256=checksum,
                        text=text,
                        error=None,
                        attempts=attempts,
                        latency_s=time.monotonic() - start,
                    )
                    if cache is not None:
                        cache.put(cfg, raw, request)
                    return raw
            elif status >= 500 or status == 429:
                last_error = f"http_{status}"
                retryable = True
            else:
                last_error = f"http_{status}"
        if not retryable:
            break
        if attempts <= cfg.max_retries:
            sleep(cfg.backoff_base * (2 ** (attempts - 1)))
    return RawResponse(
        post_id=post_id,
        prompt_sha256=checksum,
        text=None,
        error=last_error,
        attempts=attempts,
        latency_s=time.monotonic() - start,
    )


def run_batch(
    posts: Sequence[Post],
    spec: PromptSpec,
    cfg: InferenceConfig,
    *,
    transport: Transport | None = None,
    cache: ResponseCache | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[RawResponse]:
    """Complete one prompt per post with bounded parallelism.

    Results come back in input order; per-post failures are isolated as
    error responses and never abort the batch.
    """

    def one(post: Post) -> RawResponse:
        prompt = build_prompt(spec, post.text)
        return complete(
            prompt, cfg, transport=transport, cache=cache, post_id=post.post_id, sleep=sleep
        )

    if not posts:
        return []
    with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        return list(pool.map(one, posts))
