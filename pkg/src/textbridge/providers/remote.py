"""HTTP clients for OpenAI-compatible model services.

Endpoints used: ``POST {base_url}/embeddings``, ``POST {base_url}/completions``
and ``POST {base_url}/chat/completions``. Every response is stored in a
content-addressed cache keyed on the canonical request body, so a repeated
request never reaches the network twice.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from urllib.parse import parse_qsl, urlsplit, urlunsplit

import httpx
import numpy as np

from ..errors import CapabilityError, ProviderError, RetryableProviderError
from .base import DEFAULT_BEAM_WIDTH, Generation, LMScore, attribute_prompt, split_attribute_response
from .cache import ContentCache, canonical_json, request_digest

KINDS = ("embeddings", "completions", "chat")

# caption sampling defaults, recorded in every request body
CAPTION_TEMPERATURE = 1.0
CAPTION_TOP_P = 0.9


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str
    kind: str = "completions"
    model: str = ""
    token_env: str | None = None
    timeout: float = 60.0
    max_in_flight: int = 4
    retries: int = 3
    backoff: float = 0.5
    beam_search: bool = False  # server accepts use_beam_search/best_of
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @property
    def identity(self) -> str:
        # the token never enters the identity, the cache key or a manifest
        return f"{self.kind}:{self.base_url.rstrip('/')}#{self.model}"

    @classmethod
    def from_spec(cls, spec: str, kind: str = "completions") -> "ProviderConfig":
        """Parse ``openai:https://host/v1?model=M&token_env=VAR&timeout=30``."""
        if spec.startswith("openai:"):
            spec = spec[len("openai:"):]
        parts = urlsplit(spec)
        query = dict(parse_qsl(parts.query))
        base = urlunsplit((parts.scheme, parts.netloc, parts.path, "", ""))
        kwargs: dict = {"base_url": base, "kind": query.pop("kind", kind),
                        "model": query.pop("model", "")}
        if "token_env" in query:
            kwargs["token_env"] = query.pop("token_env")
        for key, conv in (("timeout", float), ("max_in_flight", int), ("retries", int),
                          ("backoff", float)):
            if key in query:
                kwargs[key] = conv(query.pop(key))
        if "beam_search" in query:
            kwargs["beam_search"] = query.pop("beam_search").lower() in ("1", "true", "yes")
        kwargs["extra"] = query
        return cls(**kwargs)


class HTTPClient:
    """JSON POST with bounded concurrency, fixed exponential retries and caching."""

    def __init__(self, config: ProviderConfig, cache: ContentCache | None = None,
                 transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        self.config = config
        self.cache = cache
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._client = httpx.Client(base_url=config.base_url.rstrip("/") + "/",
                                    timeout=config.timeout, transport=transport)
        self._sleep = sleep
        self._lock = threading.Lock()
        self.network_calls = 0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.token_env) if self.config.token_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def post(self, path: str, body: dict, operation: str) -> dict:
        digest = request_digest(self.config.identity, f"{operation}:{path}", body)
        if self.cache is not None:
            hit = self.cache.lookup(self.config.identity, digest)
            if hit is not None:
                return json.loads(hit)
        payload = self._send(path, body)
        if self.cache is not None:
            self.cache.store(self.config.identity, digest, canonical_json(payload))
        return payload

    def _send(self, path: str, body: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                self._sleep(self.config.backoff * 2 ** (attempt - 1))
            with self._slots:
                with self._lock:
                    self.network_calls += 1
                try:
                    resp = self._client.post(path.lstrip("/"), content=canonical_json(body),
                                             headers=self._headers())
                except httpx.TransportError as exc:
                    last = exc
                    continue
            if resp.status_code // 100 != 2:
                raise ProviderError(f"POST {path} failed", status=resp.status_code, body=resp.text)
            try:
                return resp.json()
            except ValueError as exc:
                raise ProviderError(f"POST {path} returned invalid JSON") from exc
        raise RetryableProviderError(f"POST {path}: transport failure after "
                                     f"{self.config.retries + 1} attempts: {last}")

    def close(self):
        self._client.close()


class _Remote:
    def __init__(self, config: ProviderConfig, cache: ContentCache | None = None,
                 transport: httpx.BaseTransport | None = None, **kw):
        self.config = config
        self.http = HTTPClient(config, cache, transport, **kw)
        self.identity = config.identity

    @property
    def network_calls(self) -> int:
        return self.http.network_calls

    def _body(self, **fields) -> dict:
        return {"model": self.config.model, **self.config.extra, **fields}


class RemoteEmbedder(_Remote):
    """Embeds text, or an image given as URL / data URI, via ``/embeddings``."""

    def embed(self, item: str) -> np.ndarray:
        if not item:
            raise ValueError("cannot embed an empty input")
        out = self.http.post("embeddings", self._body(input=[item]), "embed")
        try:
            return np.asarray(out["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected embeddings response: {str(out)[:200]}") from exc


def _chat_text(choice) -> str:
    msg = choice.get("message") or {}
    return msg.get("content") or choice.get("text") or ""


class RemoteCaptioner(_Remote):
    def __init__(self, config, cache=None, transport=None, seed: int = 0, **kw):
        super().__init__(config, cache, transport, **kw)
        self.seed = seed

    def generate_captions(self, image_ref: str, n: int) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        body = self._body(
            messages=[{"role": "user", "content": [
                {"type": "text", "text": "Describe this image in one short caption."},
                {"type": "image_url", "image_url": {"url": image_ref}}]}],
            n=n, temperature=CAPTION_TEMPERATURE, top_p=CAPTION_TOP_P, seed=self.seed,
            max_tokens=40)
        out = self.http.post("chat/completions", body, "caption")
        captions = [_chat_text(c).strip() for c in out.get("choices", [])]
        captions = [c for c in captions if c]
        if len(captions) < n:
            raise ProviderError(f"asked for {n} captions, service returned {len(captions)}")
        return captions[:n]


class RemoteAttributes(_Remote):
    def generate_attributes(self, tag: str) -> list[str]:
        if not tag:
            raise ValueError("tag must be non-empty")
        prompt = attribute_prompt(tag)
        if self.config.kind == "chat":
            out = self.http.post("chat/completions", self._body(
                messages=[{"role": "user", "content": prompt}], temperature=0.0, max_tokens=256),
                "attributes")
        else:
            out = self.http.post("completions", self._body(
                prompt=prompt, temperature=0.0, max_tokens=256), "attributes")
        choices = out.get("choices") or [{}]
        attrs = split_attribute_response(_chat_text(choices[0]))
        if not attrs:
            raise ProviderError(f"empty attribute response for tag {tag!r}")
        return attrs


class RemoteLM(_Remote):
    """Scoring through ``echo`` + ``logprobs``; generation through ``/completions``.

    When the server does not advertise beam search (``beam_search=False``),
    generation falls back to greedy decoding at temperature 0.
    """

    separator = " "

    def lm_score(self, prompt: str, completion: str) -> LMScore:
        if not completion:
            raise ValueError("completion must be non-empty")
        text = prompt + self.separator + completion
        out = self.http.post("completions", self._body(
            prompt=text, max_tokens=0, echo=True, logprobs=0, temperature=0.0), "score")
        try:
            lp = out["choices"][0]["logprobs"]
            tokens, logprobs, offsets = lp["tokens"], lp["token_logprobs"], lp["text_offset"]
        except (KeyError, IndexError, TypeError):
            raise CapabilityError(f"{self.identity} returned no token log-probabilities") from None
        start = len(prompt)
        picked = [(t, l) for t, l, o in zip(tokens, logprobs, offsets) if o >= start and l is not None]
        if not picked:
            raise CapabilityError(f"{self.identity} returned no completion log-probabilities")
        return LMScore(tuple(t for t, _ in picked), tuple(min(float(l), 0.0) for _, l in picked))

    def lm_generate(self, prompt: str, beam_width: int = DEFAULT_BEAM_WIDTH,
                    max_tokens: int | None = None) -> Generation:
        if beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        body = self._body(prompt=prompt, max_tokens=max_tokens or 32, temperature=0.0)
        if self.config.beam_search and beam_width > 1:
            body.update(use_beam_search=True, best_of=beam_width, n=1)
        out = self.http.post("completions", body, "generate")
        try:
            choice = out["choices"][0]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"unexpected completions response: {str(out)[:200]}") from None
        return Generation(_chat_text(choice).strip(), choice.get("finish_reason") == "length")
