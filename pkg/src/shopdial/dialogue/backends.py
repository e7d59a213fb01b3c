"""Text generation backends.

``TemplateBackend`` renders fixed phrases from the structured request and is
fully deterministic. ``RemoteBackend`` posts chat-completion requests over
HTTP with retry/backoff and a cap on in-flight requests.
"""
from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import httpx

from ..search import Entry, Interest
from .prompts import load_phrases

logger = logging.getLogger(__name__)

ENV_URL = "SHOPDIAL_API_URL"
ENV_KEY = "SHOPDIAL_API_KEY"
ENV_MODEL = "SHOPDIAL_MODEL"


class BackendError(RuntimeError):
    retryable = False


class BackendConfigError(BackendError):
    """Backend cannot be constructed (e.g. missing endpoint or credential)."""


class RateLimited(BackendError):
    retryable = True

    def __init__(self, msg: str, retry_after: float | None = None):
        super().__init__(msg)
        self.retry_after = retry_after


class ServerError(BackendError):
    retryable = True


class BackendTimeout(BackendError):
    retryable = True


class TransportFailure(BackendError):
    retryable = True


@dataclass
class TurnRequest:
    """Structured description of the text wanted from a backend.

    ``stage`` is one of open, ask, answer, recommend, close, script.
    Remote backends ignore it and work from the rendered messages.
    """

    stage: str
    category: str
    steps: Sequence[Entry] = ()
    hints: Mapping[str, Sequence[str]] = field(default_factory=dict)
    product_title: str | None = None
    closing_index: int = 0
    chunks: Sequence[Sequence[Entry]] = ()
    closing_turns: int = 2


@dataclass
class Generation:
    text: str
    meta: dict


def _check_messages(messages) -> None:
    if not messages:
        raise ValueError("message list is empty")
    for m in messages:
        if not isinstance(m, Mapping) or "role" not in m or "content" not in m:
            raise ValueError(f"bad message {m!r}")


def join_values(values: Sequence[str]) -> str:
    values = list(values)
    if len(values) <= 1:
        return "".join(values)
    return f"{', '.join(values[:-1])} or {values[-1]}"


class TemplateBackend:
    name = "template"
    deterministic = True

    def __init__(self, phrases: Mapping | None = None):
        self.phrases = dict(phrases) if phrases is not None else load_phrases()

    def ask(self, steps: Sequence[Entry], hints: Mapping[str, Sequence[str]]) -> str:
        parts = []
        for i, step in enumerate(steps):
            parts.append(self.phrases["ask_first" if i == 0 else "ask_next"].format(aspect=step.aspect))
            values = hints.get(step.aspect) or []
            if values:
                parts.append(self.phrases["hints"].format(values=join_values(values)))
        return " ".join(parts)

    def answer(self, steps: Sequence[Entry]) -> str:
        return " ".join(self.phrases[f"answer_{s.interest.value}"].format(aspect=s.aspect, value=s.value)
                        for s in steps)

    def recommend(self, title: str, direct: bool = False) -> str:
        return self.phrases["recommend_direct" if direct else "recommend"].format(title=title)

    def closing(self, i: int) -> str:
        return self.phrases["closing"][i]

    def opening(self, category: str) -> str:
        return self.phrases["opening"].format(category=category)

    def script(self, req: TurnRequest) -> str:
        lines = [("customer", self.opening(req.category))]
        for chunk in req.chunks:
            lines.append(("seller", self.ask(chunk, req.hints)))
            lines.append(("customer", self.answer(chunk)))
        lines.append(("seller", self.recommend(req.product_title, direct=not req.chunks)))
        for i in range(req.closing_turns):
            lines.append(("customer" if i % 2 == 0 else "seller", self.closing(i)))
        return "\n".join(f"{who}: {text}" for who, text in lines)

    def generate(self, messages, params: Mapping | None = None, request: TurnRequest | None = None) -> Generation:
        _check_messages(messages)
        if request is None:
            raise BackendError("the template backend needs a structured TurnRequest")
        stage = request.stage
        if stage == "open":
            text = self.opening(request.category)
        elif stage == "ask":
            text = self.ask(request.steps, request.hints)
        elif stage == "answer":
            text = self.answer(request.steps)
        elif stage == "recommend":
            text = self.recommend(request.product_title, direct=not request.steps)
        elif stage == "close":
            text = self.closing(request.closing_index)
        elif stage == "script":
            text = self.script(request)
        else:
            raise BackendError(f"unknown stage {stage!r}")
        return Generation(text, {"backend": self.name, "attempts": 1})


class RemoteBackend:
    """Chat-completion client: role-tagged messages in, text out."""

    name = "remote"
    deterministic = False

    def __init__(self, url: str | None, api_key: str | None, model: str = "gpt-4", *,
                 timeout: float = 120.0, max_retries: int = 4, backoff: float = 1.0,
                 max_backoff: float = 30.0, max_in_flight: int = 4,
                 transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        if not url:
            raise BackendConfigError(f"remote backend needs an endpoint URL (set {ENV_URL})")
        if not api_key:
            raise BackendConfigError(f"remote backend needs a credential (set {ENV_KEY})")
        self.url = url
        self.model = model
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(transport=transport, timeout=timeout,
                                    headers={"Authorization": f"Bearer {api_key}"})

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **kwargs) -> "RemoteBackend":
        env = os.environ if env is None else env
        return cls(env.get(ENV_URL), env.get(ENV_KEY), env.get(ENV_MODEL) or "gpt-4", **kwargs)

    def close(self) -> None:
        self._client.close()

    def _post(self, body: dict) -> str:
        try:
            with self._slots:
                resp = self._client.post(self.url, json=body)
        except httpx.TimeoutException as e:
            raise BackendTimeout(f"request timed out: {e}") from e
        except httpx.TransportError as e:
            raise TransportFailure(f"transport error: {e}") from e
        if resp.status_code == 429:
            retry_after = resp.headers.get("retry-after")
            try:
                delay = float(retry_after) if retry_after is not None else None
            except ValueError:
                delay = None
            raise RateLimited("rate limited (429)", delay)
        if resp.status_code >= 500:
            raise ServerError(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"request rejected with {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(f"unexpected response body: {resp.text[:200]}") from e

    def generate(self, messages, params: Mapping | None = None, request: TurnRequest | None = None) -> Generation:
        _check_messages(messages)
        params = dict(params or {})
        body = {"model": self.model, "messages": [dict(m) for m in messages]}
        if params.get("max_length") is not None:
            body["max_tokens"] = params["max_length"]
        for key in ("seed", "temperature"):
            if params.get(key) is not None:
                body[key] = params[key]
        start = time.monotonic()
        attempt = 0
        while True:
            attempt += 1
            try:
                text = self._post(body)
                break
            except BackendError as e:
                if not e.retryable or attempt > self.max_retries:
                    raise
                delay = min(self.max_backoff, self.backoff * 2 ** (attempt - 1))
                if isinstance(e, RateLimited) and e.retry_after is not None:
                    delay = min(self.max_backoff, max(delay, e.retry_after))
                logger.warning("attempt %d failed (%s); retrying in %.1fs", attempt, e, delay)
                self._sleep(delay)
        return Generation(text, {"backend": self.name, "model": self.model, "attempts": attempt,
                                 "latency_s": round(time.monotonic() - start, 3), "seed": params.get("seed")})


def make_backend(name: str, env: Mapping[str, str] | None = None, **kwargs):
    if name == "template":
        return TemplateBackend()
    if name == "remote":
        return RemoteBackend.from_env(env, **kwargs)
    raise BackendConfigError(f"unknown backend {name!r}")
