"""Chat-completion gateway: one HTTP client plus a fully scripted mock.

The HTTP side speaks the OpenAI-compatible chat-completions shape; nothing
else in the pipeline knows the wire format. The scripted mock is keyed by a
hash of the full message history so multi-turn revision scripts can be
expressed and replayed deterministically.
"""

from __future__ import annotations

import abc
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import requests

from .serde import canonical_json, sha256_hex

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "CODEIO_LLM_ENDPOINT"
KEY_ENV = "CODEIO_LLM_KEY"

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatTurn:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role: {self.role!r}")
        if self.role in ("user", "assistant") and not self.content:
            raise ValueError(f"{self.role} turn must have non-empty content")


def user(content: str) -> ChatTurn:
    return ChatTurn("user", content)


def assistant(content: str) -> ChatTurn:
    return ChatTurn("assistant", content)


@dataclass(frozen=True)
class GatewayConfig:
    endpoint: str = ""
    model: str = "deepseek-v2.5"
    max_retries: int = 3
    timeout: float = 120.0
    concurrency: int = 8
    temperature: float = 0.7
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "GatewayConfig":
        endpoint = os.environ.get(ENDPOINT_ENV, "")
        return cls(endpoint=endpoint, **overrides)


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    """The endpoint stayed unreachable or kept failing after all retries."""


class GatewayTimeout(GatewayError):
    """No response within the per-request timeout, after all retries."""


class RateLimited(GatewayError):
    """The endpoint kept answering 429 past the backoff budget."""


class ScriptMiss(GatewayError, KeyError):
    """The scripted mock has no completion for this message history."""


def history_key(history: Sequence[ChatTurn]) -> str:
    """Stable key for a message history; this is the mock script's key format."""
    payload = [{"role": t.role, "content": t.content} for t in history]
    return sha256_hex(canonical_json(payload))


def _check_history(history: Sequence[ChatTurn]) -> None:
    if not history:
        raise ValueError("history must not be empty")
    if history[-1].role != "user":
        raise ValueError("history must end with a user turn")


class Gateway(abc.ABC):
    """Anything that turns a message history into one assistant turn."""

    @abc.abstractmethod
    def complete(self, history: Sequence[ChatTurn]) -> ChatTurn:
        raise NotImplementedError


class ScriptedGateway(Gateway):
    """Deterministic gateway backed by a {history_key: completion} map.

    A script file is a JSON object mapping history keys (see history_key) to
    completion strings. Calls are recorded so tests can assert how many
    requests were issued.
    """

    def __init__(self, script: Mapping[str, str]):
        self._script = dict(script)
        self._lock = threading.Lock()
        self.calls: list[str] = []

    @classmethod
    def from_file(cls, path: str) -> "ScriptedGateway":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def script(self, history: Sequence[ChatTurn], completion: str) -> None:
        self._script[history_key(history)] = completion

    def complete(self, history: Sequence[ChatTurn]) -> ChatTurn:
        _check_history(history)
        key = history_key(history)
        with self._lock:
            self.calls.append(key)
        try:
            text = self._script[key]
        except KeyError:
            tail = history[-1].content[:80].replace("\n", " ")
            raise ScriptMiss(f"no scripted completion for key {key} (last user turn: {tail!r})")
        return assistant(text)


class HttpGateway(Gateway):
    """OpenAI-compatible chat-completions client with retries and a concurrency cap."""

    def __init__(self, config: GatewayConfig, api_key: str | None = None):
        if not config.endpoint:
            raise ValueError(f"gateway endpoint not configured (set {ENDPOINT_ENV})")
        self._config = config
        self._api_key = api_key if api_key is not None else os.environ.get(KEY_ENV, "")
        self._semaphore = threading.BoundedSemaphore(config.concurrency)
        self._session = requests.Session()

    def complete(self, history: Sequence[ChatTurn]) -> ChatTurn:
        _check_history(history)
        cfg = self._config
        payload = {
            "model": cfg.model,
            "temperature": cfg.temperature,
            "messages": [{"role": t.role, "content": t.content} for t in history],
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"

        last_error: GatewayError | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff_base * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    resp = self._session.post(
                        cfg.endpoint, json=payload, headers=headers, timeout=cfg.timeout
                    )
            except requests.Timeout:
                last_error = GatewayTimeout(f"request timed out after {cfg.timeout}s")
                continue
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if resp.status_code == 429:
                last_error = RateLimited(f"rate limited by {cfg.endpoint}")
                continue
            if resp.status_code >= 500:
                last_error = TransportError(f"HTTP {resp.status_code} from {cfg.endpoint}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise TransportError(f"malformed completion payload: {exc}") from exc
            return assistant(content)
        assert last_error is not None
        logger.warning("gateway giving up after %d attempts: %s", cfg.max_retries + 1, last_error)
        raise last_error
