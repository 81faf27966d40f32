"""Chat-completion backends.

``RemoteBackend`` talks to any OpenAI-compatible ``/chat/completions``
endpoint.  ``ScriptedBackend`` replays canned completions from a transcript
file, either keyed by a fingerprint of the prompt or positionally per
episode, which makes agent runs reproducible without a model.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import httpx

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
_TOKEN = re.compile(r"\w+|[^\w\s]")


def count_tokens(text: str) -> int:
    """Approximate token count: words and individual punctuation marks."""
    return len(_TOKEN.findall(text))


class LLMError(Exception):
    pass


class AuthError(LLMError):
    pass


class BackendTimeout(LLMError):
    pass


class TranscriptError(LLMError):
    pass


class FingerprintMiss(TranscriptError):
    def __init__(self, step: int, fingerprint: str):
        super().__init__(f"no scripted completion for step {step} (prompt fingerprint {fingerprint[:16]})")
        self.step = step
        self.fingerprint = fingerprint


class TranscriptExhausted(TranscriptError):
    def __init__(self, step: int, episode: str):
        super().__init__(f"transcript exhausted at step {step} of episode {episode!r}")
        self.step = step
        self.episode = episode


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.role != "system" and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.0
    max_tokens: int = 512
    stop_sequences: tuple[str, ...] = ()
    model_name: str = "gpt-3.5-turbo-16k"

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def truncated(self) -> bool:
        return self.finish_reason == "length"


class Backend:
    """Interface: ``complete(messages, cfg) -> Completion``.

    ``episode()`` returns the handle one agent episode should use; stateless
    backends return themselves.
    """

    def complete(self, messages: Sequence[ChatMessage], cfg: GenerationConfig | None = None) -> Completion:
        raise NotImplementedError

    def episode(self, *keys: str) -> "Backend":
        return self


def complete(backend: Backend, messages: Sequence[ChatMessage], cfg: GenerationConfig | None = None) -> str:
    out = backend.complete(messages, cfg or GenerationConfig())
    if out.truncated:
        logger.warning("completion stopped at max_tokens")
    return out.text


# -- remote -------------------------------------------------------------------


class RemoteBackend(Backend):
    """OpenAI-compatible chat completions over HTTP with bounded retries.

    Transient failures (connection errors, timeouts, 429, 5xx) are retried
    with exponential backoff; 401/403 fail immediately.
    """

    def __init__(
        self,
        base_url: str | None = None,
        model: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        max_backoff: float = 30.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        base = base_url or os.environ.get("GRAPHCOT_API_BASE") or "https://api.openai.com/v1"
        self.url = base.rstrip("/") + "/chat/completions"
        self.model = model
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def complete(self, messages: Sequence[ChatMessage], cfg: GenerationConfig | None = None) -> Completion:
        cfg = cfg or GenerationConfig()
        payload: dict[str, Any] = {
            "model": self.model or cfg.model_name,
            "messages": [m.to_dict() for m in messages],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }
        if cfg.stop_sequences:
            payload["stop"] = list(cfg.stop_sequences)
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(min(self.max_backoff, self.backoff * 2 ** (attempt - 1)))
            try:
                resp = self._client.post(self.url, json=payload)
            except httpx.TimeoutException as exc:
                last = exc
                logger.warning("attempt %d/%d timed out", attempt + 1, self.max_retries + 1)
                continue
            except httpx.TransportError as exc:
                last = exc
                logger.warning("attempt %d/%d failed: %s", attempt + 1, self.max_retries + 1, exc)
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"authentication failed ({resp.status_code}) at {self.url}")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = LLMError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                logger.warning("attempt %d/%d got HTTP %d", attempt + 1, self.max_retries + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise LLMError(f"HTTP {resp.status_code} from {self.url}: {resp.text[:200]}")
            return _parse_chat_response(resp)
        if isinstance(last, httpx.TimeoutException):
            raise BackendTimeout(f"timed out after {self.max_retries + 1} attempts") from last
        raise LLMError(f"request failed after {self.max_retries + 1} attempts: {last}") from last

    def close(self) -> None:
        self._client.close()


def _parse_chat_response(resp: httpx.Response) -> Completion:
    try:
        data = resp.json()
        choice = data["choices"][0]
        text = choice["message"]["content"] or ""
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise LLMError(f"malformed chat completion response: {exc}") from None
    usage = data.get("usage") or {}
    return Completion(
        text=text,
        finish_reason=choice.get("finish_reason") or "stop",
        prompt_tokens=int(usage.get("prompt_tokens", 0)),
        completion_tokens=int(usage.get("completion_tokens", 0)),
    )


# -- scripted -----------------------------------------------------------------


def prompt_fingerprint(messages: Iterable[ChatMessage | Mapping[str, str]]) -> str:
    """sha256 over the whitespace-normalised message contents."""
    parts = []
    for m in messages:
        content = m.content if isinstance(m, ChatMessage) else m["content"]
        parts.append(" ".join(content.split()))
    return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()


@dataclass
class Transcript:
    by_fingerprint: dict[str, str] = field(default_factory=dict)
    # episode key ("" = any episode) -> completions in step order
    positional: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def from_entries(cls, entries: Sequence[Mapping[str, Any]]) -> "Transcript":
        t = cls()
        staged: dict[str, dict[int, str]] = {}
        for n, e in enumerate(entries):
            match = e.get("match", "positional")
            completion = e.get("completion")
            if not isinstance(completion, str):
                raise TranscriptError(f"entry {n}: completion must be a string")
            if match == "fingerprint":
                t.by_fingerprint[str(e["key"])] = completion
            elif match == "positional":
                try:
                    step = int(e["key"])
                except (KeyError, TypeError, ValueError):
                    raise TranscriptError(f"entry {n}: positional key must be a step number") from None
                ep = str(e.get("episode", ""))
                if step in staged.setdefault(ep, {}):
                    raise TranscriptError(f"entry {n}: step {step} of episode {ep!r} given twice")
                staged[ep][step] = completion
            else:
                raise TranscriptError(f"entry {n}: unknown match mode {match!r}")
        for ep, steps in staged.items():
            ordered = sorted(steps)
            if ordered != list(range(1, len(ordered) + 1)):
                raise TranscriptError(f"episode {ep!r}: positional steps must be 1..n, got {ordered}")
            t.positional[ep] = [steps[i] for i in ordered]
        return t

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        try:
            entries = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise TranscriptError(f"cannot read transcript {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise TranscriptError(f"malformed transcript {path}: {exc}") from None
        if not isinstance(entries, list):
            raise TranscriptError(f"transcript {path} must be a JSON list")
        return cls.from_entries(entries)


class ScriptedBackend(Backend):
    """Replays a :class:`Transcript`.

    A fingerprint match always wins.  Otherwise the episode's positional
    script is consumed one completion per call; each ``episode()`` handle has
    its own cursor.  Running past the script, or missing a fingerprint when
    no script applies, raises instead of returning silence.
    """

    def __init__(self, transcript: Transcript, _keys: tuple[str, ...] = ()):
        self.transcript = transcript
        self._keys = _keys
        self._script = self._resolve_script(_keys)
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        return cls(Transcript.load(path))

    def _resolve_script(self, keys: tuple[str, ...]) -> tuple[str, list[str] | None]:
        for k in keys:
            if k in self.transcript.positional:
                return k, self.transcript.positional[k]
        if "" in self.transcript.positional:
            return "", self.transcript.positional[""]
        return (keys[0] if keys else ""), None

    def episode(self, *keys: str) -> "ScriptedBackend":
        return ScriptedBackend(self.transcript, tuple(keys))

    def complete(self, messages: Sequence[ChatMessage], cfg: GenerationConfig | None = None) -> Completion:
        with self._lock:
            self._cursor += 1
            step = self._cursor
        fp = prompt_fingerprint(messages)
        text = self.transcript.by_fingerprint.get(fp)
        if text is None:
            name, script = self._script
            if script is None:
                raise FingerprintMiss(step, fp)
            if step > len(script):
                raise TranscriptExhausted(step, name)
            text = script[step - 1]
        prompt_tokens = sum(count_tokens(m.content) for m in messages)
        return Completion(text, "stop", prompt_tokens, count_tokens(text))


class FunctionBackend(Backend):
    """Backend computing completions with a Python callable (stubs, judges)."""

    def __init__(self, fn: Callable[[Sequence[ChatMessage]], str]):
        self.fn = fn

    def complete(self, messages: Sequence[ChatMessage], cfg: GenerationConfig | None = None) -> Completion:
        text = self.fn(messages)
        return Completion(text, "stop", sum(count_tokens(m.content) for m in messages), count_tokens(text))


def make_backend(spec: str, **kwargs: Any) -> Backend:
    """Backend from a spec string.

    ``scripted:<transcript.json>``, ``remote:<model>`` (base URL from
    ``GRAPHCOT_API_BASE`` or ``base_url=``), or ``exact-judge``.
    """
    kind, _, arg = spec.partition(":")
    if kind == "scripted":
        return ScriptedBackend.from_file(arg)
    if kind == "remote":
        return RemoteBackend(model=arg or None, **kwargs)
    if kind == "exact-judge":
        from .evaluate import exact_judge

        return exact_judge()
    raise ValueError(f"unknown backend spec {spec!r} (expected scripted:PATH, remote:MODEL or exact-judge)")
