"""Uniform access to a text-completion model.

Two backends share one interface: an HTTP backend speaking the common
chat-completions wire format, and a scripted backend that replays canned
responses keyed by a hash of the rendered prompt. The scripted backend is a
pure function of (prompt, seed), which is what makes every pipeline stage
testable offline: the k consensus runs pass their run index as the seed and
a fixture can script a different answer for each run.

Prompts are rendered from templates with ``{{slot}}`` placeholders. Rendering
is strict: referencing an unbound slot is an error, and nothing else in the
template text is interpreted, so document bodies pass through verbatim.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

DEFAULT_SOFTMAX_FACTOR = 0.5
SCRIPTED_FALLBACK = "NO_DATA"

_SLOT_RE = re.compile(r"\{\{(\w+)\}\}")


class GatewayError(Exception):
    pass


class RenderError(GatewayError):
    """A template referenced a slot that was not bound."""


class BackendUnavailable(GatewayError):
    """Transport kept failing after the configured number of retries."""


class ConfigurationError(GatewayError):
    """Authentication or quota failure; retrying cannot help."""


@dataclass(frozen=True)
class SamplingConfig:
    """Sampling knobs. ``softmax_factor`` maps onto the chat endpoint's
    temperature parameter; ``seed`` is honored by the scripted backend only."""

    softmax_factor: float = DEFAULT_SOFTMAX_FACTOR
    max_output_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.softmax_factor <= 2.0:
            raise ValueError("softmax_factor must be in [0, 2]")

    def with_seed(self, seed: int) -> "SamplingConfig":
        return SamplingConfig(self.softmax_factor, self.max_output_tokens, seed)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str

    @property
    def slots(self) -> tuple[str, ...]:
        seen: list[str] = []
        for name in _SLOT_RE.findall(self.text):
            if name not in seen:
                seen.append(name)
        return tuple(seen)


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    sampling: SamplingConfig = field(default_factory=SamplingConfig)


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    backend: str
    latency_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0


def render(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute every ``{{slot}}`` in the template. Deterministic; raises
    ``RenderError`` naming the first unbound slot."""

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise RenderError(f"unbound slot {name!r} in template {template.template_id!r}")
        return str(bindings[name])

    return _SLOT_RE.sub(substitute, template.text)


def prompt_hash(prompt: str) -> str:
    """Stable key for scripting responses to a rendered prompt."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


class RateLimiter:
    """Token bucket over requests per minute. A limit of 0 disables it."""

    def __init__(self, requests_per_minute: int = 0):
        self.rate = requests_per_minute
        self._lock = threading.Lock()
        self._allowance = float(requests_per_minute)
        self._last = time.monotonic()

    def acquire(self):
        if self.rate <= 0:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self._allowance = min(
                    self.rate, self._allowance + (now - self._last) * self.rate / 60.0
                )
                self._last = now
                if self._allowance >= 1.0:
                    self._allowance -= 1.0
                    return
                wait = (1.0 - self._allowance) * 60.0 / self.rate
            time.sleep(wait)


@dataclass(frozen=True)
class HallucinationConfig:
    """Controlled corruption for ablation studies: with probability ``rate``
    the scripted backend appends one spurious record line to a response. The
    draw is seeded by (prompt, seed), so a given run either always or never
    hallucinates. Spurious values embed the run seed, so two runs over the
    same document can never emit the same spurious point; each one therefore
    appears in exactly one of the k runs."""

    rate: float
    seed: int = 0
    line: str = "temperature={u1} C; time={u2} h; hardness={u3}"

    def spurious_line(self, key: str, seed: int | None) -> str | None:
        rng_key = f"{key}:{seed}:{self.seed}".encode()
        digest = hashlib.sha256(rng_key).digest()
        draw = int.from_bytes(digest[:8], "big") / 2**64
        if draw >= self.rate:
            return None
        s = seed or 0
        # seed stride (101) exceeds the jitter range (97), keeping values
        # distinct across run seeds and far outside any realistic data range
        return self.line.format(
            u1=5000 + s * 101 + digest[8] % 97,
            u2=700 + s * 37 + digest[9] % 31,
            u3=round(50 + (digest[10] % 400) / 10.0, 1),
        )


class ScriptedBackend:
    """Deterministic playback backend.

    ``responses`` maps ``prompt_hash(prompt)`` to a list of responses. A call
    with seed ``s`` returns entry ``s % len(list)``; calls without a seed walk
    the list in order (per-key call counter). Unmapped prompts return the
    fixture's fallback string.
    """

    name = "scripted"

    def __init__(
        self,
        responses: dict[str, list[str]] | None = None,
        fallback: str = SCRIPTED_FALLBACK,
        hallucination: HallucinationConfig | None = None,
    ):
        self.responses = {k: list(v) for k, v in (responses or {}).items()}
        self.fallback = fallback
        self.hallucination = hallucination
        self.calls = 0
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_fixture(cls, path: str | Path) -> "ScriptedBackend":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            responses=raw.get("responses", {}),
            fallback=raw.get("fallback", SCRIPTED_FALLBACK),
        )

    def script(self, prompt: str, *responses: str):
        """Register responses for a prompt (test convenience)."""
        self.responses.setdefault(prompt_hash(prompt), []).extend(responses)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = prompt_hash(request.prompt)
        seed = request.sampling.seed
        with self._lock:
            self.calls += 1
            sequence = self.responses.get(key)
            if not sequence:
                text = self.fallback
            elif seed is not None:
                text = sequence[seed % len(sequence)]
            else:
                cursor = self._cursor.get(key, 0)
                self._cursor[key] = cursor + 1
                text = sequence[min(cursor, len(sequence) - 1)]
        if self.hallucination is not None:
            extra = self.hallucination.spurious_line(key, seed)
            if extra is not None:
                text = text + "\n" + extra if text else extra
        return CompletionResponse(text=text, backend=self.name)


class HttpBackend:
    """Chat-completions HTTP backend.

    Transport failures are retried with exponential backoff (1s, 2s, 4s by
    default) before raising ``BackendUnavailable``. Authentication and quota
    failures raise ``ConfigurationError`` immediately.
    """

    name = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str,
        max_attempts: int = 3,
        backoff_s: float = 1.0,
        timeout_s: float = 60.0,
        rate_limiter: RateLimiter | None = None,
    ):
        if not api_key:
            raise ConfigurationError("missing API key (set LITLOOP_API_KEY)")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.rate_limiter = rate_limiter or RateLimiter(0)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        payload = json.dumps(
            {
                "model": self.model,
                "messages": [{"role": "user", "content": request.prompt}],
                "temperature": request.sampling.softmax_factor,
                "max_tokens": request.sampling.max_output_tokens,
            }
        ).encode("utf-8")
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            self.rate_limiter.acquire()
            started = time.monotonic()
            try:
                req = urllib.request.Request(
                    f"{self.base_url}/chat/completions",
                    data=payload,
                    headers={
                        "Content-Type": "application/json",
                        "Authorization": f"Bearer {self.api_key}",
                    },
                )
                with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                    body = json.loads(resp.read().decode("utf-8"))
                usage = body.get("usage", {})
                return CompletionResponse(
                    text=body["choices"][0]["message"]["content"],
                    backend=self.name,
                    latency_s=time.monotonic() - started,
                    prompt_tokens=usage.get("prompt_tokens", 0),
                    completion_tokens=usage.get("completion_tokens", 0),
                )
            except urllib.error.HTTPError as exc:
                if exc.code in (401, 403, 402, 429):
                    raise ConfigurationError(
                        f"backend rejected the request ({exc.code}); check key/quota"
                    ) from exc
                last_error = exc
            except (urllib.error.URLError, OSError, json.JSONDecodeError, KeyError) as exc:
                last_error = exc
            if attempt + 1 < self.max_attempts:
                delay = self.backoff_s * 2**attempt
                log.warning("completion attempt %d failed (%s); retrying in %.0fs",
                            attempt + 1, last_error, delay)
                time.sleep(delay)
        raise BackendUnavailable(
            f"backend unreachable after {self.max_attempts} attempts: {last_error}"
        )


def complete(backend, request: CompletionRequest) -> CompletionResponse:
    """Call ``backend`` with ``request``; the response text is returned
    verbatim, with no post-processing at this layer."""
    if not request.prompt:
        raise GatewayError("refusing to send an empty prompt")
    return backend.complete(request)
