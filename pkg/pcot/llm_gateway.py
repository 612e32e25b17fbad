"""
One chat-completion interface over OpenAI-compatible, Anthropic-compatible,
Google and mock backends.

Every call goes through LlmGateway.complete(): cache lookup, request budget,
per-provider rate limiting, then the provider call with exponential-backoff
retries on transient failures. Results are written to a content-addressed
JSON cache so interrupted runs resume without re-querying.
"""
import asyncio
import json
import logging
import os
import tempfile
import time
from collections import Counter
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Awaitable, Callable

import aiohttp
import regex
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from pcot import config
from pcot.errors import (AuthError, BudgetExceeded, ConfigError, InvalidPattern, ProviderError,
                         TransientProviderError)
from pcot.prompt_engine import RenderedPrompt

logger = logging.getLogger(__name__)

TRANSIENT_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504, 529})
AUTH_STATUS = frozenset({401, 403})


class ProviderKind(str, Enum):
    OPENAI = "openai-compatible"
    ANTHROPIC = "anthropic-compatible"
    GOOGLE = "google-compatible"
    MOCK = "mock"


class ModelSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    provider: ProviderKind
    model_id: str = Field(min_length=1)
    knowledge_cutoff: date | None = None
    max_output_tokens: int = Field(default=config.DEFAULT_STAGE1_MAX_OUTPUT_TOKENS, ge=1)
    stage2_max_output_tokens: int = Field(default=config.DEFAULT_STAGE2_MAX_OUTPUT_TOKENS, ge=1)
    base_url: str | None = None
    api_key_env: str | None = None
    display_name: str | None = None
    requests_per_minute: int | None = Field(default=None, ge=1)

    @field_validator("model_id")
    @classmethod
    def _strip_model_id(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("model_id must not be blank")
        return value.strip()

    @property
    def label(self) -> str:
        return self.display_name or self.model_id

    @classmethod
    def from_alias(cls, alias: str, **overrides) -> "ModelSpec":
        if alias not in config.MODEL_MATRIX:
            raise ConfigError(f"Unknown model alias {alias!r}; known: {', '.join(sorted(config.MODEL_MATRIX))}")
        return cls(**{**config.MODEL_MATRIX[alias], **overrides})


def resolve_model(entry: "str | dict | ModelSpec") -> ModelSpec:
    """Accepts a matrix alias, a full ModelSpec mapping, or {alias: ..., overrides...}."""
    if isinstance(entry, ModelSpec):
        return entry
    if isinstance(entry, str):
        return ModelSpec.from_alias(entry)
    entry = dict(entry)
    alias = entry.pop("alias", None)
    return ModelSpec.from_alias(alias, **entry) if alias else ModelSpec(**entry)


class CompletionRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: ModelSpec
    prompt: RenderedPrompt
    temperature: float = config.TEMPERATURE
    request_tag: str = ""
    max_output_tokens: int | None = Field(default=None, ge=1)

    @field_validator("temperature")
    @classmethod
    def _deterministic_only(cls, value: float) -> float:
        if value != 0.0:
            raise ValueError(f"temperature must be 0.0, got {value}")
        return value

    @property
    def token_limit(self) -> int:
        if self.max_output_tokens is not None:
            return self.max_output_tokens
        if self.prompt.stage.value == "stage2":
            return self.model.stage2_max_output_tokens
        return self.model.max_output_tokens


class CompletionResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    latency_ms: int = Field(ge=0)
    from_cache: bool
    attempts: int = Field(ge=1)
    truncated: bool = False


class ProviderReply(BaseModel):
    text: str
    truncated: bool = False


# --- Response cache ---

class ResponseCache:
    """Content-addressed directory of JSON files: <root>/<model_id>/<hash[:2]>/<hash>.json"""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path_for(self, model_id: str, content_hash: str) -> Path:
        safe_model = model_id.replace("/", "__").replace("\\", "__")
        return self.root / safe_model / content_hash[:2] / f"{content_hash}.json"

    def get(self, model_id: str, content_hash: str) -> dict | None:
        path = self.path_for(model_id, content_hash)
        try:
            with open(path, "r", encoding="utf-8") as f:
                entry = json.load(f)
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            logger.warning("Ignoring corrupt cache entry %s: %s", path, e)
            return None
        return entry if isinstance(entry, dict) and isinstance(entry.get("text"), str) else None

    def put(self, model_id: str, content_hash: str, entry: dict) -> Path:
        path = self.path_for(model_id, content_hash)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_json_atomic(path, entry)
        return path

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*/*/*.json")) if self.root.exists() else 0


def write_json_atomic(path: Path, payload, indent: int | None = 2) -> None:
    """Writes to a temp file in the same directory, then renames over the target."""
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=indent, sort_keys=True)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


# --- Rate limiting ---

class RateLimiter:
    """Spaces calls to one provider at least 60/rpm seconds apart, shared across workers."""

    def __init__(self, requests_per_minute: int | None, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], Awaitable] = asyncio.sleep):
        self.min_interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = asyncio.Lock()
        self._next_slot = 0.0

    async def acquire(self) -> None:
        if not self.min_interval:
            return
        async with self._lock:
            now = self._clock()
            wait = self._next_slot - now
            if wait > 0:
                await self._sleep(wait)
                now += wait
            self._next_slot = now + self.min_interval


# --- Providers ---

class Provider:
    """Single user-message chat call; subclasses map provider errors onto the gateway hierarchy."""
    kind: ProviderKind

    async def generate(self, spec: ModelSpec, prompt: str, max_output_tokens: int, temperature: float) -> ProviderReply:
        raise NotImplementedError

    async def close(self) -> None:
        return None


def _raise_for_status(status: int, body: str, provider: str) -> None:
    if status < 400:
        return
    message = f"{provider} returned HTTP {status}: {body[:300]}"
    if status in AUTH_STATUS:
        raise AuthError(message, status_code=status)
    if status in TRANSIENT_STATUS or status >= 500:
        raise TransientProviderError(message, status_code=status)
    raise ProviderError(message, status_code=status)


class _HttpProvider(Provider):
    default_base_url = ""

    def __init__(self, api_key: str | None = None, base_url: str | None = None,
                 timeout_seconds: float = config.REQUEST_TIMEOUT_SECONDS):
        self.api_key = api_key
        self.base_url = (base_url or self.default_base_url).rstrip("/")
        self.timeout = aiohttp.ClientTimeout(total=timeout_seconds)
        self._session: aiohttp.ClientSession | None = None

    def _credential(self, spec: ModelSpec) -> str:
        key = self.api_key or config.credential_for(spec.provider.value, spec.api_key_env)
        if not key:
            env = spec.api_key_env or " or ".join(config.CREDENTIAL_ENV.get(spec.provider.value, ()))
            raise ConfigError(f"No credentials for {spec.model_id}; set {env}")
        return key

    async def _post(self, url: str, headers: dict, payload: dict) -> dict:
        if self._session is None or self._session.closed:
            self._session = aiohttp.ClientSession(timeout=self.timeout)
        try:
            async with self._session.post(url, headers=headers, json=payload) as response:
                body = await response.text()
                _raise_for_status(response.status, body, self.kind.value)
        except asyncio.TimeoutError as e:
            raise TransientProviderError(f"{self.kind.value} request timed out") from e
        except aiohttp.ClientConnectionError as e:
            raise TransientProviderError(f"{self.kind.value} connection failed: {e}") from e
        except aiohttp.ClientError as e:
            raise TransientProviderError(f"{self.kind.value} transport error: {e}") from e
        try:
            return json.loads(body)
        except json.JSONDecodeError as e:
            raise TransientProviderError(f"{self.kind.value} returned a non-JSON body") from e

    async def close(self) -> None:
        if self._session is not None and not self._session.closed:
            await self._session.close()


class OpenAICompatibleProvider(_HttpProvider):
    kind = ProviderKind.OPENAI
    default_base_url = config.OPENAI_BASE_URL

    async def generate(self, spec, prompt, max_output_tokens, temperature):
        base = (spec.base_url or self.base_url).rstrip("/")
        data = await self._post(
            f"{base}/chat/completions",
            {"Authorization": f"Bearer {self._credential(spec)}"},
            {
                "model": spec.model_id,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": temperature,
                "max_tokens": max_output_tokens,
            },
        )
        try:
            choice = data["choices"][0]
        except (KeyError, IndexError, TypeError) as e:
            raise ProviderError(f"Malformed chat completion for {spec.model_id}") from e
        text = (choice.get("message") or {}).get("content") or ""
        return ProviderReply(text=text, truncated=choice.get("finish_reason") == "length")


class AnthropicCompatibleProvider(_HttpProvider):
    kind = ProviderKind.ANTHROPIC
    default_base_url = config.ANTHROPIC_BASE_URL

    async def generate(self, spec, prompt, max_output_tokens, temperature):
        base = (spec.base_url or self.base_url).rstrip("/")
        data = await self._post(
            f"{base}/v1/messages",
            {"x-api-key": self._credential(spec), "anthropic-version": config.ANTHROPIC_VERSION},
            {
                "model": spec.model_id,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": temperature,
                "max_tokens": max_output_tokens,
            },
        )
        blocks = data.get("content") if isinstance(data, dict) else None
        if not isinstance(blocks, list):
            raise ProviderError(f"Malformed message response for {spec.model_id}")
        text = "".join(b.get("text", "") for b in blocks if isinstance(b, dict) and b.get("type") == "text")
        return ProviderReply(text=text, truncated=data.get("stop_reason") == "max_tokens")


class GoogleProvider(Provider):
    kind = ProviderKind.GOOGLE

    def __init__(self, api_key: str | None = None):
        self.api_key = api_key
        self._models: dict[str, object] = {}

    def _model(self, spec: ModelSpec):
        import google.generativeai as genai

        if spec.model_id not in self._models:
            key = self.api_key or config.credential_for(spec.provider.value, spec.api_key_env)
            if not key:
                raise ConfigError(f"No credentials for {spec.model_id}; set GEMINI_API_KEY or LLM_API_KEY")
            genai.configure(api_key=key)
            self._models[spec.model_id] = genai.GenerativeModel(spec.model_id)
        return self._models[spec.model_id]

    @staticmethod
    def _safety_settings() -> dict:
        from google.generativeai.types import HarmBlockThreshold, HarmCategory

        # Disinformation samples routinely trip the default filters
        return {
            HarmCategory.HARM_CATEGORY_HARASSMENT: HarmBlockThreshold.BLOCK_NONE,
            HarmCategory.HARM_CATEGORY_HATE_SPEECH: HarmBlockThreshold.BLOCK_NONE,
            HarmCategory.HARM_CATEGORY_SEXUALLY_EXPLICIT: HarmBlockThreshold.BLOCK_NONE,
            HarmCategory.HARM_CATEGORY_DANGEROUS_CONTENT: HarmBlockThreshold.BLOCK_NONE,
        }

    async def generate(self, spec, prompt, max_output_tokens, temperature):
        from google.api_core import exceptions as google_exceptions

        model = self._model(spec)
        try:
            response = await model.generate_content_async(
                prompt,
                generation_config={"temperature": temperature, "max_output_tokens": max_output_tokens},
                safety_settings=self._safety_settings(),
            )
        except (google_exceptions.PermissionDenied, google_exceptions.Unauthenticated) as e:
            raise AuthError(str(e), status_code=getattr(e, "code", None)) from e
        except (google_exceptions.ResourceExhausted, google_exceptions.ServiceUnavailable,
                google_exceptions.InternalServerError, google_exceptions.DeadlineExceeded) as e:
            raise TransientProviderError(str(e), status_code=getattr(e, "code", None)) from e
        except google_exceptions.GoogleAPIError as e:
            raise ProviderError(str(e), status_code=getattr(e, "code", None)) from e

        try:
            text = response.text
        except ValueError:
            logger.warning("Gemini response for %s was blocked or empty; feedback: %s",
                           spec.model_id, getattr(response, "prompt_feedback", "n/a"))
            text = ""
        truncated = False
        candidates = getattr(response, "candidates", None) or []
        if candidates:
            reason = getattr(candidates[0], "finish_reason", None)
            truncated = getattr(reason, "name", str(reason)) == "MAX_TOKENS"
        return ProviderReply(text=text, truncated=truncated)


class MockProvider(Provider):
    """Deterministic offline backend: the first rule whose pattern matches the prompt answers it."""
    kind = ProviderKind.MOCK

    def __init__(self, rules: list[tuple["regex.Pattern", str]], fallback: str):
        self.rules = rules
        self.fallback = fallback

    def respond(self, prompt: str) -> str:
        for pattern, response in self.rules:
            if pattern.search(prompt):
                return response
        return self.fallback

    async def generate(self, spec, prompt, max_output_tokens, temperature):
        return ProviderReply(text=self.respond(prompt))


def mock_rulebook(rules: list[tuple[str, str]], fallback: str = '{"disinformation": "No"}') -> MockProvider:
    compiled = []
    for pattern, response in rules:
        try:
            compiled.append((regex.compile(pattern), response))
        except regex.error as e:
            raise InvalidPattern(f"Invalid mock rule pattern {pattern!r}: {e}") from e
    return MockProvider(compiled, fallback)


def load_rulebook(path: str | os.PathLike | None = None) -> MockProvider:
    """
    Reads a YAML rulebook:
        fallback: <text>
        rules:
          - pattern: <regex>      # or  contains: <literal>
            response: <text>
    """
    path = Path(path or config.DEFAULT_MOCK_RULEBOOK)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"Mock rulebook not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"Mock rulebook {path} is not valid YAML: {e}") from e

    rules = []
    for i, rule in enumerate(data.get("rules") or []):
        if not isinstance(rule, dict) or "response" not in rule:
            raise ConfigError(f"Rule {i} in {path} needs a response")
        if "pattern" in rule:
            pattern = str(rule["pattern"])
        elif "contains" in rule:
            pattern = regex.escape(str(rule["contains"]))
        else:
            raise ConfigError(f"Rule {i} in {path} needs a pattern or contains")
        rules.append((pattern, str(rule["response"])))
    return mock_rulebook(rules, str(data.get("fallback", '{"disinformation": "No"}')))


_PROVIDER_CLASSES = {
    ProviderKind.OPENAI: OpenAICompatibleProvider,
    ProviderKind.ANTHROPIC: AnthropicCompatibleProvider,
    ProviderKind.GOOGLE: GoogleProvider,
}


# --- Gateway ---

class LlmGateway:
    """Cache, budget, rate limits and retries in front of the provider adapters."""

    def __init__(self, cache: ResponseCache | None = None, budget: int = config.DEFAULT_REQUEST_BUDGET,
                 max_retries: int = config.MAX_API_RETRIES, retry_delay: float = config.API_RETRY_DELAY_SECONDS,
                 providers: dict[ProviderKind, Provider] | None = None, mock: MockProvider | None = None,
                 sleep: Callable[[float], Awaitable] = asyncio.sleep):
        self.cache = cache
        self.budget = budget
        self.max_retries = max_retries
        self.retry_delay = retry_delay
        self._sleep = sleep
        self._providers: dict[ProviderKind, Provider] = dict(providers or {})
        if mock is not None:
            self._providers[ProviderKind.MOCK] = mock
        self._limiters: dict[str, RateLimiter] = {}
        self._budget_lock = asyncio.Lock()
        self.provider_calls = 0
        self.stats: Counter = Counter()
        self.call_log: list[str] = []

    def provider_for(self, spec: ModelSpec) -> Provider:
        if spec.provider not in self._providers:
            if spec.provider is ProviderKind.MOCK:
                self._providers[ProviderKind.MOCK] = load_rulebook()
            else:
                self._providers[spec.provider] = _PROVIDER_CLASSES[spec.provider]()
        return self._providers[spec.provider]

    def _limiter(self, spec: ModelSpec) -> RateLimiter:
        key = f"{spec.provider.value}|{spec.base_url or ''}"
        if key not in self._limiters:
            self._limiters[key] = RateLimiter(spec.requests_per_minute, sleep=self._sleep)
        return self._limiters[key]

    async def _reserve_budget(self) -> None:
        async with self._budget_lock:
            if self.provider_calls >= self.budget:
                raise BudgetExceeded(f"Request budget of {self.budget} provider calls exhausted")
            self.provider_calls += 1

    async def complete(self, req: CompletionRequest, bypass_cache: bool = False) -> CompletionResult:
        spec, prompt = req.model, req.prompt
        if self.cache is not None and not bypass_cache:
            cached = self.cache.get(spec.model_id, prompt.content_hash)
            if cached is not None:
                self.stats["cache_hits"] += 1
                return CompletionResult(text=cached["text"], latency_ms=int(cached.get("latency_ms", 0)),
                                        from_cache=True, attempts=1, truncated=bool(cached.get("truncated", False)))

        provider = self.provider_for(spec)
        await self._reserve_budget()
        self.stats["provider_calls"] += 1
        self.stats[f"calls:{prompt.stage.value}"] += 1
        self.call_log.append(req.request_tag or prompt.content_hash)

        reply, attempts, latency_ms = await self._call_with_retries(provider, req)
        if reply.truncated:
            logger.warning("Response truncated at %d tokens for %s (%s)", req.token_limit, spec.model_id, req.request_tag)
        if self.cache is not None:
            self.cache.put(spec.model_id, prompt.content_hash, {
                "request_summary": {
                    "model_id": spec.model_id,
                    "provider": spec.provider.value,
                    "stage": prompt.stage.value,
                    "variant": prompt.cache_scope,
                    "max_output_tokens": req.token_limit,
                    "temperature": req.temperature,
                },
                "text": reply.text,
                "latency_ms": latency_ms,
                "truncated": reply.truncated,
                "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            })
        return CompletionResult(text=reply.text, latency_ms=latency_ms, from_cache=False,
                                attempts=attempts, truncated=reply.truncated)

    async def _call_with_retries(self, provider: Provider, req: CompletionRequest) -> tuple[ProviderReply, int, int]:
        spec = req.model
        limiter = self._limiter(spec)
        for attempt in range(1, self.max_retries + 2):
            await limiter.acquire()
            started = time.perf_counter()
            try:
                logger.debug("Attempt %d: %s %s", attempt, spec.model_id, req.request_tag)
                reply = await provider.generate(spec, req.prompt.text, req.token_limit, req.temperature)
                return reply, attempt, int((time.perf_counter() - started) * 1000)
            except TransientProviderError as e:
                if attempt > self.max_retries:
                    raise ProviderError(f"{spec.model_id} failed after {attempt} attempts: {e}",
                                        status_code=e.status_code) from e
                wait_time = self.retry_delay * (2 ** (attempt - 1))
                self.stats["retries"] += 1
                logger.warning("Retryable error for %s (attempt %d/%d): %s. Retrying in %ss",
                               spec.model_id, attempt, self.max_retries + 1, e, wait_time)
                await self._sleep(wait_time)
        raise AssertionError("unreachable")

    async def close(self) -> None:
        for provider in self._providers.values():
            await provider.close()

    async def __aenter__(self) -> "LlmGateway":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.close()
