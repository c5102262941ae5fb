"""Uniform access to chat-completion and embedding backends.

Two backends: a remote HTTP backend speaking the de-facto JSON
chat-completion protocol ({model, messages, temperature} in, first choice's
message content out), and a deterministic mock backend (prompt-hash fixture
map plus a seeded token-bag embedder) that makes the whole pipeline
bit-reproducible offline.

Completions are cached on disk in an append-only JSONL log keyed by
hash(model, rendered prompt, decoding params), so long annotation runs can
resume without re-spending judge calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, GatewayError, OutputParseError, OutputSchemaError
from .parsing import parse_structured_output
from .prompts import DEFAULT_VARIABLES, get_template

log = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class CompletionRequest:
    template_id: str
    variables: dict = field(default_factory=dict)
    temperature: float = 0.0
    effort_hint: Optional[str] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")


@dataclass
class CompletionResult:
    text: str
    cached: bool
    model: str


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def cache_key(model: str, prompt: str, temperature: float, effort: Optional[str]) -> str:
    payload = "\x1f".join([model, prompt, repr(float(temperature)), effort or ""])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def normalize_embedding(vec: np.ndarray) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm < 1e-12:
        raise GatewayError("embedding backend returned a zero vector")
    return arr / norm


class DiskCache:
    """Append-only completion cache; loaded fully into memory on open."""

    def __init__(self, path: Optional[str | Path]):
        self.path = Path(path) if path else None
        self._mem: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with self.path.open(encoding="utf-8") as fp:
                for line in fp:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        entry = json.loads(line)
                        self._mem[entry["key"]] = entry["text"]
                    except (json.JSONDecodeError, KeyError):
                        log.warning("skipping corrupt cache line in %s", self.path)

    def get(self, key: str) -> Optional[str]:
        with self._lock:
            return self._mem.get(key)

    def put(self, key: str, text: str) -> None:
        with self._lock:
            if key in self._mem:
                return
            self._mem[key] = text
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fp:
                    fp.write(json.dumps({"key": key, "text": text}) + "\n")


class MockBackend:
    """Offline backend: fixture map for completions, hashed token-bag embeddings.

    The embedder sums a deterministic seeded vector per token, so texts
    sharing words land near each other, enough structure for merge logic to
    act on, and identical texts always embed identically.
    """

    def __init__(self, fixtures: Optional[dict[str, str]] = None, embedding_dim: int = 32):
        self.fixtures = fixtures or {}
        self.embedding_dim = int(embedding_dim)
        self._token_cache: dict[str, np.ndarray] = {}

    @classmethod
    def from_fixture_file(cls, path: str | Path, embedding_dim: int = 32) -> "MockBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ConfigError(f"fixture file {path} must be a JSON object")
        return cls(fixtures=data, embedding_dim=embedding_dim)

    def complete(self, prompt: str, request: CompletionRequest, model: str) -> str:
        key = prompt_hash(prompt)
        if key not in self.fixtures:
            raise GatewayError(
                f"mock backend has no fixture for prompt hash {key[:12]}… "
                f"(template={request.template_id}, prompt starts: {prompt[:80]!r})"
            )
        return self.fixtures[key]

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            seed = int.from_bytes(
                hashlib.sha256(token.encode("utf-8")).digest()[:8], "big"
            )
            vec = np.random.default_rng(seed).standard_normal(self.embedding_dim)
            self._token_cache[token] = vec
        return vec

    def embed(self, texts: Sequence[str], model: str) -> np.ndarray:
        out = np.zeros((len(texts), self.embedding_dim), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = text.lower().split()
            acc = np.zeros(self.embedding_dim, dtype=np.float64)
            for tok in tokens:
                acc += self._token_vector(tok)
            if float(np.linalg.norm(acc)) < 1e-12:
                acc = self._token_vector(f"\x00whole:{text}")
            out[i] = acc
        return out


class RemoteBackend:
    """HTTP JSON backend compatible with hosted and local inference servers."""

    def __init__(
        self,
        base_url: str,
        api_key: Optional[str] = None,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
    ):
        if not base_url:
            raise ConfigError("remote backend requires base_url")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        import requests

        last_err: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    f"{self.base_url}{path}",
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout,
                )
                if resp.status_code >= 500:
                    last_err = GatewayError(f"server error {resp.status_code}")
                    continue
                if resp.status_code != 200:
                    raise GatewayError(
                        f"backend rejected request ({resp.status_code}): {resp.text[:200]}"
                    )
                return resp.json()
            except requests.RequestException as exc:
                last_err = exc
        raise GatewayError(f"transport failure after {self.max_attempts} attempts: {last_err}")

    def complete(self, prompt: str, request: CompletionRequest, model: str) -> str:
        payload = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
        }
        if request.effort_hint:
            payload["reasoning_effort"] = request.effort_hint
        data = self._post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise GatewayError(f"malformed completion response: {str(data)[:200]}")
        return content

    def embed(self, texts: Sequence[str], model: str) -> np.ndarray:
        data = self._post("/embeddings", {"model": model, "input": list(texts)})
        try:
            rows = [item["embedding"] for item in data["data"]]
        except (KeyError, TypeError):
            raise GatewayError(f"malformed embedding response: {str(data)[:200]}")
        return np.asarray(rows, dtype=np.float64)


@dataclass
class GatewayConfig:
    backend: str = "mock"
    base_url: str = ""
    api_key_env: str = "TAXALIGN_API_KEY"
    models: dict = field(default_factory=dict)
    temperatures: dict = field(default_factory=dict)
    effort_hints: dict = field(default_factory=dict)
    concurrency: int = 4
    cache_path: Optional[str] = None
    fixtures_path: Optional[str] = None
    embedding_dim: int = 32
    embedding_model: str = "mock-embedder"
    subject: str = DEFAULT_VARIABLES["subject"]
    n_words: int = int(DEFAULT_VARIABLES["n"])
    m_words: int = int(DEFAULT_VARIABLES["m"])

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "GatewayConfig":
        cfg = cls(
            backend=d.get("backend", "mock"),
            base_url=d.get("base_url", ""),
            api_key_env=d.get("api_key_env", "TAXALIGN_API_KEY"),
            models=dict(d.get("models", {})),
            temperatures=dict(d.get("temperatures", {})),
            effort_hints=dict(d.get("effort_hints", {})),
            concurrency=int(d.get("concurrency", 4)),
            cache_path=d.get("cache_path"),
            fixtures_path=d.get("fixtures_path"),
            embedding_dim=int(d.get("embedding_dim", 32)),
            embedding_model=d.get("embedding_model", "mock-embedder"),
            subject=d.get("subject", DEFAULT_VARIABLES["subject"]),
            n_words=int(d.get("n", DEFAULT_VARIABLES["n"])),
            m_words=int(d.get("m", DEFAULT_VARIABLES["m"])),
        )
        if cfg.backend not in ("mock", "remote"):
            raise ConfigError(f"backend must be 'mock' or 'remote', got {cfg.backend!r}")
        if cfg.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if base_dir is not None:
            for attr in ("cache_path", "fixtures_path"):
                value = getattr(cfg, attr)
                if value and not Path(value).is_absolute():
                    setattr(cfg, attr, str(base_dir / value))
        return cfg


class ModelGateway:
    """Renders prompts, calls the configured backend, caches, and parses."""

    def __init__(self, config: GatewayConfig, backend=None):
        self.config = config
        self.cache = DiskCache(config.cache_path)
        self._hits = 0
        self._misses = 0
        if backend is not None:
            self.backend = backend
        elif config.backend == "mock":
            fixtures = {}
            if config.fixtures_path:
                fixtures = json.loads(Path(config.fixtures_path).read_text(encoding="utf-8"))
            self.backend = MockBackend(fixtures=fixtures, embedding_dim=config.embedding_dim)
        elif config.backend == "remote":
            import os

            api_key = os.environ.get(config.api_key_env)
            self.backend = RemoteBackend(config.base_url, api_key=api_key)
        else:
            raise ConfigError(f"unconfigured backend {config.backend!r}")

    @property
    def concurrency(self) -> int:
        return self.config.concurrency

    def model_for(self, template_id: str) -> str:
        return self.config.models.get(template_id, self.config.models.get("default", "mock-judge"))

    def request(self, template_id: str, **variables) -> CompletionRequest:
        """Build a request with per-stage decoding defaults from config."""
        merged = {
            "subject": self.config.subject,
            "n": str(self.config.n_words),
            "m": str(self.config.m_words),
        }
        merged.update({k: str(v) for k, v in variables.items()})
        return CompletionRequest(
            template_id=template_id,
            variables=merged,
            temperature=float(self.config.temperatures.get(template_id, 0.0)),
            effort_hint=self.config.effort_hints.get(template_id),
        )

    def render_prompt(self, req: CompletionRequest) -> str:
        return get_template(req.template_id).render(req.variables)

    def cache_hit_rate(self) -> float:
        total = self._hits + self._misses
        return round(self._hits / total, 4) if total else 0.0

    def _complete_prompt(self, prompt: str, req: CompletionRequest) -> CompletionResult:
        model = self.model_for(req.template_id)
        key = cache_key(model, prompt, req.temperature, req.effort_hint)
        hit = self.cache.get(key)
        if hit is not None:
            self._hits += 1
            return CompletionResult(text=hit, cached=True, model=model)
        text = self.backend.complete(prompt, req, model)
        if not isinstance(text, str) or not text.strip():
            raise GatewayError(
                f"backend returned empty content for template {req.template_id}"
            )
        self.cache.put(key, text)
        self._misses += 1
        return CompletionResult(text=text, cached=False, model=model)

    def complete(self, req: CompletionRequest) -> CompletionResult:
        return self._complete_prompt(self.render_prompt(req), req)

    def complete_structured(self, req: CompletionRequest, schema: str, validate=None):
        """Complete and parse; on a parse/schema error, re-ask once with the
        error appended, then give up (raising the second error).

        `validate`, when given, runs on the parsed value and may raise
        OutputSchemaError to trigger the same single re-ask (used for
        checks that need context the parser lacks, e.g. taxonomy codes).
        """

        def attempt(prompt: str):
            result = self._complete_prompt(prompt, req)
            value = parse_structured_output(result.text, schema)
            if validate is not None:
                validate(value)
            return value

        prompt = self.render_prompt(req)
        try:
            return attempt(prompt)
        except (OutputParseError, OutputSchemaError) as first_err:
            retry_prompt = (
                f"{prompt}\n\nYour previous reply was rejected: {first_err}. "
                "Reply again following the required output format exactly."
            )
            log.debug("re-asking after schema error: %s", first_err)
            return attempt(retry_prompt)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        for t in texts:
            if not isinstance(t, str) or not t.strip():
                raise GatewayError("embed_batch requires nonempty strings")
        rows = self.backend.embed(list(texts), self.config.embedding_model)
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(texts):
            raise GatewayError("embedding batch shape mismatch")
        return [normalize_embedding(rows[i]) for i in range(rows.shape[0])]
