"""Model backends: HTTP clients plus deterministic in-process substitutes.

Wire formats:
  chat      POST {"model", "messages", "temperature", "max_tokens"}
            -> {"choices": [{"message": {"content": str}}]}
  embedding POST {"input": [str, ...], "dimension": int}
            -> {"vectors": [[float, ...], ...]}
  reranker  POST {"query": str, "documents": [str, ...]}
            -> {"scores": [float, ...]}

Bearer-token auth is read from an environment variable per backend.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
import requests

from .errors import BackendUnavailable, DimensionMismatch

# ---------------------------------------------------------------------------
# Chat


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]  # (role, content) pairs
    temperature: float = 0.3
    max_tokens: int = 1024
    model: str = "default"

    def canonical_json(self) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def request_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def joined_text(self) -> str:
        return "\n".join(content for _role, content in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    usage: dict = field(default_factory=dict, compare=False)


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def _auth_headers(token_env: str) -> dict[str, str]:
    token = os.environ.get(token_env, "")
    return {"Authorization": f"Bearer {token}"} if token else {}


def _post_json(
    url: str,
    payload: dict,
    token_env: str,
    timeout: float,
    retries: int,
) -> dict:
    last_error: Exception | None = None
    for _attempt in range(retries + 1):
        try:
            response = requests.post(
                url, json=payload, headers=_auth_headers(token_env), timeout=timeout
            )
        except requests.RequestException as exc:
            last_error = exc
            continue
        if 200 <= response.status_code < 300:
            try:
                body = response.json()
            except ValueError as exc:
                raise BackendUnavailable(f"{url}: non-JSON response") from exc
            if not isinstance(body, dict):
                raise BackendUnavailable(f"{url}: unexpected response shape")
            return body
        if 500 <= response.status_code < 600:
            last_error = BackendUnavailable(f"{url}: HTTP {response.status_code}")
            continue
        raise BackendUnavailable(f"{url}: HTTP {response.status_code}")
    raise BackendUnavailable(f"{url}: {last_error}")


@dataclass
class HttpChatBackend:
    url: str
    model: str = "default"
    token_env: str = "MOSAIC_CHAT_TOKEN"
    timeout: float = 60.0
    retries: int = 1

    @property
    def fingerprint(self) -> str:
        return f"chat-http:{self.url}:{self.model}"

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": self.model if self.model else request.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        body = _post_json(self.url, payload, self.token_env, self.timeout, self.retries)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"{self.url}: malformed chat response") from exc
        if not isinstance(content, str):
            raise BackendUnavailable(f"{self.url}: chat content is not text")
        return ChatResponse(text=content, usage=body.get("usage", {}) or {})


_PAYLOAD_TRANSCRIPT_RE = re.compile(r"^Transcript: (.+)$", re.MULTILINE)
_PAYLOAD_BATCH_RE = re.compile(r"^Batch: (\d+)$", re.MULTILINE)
_PAYLOAD_CODEBOOK_RE = re.compile(r"^Codebook: (\S+) \(version", re.MULTILINE)
_COORD_RE = re.compile(r"\bT(\d+)\.S(\d+)\b")
_VERIFY_MARKER = "=== VERIFY ==="
_ANNOTATE_MARKER = "\nAnnotate:\n"


@dataclass
class ScriptedChatBackend:
    """Replays canned responses from a fixture mapping.

    Keys are tried in order: ``sha256:<request hash>``, then
    ``<codebook>|<transcript>|<batch>`` extracted from the prompt payload,
    then the wildcard key ``"*"``.
    """

    script: dict[str, str]

    @property
    def fingerprint(self) -> str:
        digest = hashlib.sha256(
            json.dumps(self.script, sort_keys=True).encode("utf-8")
        ).hexdigest()[:12]
        return f"chat-scripted:{digest}"

    def complete(self, request: ChatRequest) -> ChatResponse:
        keys = [f"sha256:{request.request_hash()}"]
        text = request.joined_text()
        transcript = _PAYLOAD_TRANSCRIPT_RE.search(text)
        batch = _PAYLOAD_BATCH_RE.search(text)
        codebook = _PAYLOAD_CODEBOOK_RE.search(text)
        if transcript and batch and codebook:
            keys.append(f"{codebook.group(1)}|{transcript.group(1)}|{batch.group(1)}")
        keys.append("*")
        for key in keys:
            if key in self.script:
                return ChatResponse(text=self.script[key])
        raise BackendUnavailable(f"no scripted response for keys {keys[:-1]}")


@dataclass
class NullChatBackend:
    """Returns an empty completion: every sentence is left unlabeled."""

    @property
    def fingerprint(self) -> str:
        return "chat-null"

    def complete(self, request: ChatRequest) -> ChatResponse:
        return ChatResponse(text="")


GoldLookup = dict[tuple[str, str], dict[tuple[int, int], str]]
"""(transcript_id, codebook) -> {(turn, sent): label}; labels exclude None."""


@dataclass
class GoldReplayChatBackend:
    """Answers annotation prompts with the gold labels for the batch.

    Used for deterministic end-to-end runs: the backend reads the transcript
    id, codebook, and sentence coordinates out of the prompt payload and
    emits exactly the gold label lines. ``flips`` overrides individual
    sentences with a different label to inject controlled errors.
    """

    gold: GoldLookup
    flips: dict[tuple[str, str, int, int], str] = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return "chat-gold-replay"

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = request.joined_text()
        transcript = _PAYLOAD_TRANSCRIPT_RE.search(text)
        codebook = _PAYLOAD_CODEBOOK_RE.search(text)
        if transcript is None or codebook is None:
            raise BackendUnavailable("gold replay: prompt payload lacks identifiers")
        tid, cb = transcript.group(1), codebook.group(1)
        labels = dict(self.gold.get((tid, cb), {}))

        if _VERIFY_MARKER in text:
            coords = _COORD_RE.findall(text.split(_VERIFY_MARKER, 1)[1])
            if not coords:
                raise BackendUnavailable("gold replay: verify payload lacks coordinates")
            t, s = int(coords[0][0]), int(coords[0][1])
            label = self.flips_label(tid, cb, t, s, labels)
            return ChatResponse(text=f"T{t}.S{s}: [{label}]")

        if _ANNOTATE_MARKER not in text:
            raise BackendUnavailable("gold replay: prompt payload lacks annotate section")
        section = text.split(_ANNOTATE_MARKER, 1)[1]
        lines: list[str] = []
        for t_str, s_str in _COORD_RE.findall(section):
            t, s = int(t_str), int(s_str)
            label = self.flips_label(tid, cb, t, s, labels)
            if label != "None":
                lines.append(f"T{t}.S{s}: [{label}]")
        return ChatResponse(text="\n".join(lines))

    def flips_label(
        self,
        tid: str,
        cb: str,
        t: int,
        s: int,
        labels: dict[tuple[int, int], str],
    ) -> str:
        flip = self.flips.get((tid, cb, t, s))
        if flip is not None:
            return flip
        return labels.get((t, s), "None")


@dataclass
class FailingChatBackend:
    """Raises on every call; optionally recovers after ``fail_times`` calls."""

    fail_times: int = -1  # -1 means always fail
    response_text: str = ""
    calls: int = 0

    @property
    def fingerprint(self) -> str:
        return "chat-failing"

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        if self.fail_times < 0 or self.calls <= self.fail_times:
            raise BackendUnavailable("chat backend down")
        return ChatResponse(text=self.response_text)


# ---------------------------------------------------------------------------
# Embeddings


class EmbeddingBackend(Protocol):
    dimension: int

    @property
    def fingerprint(self) -> str: ...

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


@dataclass
class HashEmbeddingBackend:
    """Deterministic character n-gram hashing embedder for offline runs.

    Produces unit-norm vectors using cryptographic digests of padded
    character trigrams, so results are identical across platforms and
    processes (no reliance on Python's randomized ``hash``).
    """

    dimension: int = 384
    seed: int = 0
    ngram: int = 3

    @property
    def fingerprint(self) -> str:
        return f"embed-hash:d{self.dimension}:s{self.seed}:n{self.ngram}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, text in enumerate(texts):
            if not text:
                raise ValueError("cannot embed empty text")
            padded = f"\x02{text.lower()}\x03"
            vec = out[row]
            n = self.ngram
            if len(padded) < n:
                padded = padded + "\x03" * (n - len(padded))
            for i in range(len(padded) - n + 1):
                gram = padded[i : i + n]
                digest = hashlib.blake2b(
                    gram.encode("utf-8"), digest_size=8, salt=str(self.seed).encode()[:16]
                ).digest()
                value = int.from_bytes(digest, "little")
                bucket = value % self.dimension
                sign = 1.0 if (value >> 63) & 1 else -1.0
                vec[bucket] += sign
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                vec[0] = 1.0
                norm = 1.0
            vec /= norm
        return out


@dataclass
class HttpEmbeddingBackend:
    url: str
    dimension: int = 384
    token_env: str = "MOSAIC_EMBED_TOKEN"
    timeout: float = 30.0
    retries: int = 1

    @property
    def fingerprint(self) -> str:
        return f"embed-http:{self.url}:d{self.dimension}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        payload = {"input": list(texts), "dimension": self.dimension}
        body = _post_json(self.url, payload, self.token_env, self.timeout, self.retries)
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise BackendUnavailable(f"{self.url}: malformed embedding response")
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != self.dimension:
            raise DimensionMismatch(
                f"expected dimension {self.dimension}, got shape {arr.shape}"
            )
        return arr


# ---------------------------------------------------------------------------
# Reranking


class RerankBackend(Protocol):
    @property
    def fingerprint(self) -> str: ...

    def score(self, query: str, documents: Sequence[str]) -> list[float]: ...


@dataclass
class HttpRerankBackend:
    url: str
    token_env: str = "MOSAIC_RERANK_TOKEN"
    timeout: float = 30.0
    retries: int = 1

    @property
    def fingerprint(self) -> str:
        return f"rerank-http:{self.url}"

    def score(self, query: str, documents: Sequence[str]) -> list[float]:
        payload = {"query": query, "documents": list(documents)}
        body = _post_json(self.url, payload, self.token_env, self.timeout, self.retries)
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(documents):
            raise BackendUnavailable(f"{self.url}: malformed rerank response")
        return [float(s) for s in scores]


@dataclass
class FunctionRerankBackend:
    """Scores documents with a provided function; for tests and demos."""

    fn: Callable[[str, Sequence[str]], list[float]]
    name: str = "function"

    @property
    def fingerprint(self) -> str:
        return f"rerank-fn:{self.name}"

    def score(self, query: str, documents: Sequence[str]) -> list[float]:
        return self.fn(query, documents)
