"""Run configuration dataclasses and config-file loading."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class SelectionPolicy:
    """Few-shot selection knobs: how many examples and how they are mixed."""

    max_examples: int = 6
    mix: float = 0.25  # minimum fraction of contrastive-error examples
    precision_weight: float = 1.0  # exponent applied to utility at selection time

    def validate(self) -> None:
        if self.max_examples < 0:
            raise ValueError("max_examples must be >= 0")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mix must be within [0, 1]")
        if self.precision_weight <= 0:
            raise ValueError("precision_weight must be > 0")


@dataclass(frozen=True)
class RunConfig:
    """One annotation run's tunables. Defaults follow the shipped presets."""

    temperature: float = 0.3
    max_output_tokens: int = 1024
    max_prompt_tokens: int = 8000
    max_turns: int = 120  # batch size in turns
    context_overlap: int = 8  # carried read-only turns between batches
    retrieval_k: int = 6
    pool_factor: int = 4  # candidate pool = pool_factor * retrieval_k
    chunk_window: int = 250  # whitespace tokens per codebook chunk
    chunk_stride: int = 125
    mmr_lambda: float = 0.5
    parallelism: int = 4
    embedding_dimension: int = 384
    rare_label_threshold: int = 3
    fewshot: SelectionPolicy = field(default_factory=SelectionPolicy)

    def validate(self) -> None:
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be within [0, 1]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be > 0")
        if self.max_prompt_tokens <= 0:
            raise ValueError("max_prompt_tokens must be > 0")
        if self.max_turns <= 0:
            raise ValueError("max_turns must be > 0")
        if self.context_overlap < 0:
            raise ValueError("context_overlap must be >= 0")
        if self.retrieval_k <= 0:
            raise ValueError("retrieval_k must be > 0")
        if self.pool_factor < 1:
            raise ValueError("pool_factor must be >= 1")
        if self.chunk_window <= 0 or self.chunk_stride <= 0:
            raise ValueError("chunk window and stride must be > 0")
        if self.chunk_stride > self.chunk_window:
            raise ValueError("chunk_stride must be <= chunk_window")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ValueError("mmr_lambda must be within [0, 1]")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.embedding_dimension <= 0:
            raise ValueError("embedding_dimension must be > 0")
        if self.rare_label_threshold < 0:
            raise ValueError("rare_label_threshold must be >= 0")
        self.fewshot.validate()

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        data = dict(data)
        fewshot = data.pop("fewshot", None)
        policy = SelectionPolicy(**fewshot) if fewshot else SelectionPolicy()
        allowed = {f for f in cls.__dataclass_fields__ if f != "fewshot"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(fewshot=policy, **data)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class BackendSpec:
    """How to construct one backend: a kind plus kind-specific options."""

    kind: str
    options: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AppConfig:
    """Service/CLI level configuration: backends, storage, run defaults."""

    data_dir: str = "mosaic-data"
    chat: BackendSpec | None = None
    embedding: BackendSpec = field(
        default_factory=lambda: BackendSpec("hash", {"dimension": 384})
    )
    rerank: BackendSpec = field(default_factory=lambda: BackendSpec("passthrough"))
    run: RunConfig = field(default_factory=RunConfig)
    api_token_env: str = "MOSAIC_API_TOKEN"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AppConfig":
        def spec(value: Any) -> BackendSpec | None:
            if value is None:
                return None
            if isinstance(value, dict):
                kind = value.get("kind")
                if not isinstance(kind, str):
                    raise ValueError("backend spec requires a string 'kind'")
                options = {k: v for k, v in value.items() if k != "kind"}
                return BackendSpec(kind, options)
            raise ValueError("backend spec must be an object")

        kwargs: dict[str, Any] = {}
        if "data_dir" in data:
            kwargs["data_dir"] = str(data["data_dir"])
        if "chat" in data:
            kwargs["chat"] = spec(data["chat"])
        if "embedding" in data and data["embedding"] is not None:
            kwargs["embedding"] = spec(data["embedding"])
        if "rerank" in data and data["rerank"] is not None:
            kwargs["rerank"] = spec(data["rerank"])
        if "run" in data:
            kwargs["run"] = RunConfig.from_dict(data["run"])
        if "api_token_env" in data:
            kwargs["api_token_env"] = str(data["api_token_env"])
        unknown = set(data) - {"data_dir", "chat", "embedding", "rerank", "run", "api_token_env"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)


def load_app_config(path: str | Path | None = None, env: dict[str, str] | None = None) -> AppConfig:
    """Load config from a JSON file, then apply environment overrides.

    Recognized overrides: MOSAIC_DATA_DIR, MOSAIC_CHAT_URL, MOSAIC_CHAT_MODEL,
    MOSAIC_EMBED_URL, MOSAIC_RERANK_URL.
    """
    env = dict(os.environ if env is None else env)
    data: dict[str, Any] = {}
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        data = json.loads(raw) if raw.strip() else {}
        if not isinstance(data, dict):
            raise ValueError("config file must contain a JSON object")
    cfg = AppConfig.from_dict(data)

    if env.get("MOSAIC_DATA_DIR"):
        cfg = replace_field(cfg, data_dir=env["MOSAIC_DATA_DIR"])
    if env.get("MOSAIC_CHAT_URL"):
        options = dict(cfg.chat.options) if cfg.chat else {}
        options["url"] = env["MOSAIC_CHAT_URL"]
        if env.get("MOSAIC_CHAT_MODEL"):
            options["model"] = env["MOSAIC_CHAT_MODEL"]
        cfg = replace_field(cfg, chat=BackendSpec("http", options))
    if env.get("MOSAIC_EMBED_URL"):
        options = dict(cfg.embedding.options)
        options["url"] = env["MOSAIC_EMBED_URL"]
        cfg = replace_field(cfg, embedding=BackendSpec("http", options))
    if env.get("MOSAIC_RERANK_URL"):
        cfg = replace_field(cfg, rerank=BackendSpec("http", {"url": env["MOSAIC_RERANK_URL"]}))
    return cfg


def replace_field(cfg: AppConfig, **changes: Any) -> AppConfig:
    from dataclasses import replace

    return replace(cfg, **changes)
