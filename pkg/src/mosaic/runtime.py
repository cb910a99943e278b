"""Wiring: build backends and orchestrators from application config."""
from __future__ import annotations

import json
import logging
from pathlib import Path

from .backends import (
    ChatBackend,
    EmbeddingBackend,
    GoldReplayChatBackend,
    HashEmbeddingBackend,
    HttpChatBackend,
    HttpEmbeddingBackend,
    HttpRerankBackend,
    NullChatBackend,
    RerankBackend,
    ScriptedChatBackend,
)
from .config import AppConfig, BackendSpec, RunConfig
from .library import ExampleLibrary
from .orchestrator import Orchestrator

logger = logging.getLogger(__name__)


def build_chat_backend(spec: BackendSpec | None) -> ChatBackend | None:
    if spec is None:
        return None
    if spec.kind == "http":
        return HttpChatBackend(
            url=spec.options["url"],
            model=spec.options.get("model", "default"),
            token_env=spec.options.get("token_env", "MOSAIC_CHAT_TOKEN"),
            timeout=float(spec.options.get("timeout", 60.0)),
            retries=int(spec.options.get("retries", 1)),
        )
    if spec.kind == "scripted":
        script = spec.options.get("script")
        if script is None and "fixture" in spec.options:
            script = json.loads(Path(spec.options["fixture"]).read_text(encoding="utf-8"))
        if not isinstance(script, dict):
            raise ValueError("scripted chat backend needs a 'script' map or 'fixture' path")
        return ScriptedChatBackend(script={str(k): str(v) for k, v in script.items()})
    if spec.kind == "null":
        return NullChatBackend()
    raise ValueError(f"unknown chat backend kind {spec.kind!r}")


def build_embedding_backend(spec: BackendSpec) -> EmbeddingBackend:
    if spec.kind == "hash":
        return HashEmbeddingBackend(
            dimension=int(spec.options.get("dimension", 384)),
            seed=int(spec.options.get("seed", 0)),
        )
    if spec.kind == "http":
        return HttpEmbeddingBackend(
            url=spec.options["url"],
            dimension=int(spec.options.get("dimension", 384)),
            token_env=spec.options.get("token_env", "MOSAIC_EMBED_TOKEN"),
            timeout=float(spec.options.get("timeout", 30.0)),
            retries=int(spec.options.get("retries", 1)),
        )
    raise ValueError(f"unknown embedding backend kind {spec.kind!r}")


def build_rerank_backend(spec: BackendSpec) -> RerankBackend | None:
    if spec.kind == "passthrough":
        return None
    if spec.kind == "http":
        return HttpRerankBackend(
            url=spec.options["url"],
            token_env=spec.options.get("token_env", "MOSAIC_RERANK_TOKEN"),
            timeout=float(spec.options.get("timeout", 30.0)),
            retries=int(spec.options.get("retries", 1)),
        )
    raise ValueError(f"unknown rerank backend kind {spec.kind!r}")


def overlay_codebooks_dir(cfg: AppConfig) -> Path:
    return Path(cfg.data_dir) / "codebooks"


def load_overlay_codebooks(cfg: AppConfig) -> dict[str, str]:
    directory = overlay_codebooks_dir(cfg)
    if not directory.is_dir():
        return {}
    docs: dict[str, str] = {}
    for path in sorted(directory.glob("*.txt")):
        docs[path.stem] = path.read_text(encoding="utf-8")
    return docs


def save_overlay_codebook(cfg: AppConfig, name: str, doc: str) -> Path:
    directory = overlay_codebooks_dir(cfg)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{name}.txt"
    path.write_text(doc, encoding="utf-8")
    return path


def library_snapshot_path(cfg: AppConfig) -> Path:
    return Path(cfg.data_dir) / "library.jsonl"


def library_log_path(cfg: AppConfig) -> Path:
    return Path(cfg.data_dir) / "library_log.jsonl"


def build_library(cfg: AppConfig, embedder: EmbeddingBackend) -> ExampleLibrary:
    snapshot = library_snapshot_path(cfg)
    if snapshot.is_file():
        try:
            lib = ExampleLibrary.load_snapshot(
                snapshot, embedder, log_path=library_log_path(cfg)
            )
            logger.info("loaded example library snapshot (%d entries)", len(lib.entries))
            return lib
        except ValueError as exc:
            logger.warning("library snapshot unusable (%s); starting fresh", exc)
    return ExampleLibrary(embedder, log_path=library_log_path(cfg))


def build_orchestrator(
    cfg: AppConfig,
    chat_override: ChatBackend | None = None,
    run_config: RunConfig | None = None,
) -> Orchestrator:
    embedder = build_embedding_backend(cfg.embedding)
    return Orchestrator(
        chat=chat_override if chat_override is not None else build_chat_backend(cfg.chat),
        embedder=embedder,
        reranker=build_rerank_backend(cfg.rerank),
        library=build_library(cfg, embedder),
        run_config=run_config or cfg.run,
        extra_codebooks=load_overlay_codebooks(cfg),
    )


def gold_replay_backend_from_lookup(gold_lookup, flips=None) -> GoldReplayChatBackend:
    return GoldReplayChatBackend(gold=gold_lookup, flips=dict(flips or {}))
