"""Codebook retrieval: flat cosine index, MMR diversification, reranking.

Search is exact (no approximate structures): relevance is the cosine of
unit-normalized vectors, ties broken by ascending chunk id. Indexes are
immutable snapshots keyed by (codebook, version); an engine swap replaces
the snapshot atomically and invalidates cached results. Queries holding an
old snapshot may finish against it via the pure module functions, but asking
the engine to search a superseded snapshot raises ``StaleIndex``.
"""
from __future__ import annotations

import base64
import json
import logging
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import EmbeddingBackend, RerankBackend
from .codebook import Codebook, RuleChunk
from .errors import (
    BackendUnavailable,
    DimensionMismatch,
    EmptyAfterFilter,
    StaleIndex,
)

logger = logging.getLogger(__name__)


@dataclass
class ScoredChunk:
    chunk: RuleChunk
    relevance: float
    vector: np.ndarray = field(repr=False, compare=False)
    rerank_score: float | None = None


@dataclass(frozen=True)
class VectorIndex:
    key: tuple[str, str]  # (codebook name, codebook version)
    dimension: int
    chunks: tuple[RuleChunk, ...]
    matrix: np.ndarray = field(repr=False, compare=False)  # unit rows, N x d

    def __len__(self) -> int:
        return len(self.chunks)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


def build_index(
    codebook_name: str,
    version: str,
    chunks: Sequence[RuleChunk],
    embedder: EmbeddingBackend,
) -> VectorIndex:
    if not chunks:
        raise ValueError("cannot build an index over zero chunks")
    matrix = np.asarray(embedder.embed([c.text for c in chunks]), dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(chunks):
        raise DimensionMismatch(f"embedder returned shape {matrix.shape}")
    if matrix.shape[1] != embedder.dimension:
        raise DimensionMismatch(
            f"expected dimension {embedder.dimension}, got {matrix.shape[1]}"
        )
    return VectorIndex(
        key=(codebook_name, version),
        dimension=int(matrix.shape[1]),
        chunks=tuple(chunks),
        matrix=_unit_rows(matrix),
    )


def normalize_query(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(vec))
    return vec if norm == 0.0 else vec / norm


def search(index: VectorIndex, query_vec: np.ndarray, k: int) -> list[ScoredChunk]:
    """Exact top-k by cosine relevance; ties broken by ascending chunk id."""
    if k <= 0:
        return []
    q = normalize_query(query_vec)
    if q.shape[0] != index.dimension:
        raise DimensionMismatch(
            f"query dimension {q.shape[0]} != index dimension {index.dimension}"
        )
    sims = index.matrix @ q
    order = sorted(range(len(index)), key=lambda i: (-sims[i], index.chunks[i].chunk_id))
    return [
        ScoredChunk(chunk=index.chunks[i], relevance=float(sims[i]), vector=index.matrix[i])
        for i in order[: min(k, len(index))]
    ]


def mmr_select(
    query_vec: np.ndarray,
    candidates: Sequence[ScoredChunk],
    k: int,
    lam: float,
) -> list[ScoredChunk]:
    """Greedy maximal-marginal-relevance selection.

    The first pick is the highest-relevance candidate; each later pick
    maximizes ``lam * sim(d, query) - (1 - lam) * max_sim(d, selected)``.
    Ties break toward the lower chunk id. ``lam = 1`` reduces to pure
    relevance ranking.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be within [0, 1]")
    if k <= 0 or not candidates:
        return []
    k = min(k, len(candidates))
    vectors = np.stack([c.vector for c in candidates])
    relevance = np.array([c.relevance for c in candidates], dtype=np.float64)
    ids = [c.chunk.chunk_id for c in candidates]

    remaining = list(range(len(candidates)))
    first = min(remaining, key=lambda i: (-relevance[i], ids[i]))
    selected = [first]
    remaining.remove(first)

    while len(selected) < k and remaining:
        selected_vecs = vectors[selected]
        best_i = None
        best_key: tuple[float, int] | None = None
        for i in remaining:
            max_sim = float(np.max(selected_vecs @ vectors[i]))
            score = lam * float(relevance[i]) - (1.0 - lam) * max_sim
            key = (-score, ids[i])
            if best_key is None or key < best_key:
                best_key = key
                best_i = i
        assert best_i is not None
        selected.append(best_i)
        remaining.remove(best_i)

    return [candidates[i] for i in selected]


def rerank(
    query_text: str,
    candidates: Sequence[ScoredChunk],
    backend: RerankBackend | None,
) -> list[ScoredChunk]:
    """Order candidates by reranker score (desc, ties by ascending chunk id).

    With no backend the order is unchanged and the rerank score mirrors
    relevance. A failing backend degrades to that same passthrough with a
    logged warning rather than failing the retrieval.
    """
    if not candidates:
        return []
    if backend is None:
        return [replace(c, rerank_score=c.relevance) for c in candidates]
    try:
        scores = backend.score(query_text, [c.chunk.text for c in candidates])
    except BackendUnavailable as exc:
        logger.warning("reranker unavailable, falling back to retrieval order: %s", exc)
        return [replace(c, rerank_score=c.relevance) for c in candidates]
    scored = [replace(c, rerank_score=float(s)) for c, s in zip(candidates, scores)]
    scored.sort(key=lambda c: (-(c.rerank_score or 0.0), c.chunk.chunk_id))
    return scored


def tag_filter(candidates: Sequence[ScoredChunk], registry: frozenset[str] | set[str]) -> list[ScoredChunk]:
    """Keep chunks whose tag set is non-empty and within the registry."""
    kept = [
        c
        for c in candidates
        if c.chunk.tags and set(c.chunk.tags) <= set(registry)
    ]
    if not kept:
        raise EmptyAfterFilter("no candidates left after tag filtering")
    return kept


def save_index(index: VectorIndex, path: str | Path) -> None:
    """Write a canonical JSON serialization (byte-stable for equal inputs)."""
    entries = []
    for chunk, row in zip(index.chunks, index.matrix):
        entries.append(
            {
                "chunk_id": chunk.chunk_id,
                "text": chunk.text,
                "tags": sorted(chunk.tags),
                "vector": base64.b64encode(np.asarray(row, dtype="<f8").tobytes()).decode(
                    "ascii"
                ),
            }
        )
    entries.sort(key=lambda e: e["chunk_id"])
    doc = {
        "schema": "mosaic-index-v1",
        "codebook": index.key[0],
        "version": index.key[1],
        "dimension": index.dimension,
        "entries": entries,
    }
    Path(path).write_bytes(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    )


def load_index(path: str | Path) -> VectorIndex:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != "mosaic-index-v1":
        raise ValueError(f"unrecognized index file schema in {path}")
    name, version = doc["codebook"], doc["version"]
    dimension = int(doc["dimension"])
    chunks: list[RuleChunk] = []
    rows: list[np.ndarray] = []
    for entry in doc["entries"]:
        chunks.append(
            RuleChunk(
                chunk_id=int(entry["chunk_id"]),
                codebook=name,
                version=version,
                text=entry["text"],
                tags=frozenset(entry["tags"]),
            )
        )
        vec = np.frombuffer(base64.b64decode(entry["vector"]), dtype="<f8")
        if vec.shape[0] != dimension:
            raise DimensionMismatch(f"stored vector has dimension {vec.shape[0]}")
        rows.append(vec)
    return VectorIndex(
        key=(name, version),
        dimension=dimension,
        chunks=tuple(chunks),
        matrix=np.stack(rows) if rows else np.zeros((0, dimension)),
    )


class RetrievalEngine:
    """Owns current index snapshots, a result cache, and the full pipeline."""

    def __init__(
        self,
        embedder: EmbeddingBackend,
        reranker: RerankBackend | None = None,
        cache_size: int = 256,
    ):
        self.embedder = embedder
        self.reranker = reranker
        self.cache_size = cache_size
        self._indexes: dict[str, VectorIndex] = {}
        self._cache: dict[tuple, list[ScoredChunk]] = {}
        self._lock = threading.Lock()

    def rebuild(self, codebook: Codebook, chunks: Sequence[RuleChunk]) -> VectorIndex:
        index = build_index(codebook.name, codebook.version, chunks, self.embedder)
        with self._lock:
            self._indexes[codebook.name] = index
            self._cache = {k: v for k, v in self._cache.items() if k[0] != codebook.name}
        return index

    def snapshot(self, name: str) -> VectorIndex:
        with self._lock:
            if name not in self._indexes:
                raise KeyError(f"no index built for codebook {name!r}")
            return self._indexes[name]

    def has_index(self, name: str) -> bool:
        with self._lock:
            return name in self._indexes

    def search_snapshot(self, index: VectorIndex, query_vec: np.ndarray, k: int) -> list[ScoredChunk]:
        """Engine-mediated search that refuses superseded snapshots."""
        with self._lock:
            current = self._indexes.get(index.key[0])
        if current is None or current.key != index.key:
            raise StaleIndex(
                f"index {index.key} superseded by "
                f"{current.key if current else 'nothing'}"
            )
        return search(index, query_vec, k)

    def retrieve(
        self,
        codebook: Codebook,
        query_text: str,
        k: int,
        lam: float = 0.5,
        pool_factor: int = 4,
        registry: frozenset[str] | None = None,
    ) -> list[ScoredChunk]:
        """Embed query, pool top-(pool_factor*k), MMR to k, rerank, tag-filter.

        An empty tag-filter result widens the pool (doubling k) before giving
        up; if every chunk in the index fails the filter, the unfiltered
        selection is returned with a logged warning so annotation can proceed.
        """
        cache_key = (codebook.name, codebook.version, query_text, k, lam)
        with self._lock:
            if cache_key in self._cache:
                return list(self._cache[cache_key])

        index = self.snapshot(codebook.name)
        if index.key != (codebook.name, codebook.version):
            raise StaleIndex(
                f"index for {codebook.name!r} is at version {index.key[1]}, "
                f"codebook is at {codebook.version}"
            )
        from .codebook import label_registry  # local import to avoid cycles at module load

        reg = registry if registry is not None else label_registry(codebook)
        query_vec = normalize_query(self.embedder.embed([query_text])[0])

        effective_k = k
        result: list[ScoredChunk] | None = None
        while True:
            pool = search(index, query_vec, min(pool_factor * effective_k, len(index)))
            selected = mmr_select(query_vec, pool, min(effective_k, len(pool)), lam)
            selected = rerank(query_text, selected, self.reranker)
            try:
                filtered = tag_filter(selected, reg)
            except EmptyAfterFilter:
                if pool_factor * effective_k >= len(index):
                    logger.warning(
                        "tag filter removed every candidate for %s; returning unfiltered",
                        codebook.name,
                    )
                    result = selected
                    break
                effective_k *= 2
                continue
            result = filtered[:k]
            break

        with self._lock:
            if len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[cache_key] = list(result)
        return list(result)

    def cache_info(self) -> dict[str, int]:
        with self._lock:
            return {"entries": len(self._cache)}
