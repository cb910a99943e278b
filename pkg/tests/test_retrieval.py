"""Retrieval: exact search, MMR, rerank, tag filter, snapshots, caching."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pytest

from conftest import builtin
from mosaic.backends import FunctionRerankBackend, HashEmbeddingBackend
from mosaic.codebook import RuleChunk, chunk_codebook, parse_codebook
from mosaic.errors import (
    BackendUnavailable,
    DimensionMismatch,
    EmptyAfterFilter,
    StaleIndex,
)
from mosaic.retrieval import (
    RetrievalEngine,
    ScoredChunk,
    VectorIndex,
    build_index,
    load_index,
    mmr_select,
    normalize_query,
    rerank,
    save_index,
    search,
    tag_filter,
)


def _chunk(i: int, text: str = "", tags=()) -> RuleChunk:
    return RuleChunk(
        chunk_id=i,
        codebook="Demo",
        version="v1",
        text=text or f"chunk {i}",
        tags=frozenset(tags),
    )


def _index_from_matrix(matrix: np.ndarray, ids=None, tags_by_pos=None) -> VectorIndex:
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    ids = ids if ids is not None else range(matrix.shape[0])
    chunks = tuple(
        _chunk(i, tags=(tags_by_pos or {}).get(pos, ()))
        for pos, i in enumerate(ids)
    )
    return VectorIndex(
        key=("Demo", "v1"),
        dimension=matrix.shape[1],
        chunks=chunks,
        matrix=matrix / norms,
    )


def _candidates(index: VectorIndex, query: np.ndarray) -> list[ScoredChunk]:
    q = normalize_query(query)
    sims = index.matrix @ q
    return [
        ScoredChunk(chunk=c, relevance=float(s), vector=v)
        for c, s, v in zip(index.chunks, sims, index.matrix)
    ]


# ---------------------------------------------------------------------------
# Exact search


def test_search_matches_argsort_oracle():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n, d = int(rng.integers(1, 40)), int(rng.integers(2, 8))
        index = _index_from_matrix(rng.normal(size=(n, d)))
        q = rng.normal(size=d)
        k = int(rng.integers(1, n + 2))
        got = [s.chunk.chunk_id for s in search(index, q, k)]
        sims = index.matrix @ normalize_query(q)
        oracle = sorted(range(n), key=lambda i: (-sims[i], index.chunks[i].chunk_id))
        assert got == oracle[: min(k, n)]


def test_search_breaks_ties_by_ascending_chunk_id():
    # Three identical vectors with shuffled ids: lowest id must come first.
    matrix = np.array([[1.0, 0.0]] * 3)
    index = _index_from_matrix(matrix, ids=[5, 1, 3])
    got = [s.chunk.chunk_id for s in search(index, np.array([1.0, 0.0]), 3)]
    assert got == [1, 3, 5]


def test_search_k_bounds():
    index = _index_from_matrix(np.eye(3))
    assert search(index, np.array([1.0, 0, 0]), 0) == []
    assert search(index, np.array([1.0, 0, 0]), -2) == []
    assert len(search(index, np.array([1.0, 0, 0]), 99)) == 3


def test_search_rejects_wrong_dimension():
    index = _index_from_matrix(np.eye(3))
    with pytest.raises(DimensionMismatch):
        search(index, np.array([1.0, 0.0]), 2)


def test_search_relevance_is_cosine():
    index = _index_from_matrix(np.array([[2.0, 0.0], [0.0, 5.0]]))  # norms differ
    top = search(index, np.array([3.0, 3.0]), 2)
    for s in top:
        assert s.relevance == pytest.approx(np.sqrt(0.5), abs=1e-12)


# ---------------------------------------------------------------------------
# Index construction and serialization


def test_build_index_normalizes_and_validates():
    emb = HashEmbeddingBackend(dimension=16)
    chunks = [_chunk(0, "alpha beta"), _chunk(1, "gamma delta")]
    index = build_index("Demo", "v1", chunks, emb)
    assert len(index) == 2
    assert np.allclose(np.linalg.norm(index.matrix, axis=1), 1.0)
    with pytest.raises(ValueError):
        build_index("Demo", "v1", [], emb)


def test_build_index_checks_embedder_dimension():
    @dataclass
    class LyingEmbedder:
        dimension: int = 8

        @property
        def fingerprint(self):
            return "lying"

        def embed(self, texts):
            return np.zeros((len(texts), 4))

    with pytest.raises(DimensionMismatch):
        build_index("Demo", "v1", [_chunk(0, "x")], LyingEmbedder())


def test_save_load_round_trip(tmp_path):
    emb = HashEmbeddingBackend(dimension=32)
    cb = builtin("SDOHWeight")
    chunks = chunk_codebook(cb, 250, 125)
    index = build_index(cb.name, cb.version, chunks, emb)
    path = tmp_path / "idx.json"
    save_index(index, path)
    loaded = load_index(path)
    assert loaded.key == index.key
    assert loaded.dimension == index.dimension
    assert loaded.chunks == index.chunks
    assert np.array_equal(loaded.matrix, index.matrix)  # bit-exact vectors
    # Serialization is byte-stable for identical inputs.
    path2 = tmp_path / "idx2.json"
    save_index(index, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_unknown_schema(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema": "other"}')
    with pytest.raises(ValueError):
        load_index(path)


# ---------------------------------------------------------------------------
# MMR


def _mmr_oracle(candidates, k, lam):
    """Straight restatement of the selection rule, computed pairwise."""
    if k <= 0 or not candidates:
        return []
    k = min(k, len(candidates))
    chosen = [min(candidates, key=lambda c: (-c.relevance, c.chunk.chunk_id))]
    remaining = [c for c in candidates if c is not chosen[0]]
    while len(chosen) < k and remaining:
        def score(c):
            max_sim = max(float(np.dot(c.vector, s.vector)) for s in chosen)
            return lam * c.relevance - (1.0 - lam) * max_sim

        best = min(remaining, key=lambda c: (-score(c), c.chunk.chunk_id))
        chosen.append(best)
        remaining.remove(best)
    return chosen


def test_mmr_matches_brute_force_oracle():
    rng = np.random.default_rng(11)
    for trial in range(100):
        n, d = int(rng.integers(1, 11)), int(rng.integers(2, 6))
        index = _index_from_matrix(rng.normal(size=(n, d)))
        q = rng.normal(size=d)
        cands = _candidates(index, q)
        k = int(rng.integers(1, 6))
        lam = float(rng.choice([0.0, 0.3, 0.5, 1.0]))
        got = [c.chunk.chunk_id for c in mmr_select(normalize_query(q), cands, k, lam)]
        expect = [c.chunk.chunk_id for c in _mmr_oracle(cands, k, lam)]
        assert got == expect, f"trial {trial}: lam={lam} k={k}"


def test_mmr_lambda_one_is_pure_relevance():
    rng = np.random.default_rng(13)
    index = _index_from_matrix(rng.normal(size=(12, 4)))
    q = rng.normal(size=4)
    cands = _candidates(index, q)
    got = [c.chunk.chunk_id for c in mmr_select(normalize_query(q), cands, 5, 1.0)]
    top = [s.chunk.chunk_id for s in search(index, q, 5)]
    assert got == top


def test_mmr_lambda_zero_diversifies():
    # Two near-duplicates of the query and one orthogonal chunk: with lam=0
    # the second pick must be the orthogonal one, not the duplicate.
    matrix = np.array([[1.0, 0.0], [0.999, 0.001], [0.0, 1.0]])
    index = _index_from_matrix(matrix)
    cands = _candidates(index, np.array([1.0, 0.0]))
    got = [c.chunk.chunk_id for c in mmr_select(np.array([1.0, 0.0]), cands, 2, 0.0)]
    assert got == [0, 2]


def test_mmr_first_pick_tie_breaks_on_chunk_id():
    matrix = np.array([[1.0, 0.0], [1.0, 0.0]])
    index = _index_from_matrix(matrix, ids=[9, 2])
    cands = _candidates(index, np.array([1.0, 0.0]))
    got = [c.chunk.chunk_id for c in mmr_select(np.array([1.0, 0.0]), cands, 2, 0.5)]
    assert got[0] == 2


def test_mmr_validates_lambda_and_k():
    index = _index_from_matrix(np.eye(2))
    cands = _candidates(index, np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        mmr_select(np.array([1.0, 0.0]), cands, 1, 1.5)
    with pytest.raises(ValueError):
        mmr_select(np.array([1.0, 0.0]), cands, 1, -0.1)
    assert mmr_select(np.array([1.0, 0.0]), cands, 0, 0.5) == []
    assert mmr_select(np.array([1.0, 0.0]), [], 3, 0.5) == []


# ---------------------------------------------------------------------------
# Rerank


def test_rerank_without_backend_is_passthrough():
    index = _index_from_matrix(np.eye(3))
    cands = _candidates(index, np.array([0.2, 0.9, 0.1]))
    out = rerank("query", cands, None)
    assert [c.chunk.chunk_id for c in out] == [c.chunk.chunk_id for c in cands]
    assert all(c.rerank_score == c.relevance for c in out)


def test_rerank_orders_by_score_then_chunk_id():
    index = _index_from_matrix(np.eye(3))
    cands = _candidates(index, np.array([1.0, 0.0, 0.0]))
    backend = FunctionRerankBackend(fn=lambda q, docs: [0.1, 0.9, 0.9])
    out = rerank("query", cands, backend)
    assert [c.chunk.chunk_id for c in out] == [1, 2, 0]  # tie 1 vs 2 -> lower id


def test_rerank_failure_degrades_to_passthrough(caplog):
    class DownRerank:
        fingerprint = "down"

        def score(self, query, documents):
            raise BackendUnavailable("rerank down")

    index = _index_from_matrix(np.eye(2))
    cands = _candidates(index, np.array([0.0, 1.0]))
    with caplog.at_level(logging.WARNING, logger="mosaic.retrieval"):
        out = rerank("query", cands, DownRerank())
    assert [c.chunk.chunk_id for c in out] == [c.chunk.chunk_id for c in cands]
    assert any("reranker unavailable" in r.message for r in caplog.records)


def test_rerank_empty_input():
    assert rerank("q", [], None) == []


# ---------------------------------------------------------------------------
# Tag filter


def test_tag_filter_keeps_registry_subsets():
    index = _index_from_matrix(
        np.eye(3),
        tags_by_pos={0: ("A",), 1: (), 2: ("A", "Z")},
    )
    cands = _candidates(index, np.array([1.0, 0.0, 0.0]))
    kept = tag_filter(cands, {"A", "B", "None"})
    assert [c.chunk.chunk_id for c in kept] == [0]  # 1 empty, 2 has foreign tag


def test_tag_filter_raises_when_nothing_survives():
    index = _index_from_matrix(np.eye(2), tags_by_pos={0: (), 1: ("Z",)})
    cands = _candidates(index, np.array([1.0, 0.0]))
    with pytest.raises(EmptyAfterFilter):
        tag_filter(cands, {"A"})


# ---------------------------------------------------------------------------
# Engine: snapshots, staleness, cache


@dataclass
class MapEmbedder:
    """Deterministic lookup embedder giving tests full control of geometry."""

    table: dict
    dimension: int = 2

    @property
    def fingerprint(self):
        return "embed-map"

    def embed(self, texts):
        return np.array([self.table[t] for t in texts], dtype=np.float64)


def test_engine_snapshot_and_stale_search():
    emb = HashEmbeddingBackend(dimension=16)
    engine = RetrievalEngine(emb)
    cb1 = parse_codebook("# One\nMark [X] when it applies here.", "Demo")
    engine.rebuild(cb1, chunk_codebook(cb1, 250, 125))
    snap1 = engine.snapshot("Demo")
    assert engine.search_snapshot(snap1, emb.embed(["query text"])[0], 1)

    cb2 = parse_codebook("# One changed\nMark [X] when it applies here.", "Demo")
    engine.rebuild(cb2, chunk_codebook(cb2, 250, 125))
    with pytest.raises(StaleIndex):
        engine.search_snapshot(snap1, emb.embed(["query text"])[0], 1)
    assert engine.search_snapshot(engine.snapshot("Demo"), emb.embed(["q"])[0], 1)


def test_engine_snapshot_unknown_codebook():
    engine = RetrievalEngine(HashEmbeddingBackend(dimension=8))
    with pytest.raises(KeyError):
        engine.snapshot("Nope")
    assert not engine.has_index("Nope")


def test_engine_retrieve_caches_and_invalidates():
    emb = HashEmbeddingBackend(dimension=16)
    engine = RetrievalEngine(emb)
    cb = parse_codebook("# Rules\nMark [X] for this and [Y: 2] for that.", "Demo")
    engine.rebuild(cb, chunk_codebook(cb, 5, 3))
    first = engine.retrieve(cb, "when to mark", k=2)
    assert engine.cache_info() == {"entries": 1}
    second = engine.retrieve(cb, "when to mark", k=2)
    assert [c.chunk.chunk_id for c in first] == [c.chunk.chunk_id for c in second]
    engine.rebuild(cb, chunk_codebook(cb, 5, 3))
    assert engine.cache_info() == {"entries": 0}  # rebuild clears that codebook


def test_engine_cache_fifo_eviction():
    emb = HashEmbeddingBackend(dimension=16)
    engine = RetrievalEngine(emb, cache_size=2)
    cb = parse_codebook("# Rules\nMark [X] here always.", "Demo")
    engine.rebuild(cb, chunk_codebook(cb, 250, 125))
    for q in ("one", "two", "three"):
        engine.retrieve(cb, q, k=1)
    assert engine.cache_info() == {"entries": 2}


def test_engine_retrieve_stale_codebook_object():
    emb = HashEmbeddingBackend(dimension=16)
    engine = RetrievalEngine(emb)
    cb1 = parse_codebook("# A\nMark [X] here.", "Demo")
    engine.rebuild(cb1, chunk_codebook(cb1, 250, 125))
    cb2 = parse_codebook("# A different\nMark [X] here.", "Demo")
    with pytest.raises(StaleIndex):
        engine.retrieve(cb2, "query", k=1)


def test_engine_retrieve_widens_pool_until_tagged_chunk_found():
    # Geometry: query is [1, 0]. The two most similar chunks carry no tags,
    # so the first (pool_factor * k = 1) pool filters to nothing; the engine
    # doubles k until the tagged chunk enters the pool.
    table = {
        "tagless near": [1.0, 0.0],
        "tagless close": [0.98, 0.2],
        "tagged far [X]": [0.5, 0.87],
        "q": [1.0, 0.0],
    }
    emb = MapEmbedder(table)
    engine = RetrievalEngine(emb)
    cb = parse_codebook("# A\nMark [X] sometimes.", "Demo")
    chunks = [
        RuleChunk(0, "Demo", cb.version, "tagless near", frozenset()),
        RuleChunk(1, "Demo", cb.version, "tagless close", frozenset()),
        RuleChunk(2, "Demo", cb.version, "tagged far [X]", frozenset({"X"})),
    ]
    engine.rebuild(cb, chunks)
    out = engine.retrieve(cb, "q", k=1, lam=1.0, pool_factor=1)
    assert [c.chunk.chunk_id for c in out] == [2]


def test_engine_retrieve_falls_back_unfiltered_when_no_tags_exist(caplog):
    table = {"a": [1.0, 0.0], "b": [0.0, 1.0], "q": [1.0, 0.0]}
    emb = MapEmbedder(table)
    engine = RetrievalEngine(emb)
    cb = parse_codebook("# A\nMark [X] sometimes.", "Demo")
    chunks = [
        RuleChunk(0, "Demo", cb.version, "a", frozenset()),
        RuleChunk(1, "Demo", cb.version, "b", frozenset()),
    ]
    engine.rebuild(cb, chunks)
    with caplog.at_level(logging.WARNING, logger="mosaic.retrieval"):
        out = engine.retrieve(cb, "q", k=2, lam=1.0)
    assert [c.chunk.chunk_id for c in out] == [0, 1]
    assert any("returning unfiltered" in r.message for r in caplog.records)


def test_engine_retrieve_on_builtin_returns_relevant_rule():
    emb = HashEmbeddingBackend(dimension=384)
    engine = RetrievalEngine(emb)
    cb = builtin("WISER")
    engine.rebuild(cb, chunk_codebook(cb, 250, 125))
    out = engine.retrieve(cb, "open-ended question inviting own words", k=3)
    assert out and all(c.chunk.codebook == "WISER" for c in out)
    assert all(c.chunk.tags for c in out)
