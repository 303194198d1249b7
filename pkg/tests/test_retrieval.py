import json
from concurrent.futures import ThreadPoolExecutor

import httpx
import numpy as np
import pytest

from database.database import Database
from database.models import Chunk
from modules.retrieval.controller import RetrievalController, Retriever
from modules.retrieval.embedders import (
    Embedder, EmbeddingCache, EmbeddingService, LocalHashEmbedder, RemoteEmbedder, normalize,
)
from modules.retrieval.index import build_index, index_digest, load_index, persist_index, search
from utils.errors import (
    BadParams, CountMismatch, DimensionMismatch, DuplicateChunkId, EmbedderUnavailable, MissingIndex,
    ServiceRefusal, TransportFailure, ZeroVector,
)


def make_chunks(n):
    return [Chunk(chunk_id=f"c{i}", doc_id=f"d{i}", text=f"text {i}", span=(0, 6)) for i in range(n)]


def exhaustive(vectors, query, k):
    """Escaneo completo: coseno contra todo, empate -> menor posición"""
    q = query / np.linalg.norm(query)
    scored = [(-float(np.dot(v / np.linalg.norm(v), q)), i) for i, v in enumerate(vectors)]
    return [i for _, i in sorted(scored)[:k]]


class FlakyEmbedder(Embedder):
    model_name = "flaky"

    def __init__(self, failures, dimension=4, error=TransportFailure):
        super().__init__()
        self.failures = failures
        self.dimension = dimension
        self.error = error

    def _embed(self, texts):
        if self.failures > 0:
            self.failures -= 1
            if self.error is ServiceRefusal:
                raise ServiceRefusal(400, "bad input")
            raise TransportFailure("timeout")
        return [[float(len(t)), 1.0, 0.0, 0.0][:self.dimension] for t in texts]


# ------------------------------
# Índice
# ------------------------------
def test_knn_matches_exhaustive_scan():
    rng = np.random.default_rng(42)
    vectors = rng.normal(size=(500, 64))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    index = build_index(make_chunks(500), list(vectors))
    for _ in range(50):
        query = rng.normal(size=64)
        hits = search(index, query, 20)
        assert [h.chunk_id for h in hits] == [f"c{i}" for i in exhaustive(vectors, query, 20)]
        assert [h.rank for h in hits] == list(range(1, 21))
        sims = [h.similarity for h in hits]
        assert sims == sorted(sims, reverse=True)


def test_ties_follow_insertion_order():
    one_hot = np.eye(8)
    vectors = [one_hot[3], one_hot[1], one_hot[3], one_hot[3], one_hot[5]]
    index = build_index(make_chunks(5), vectors)
    hits = search(index, one_hot[3], 3)
    assert [h.chunk_id for h in hits] == ["c0", "c2", "c3"]


def test_search_is_a_stable_prefix():
    rng = np.random.default_rng(7)
    vectors = rng.normal(size=(200, 16))
    vectors[50] = vectors[10]
    vectors[120] = vectors[10]
    index = build_index(make_chunks(200), list(vectors))
    for _ in range(20):
        query = rng.normal(size=16)
        assert search(index, query, 5) == search(index, query, 20)[:5]
    tied = search(index, vectors[10], 20)
    assert [h.chunk_id for h in tied[:3]] == ["c10", "c50", "c120"]
    assert search(index, vectors[10], 5) == tied[:5]


def test_k_larger_than_index():
    index = build_index(make_chunks(3), list(np.eye(3)))
    assert len(search(index, np.ones(3), 10)) == 3


def test_empty_index_search():
    index = build_index([], [], dimension=4)
    assert search(index, np.ones(4), 5) == []


def test_search_errors():
    index = build_index(make_chunks(2), list(np.eye(2)))
    with pytest.raises(BadParams):
        search(index, np.ones(2), 0)
    with pytest.raises(DimensionMismatch):
        search(index, np.ones(3), 1)


def test_build_index_errors():
    with pytest.raises(CountMismatch):
        build_index(make_chunks(2), [np.ones(3)])
    with pytest.raises(DuplicateChunkId):
        build_index(make_chunks(1) * 2, [np.ones(3), np.ones(3)])
    with pytest.raises(DimensionMismatch):
        build_index(make_chunks(2), [np.ones(3), np.ones(4)])


def test_persist_and_load_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    vectors = list(rng.normal(size=(10, 8)))
    index = build_index(make_chunks(10), vectors)
    manifest = persist_index(index, str(tmp_path / "index"), extra={"corpus_digest": "abc"})
    assert manifest["count"] == 10 and manifest["corpus_digest"] == "abc"
    loaded = load_index(str(tmp_path / "index"))
    assert index_digest(loaded) == index_digest(index) == manifest["digest"]
    query = rng.normal(size=8)
    assert search(loaded, query, 5) == search(index, query, 5)


def test_load_missing_index(tmp_path):
    with pytest.raises(MissingIndex):
        load_index(str(tmp_path / "nothing"))


# ------------------------------
# Embeddings
# ------------------------------
def test_local_embedder_is_deterministic_unit_vectors():
    service = EmbeddingService(LocalHashEmbedder(64))
    a, b, c = service.embed(["brain-stem ROI", "brain-stem ROI", "Patient birth date"])
    assert a.shape == (64,)
    assert np.isclose(np.linalg.norm(a), 1.0)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(EmbeddingService(LocalHashEmbedder(64)).embed(["brain-stem ROI"])[0], a)


def test_duplicate_texts_embedded_once():
    embedder = LocalHashEmbedder(32)
    service = EmbeddingService(embedder, batch_size=2)
    service.embed(["a", "b", "a", "c", "b"])
    stats = service.stats()
    assert stats["misses"] == 3
    assert embedder.invocations == 2


def test_empty_text_is_zero_vector():
    with pytest.raises(ZeroVector):
        EmbeddingService(LocalHashEmbedder(16)).embed([""])
    with pytest.raises(ZeroVector):
        normalize([0.0, 0.0])


def test_transient_failures_are_retried():
    embedder = FlakyEmbedder(failures=2)
    service = EmbeddingService(embedder, max_attempts=3, backoff_factor=0)
    (vector,) = service.embed(["abc"])
    assert embedder.invocations == 3
    assert np.isclose(np.linalg.norm(vector), 1.0)


def test_exhausted_retries_raise_embedder_unavailable():
    embedder = FlakyEmbedder(failures=5)
    service = EmbeddingService(embedder, max_attempts=3, backoff_factor=0)
    with pytest.raises(EmbedderUnavailable) as info:
        service.embed(["abc"])
    assert info.value.attempts == 3
    assert embedder.invocations == 3


def test_refusal_is_not_retried():
    embedder = FlakyEmbedder(failures=1, error=ServiceRefusal)
    service = EmbeddingService(embedder, max_attempts=3, backoff_factor=0)
    with pytest.raises(EmbedderUnavailable):
        service.embed(["abc"])
    assert embedder.invocations == 1


def test_dimension_mismatch_from_service():
    embedder = FlakyEmbedder(failures=0, dimension=4)
    embedder.dimension = 8
    with pytest.raises(DimensionMismatch):
        EmbeddingService(embedder).embed(["abc"])


def test_sqlite_cache_reused_across_services(tmp_path):
    path = str(tmp_path / "cache" / "embeddings.db")
    first = LocalHashEmbedder(32)
    EmbeddingService(first, cache=EmbeddingCache(Database(path), first.model_name)).embed(["x1", "x2"])
    assert first.invocations == 1

    second = LocalHashEmbedder(32)
    cache = EmbeddingCache(Database(path), second.model_name)
    service = EmbeddingService(second, cache=cache)
    service.embed(["x1", "x2"])
    assert second.invocations == 0
    assert service.stats()["hit_rate"] == 1.0
    assert cache.count() == 2


def test_concurrent_embed_on_shared_cache(tmp_path):
    embedder = LocalHashEmbedder(32)
    cache = EmbeddingCache(Database(str(tmp_path / "embeddings.db")), embedder.model_name)
    service = EmbeddingService(embedder, cache=cache, batch_size=4)
    texts = [f"field {i % 40}" for i in range(200)]
    expected = dict(zip(texts, EmbeddingService(LocalHashEmbedder(32)).embed(texts)))
    batches = [texts[i::8] for i in range(8)]
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(service.embed, batches))
    for batch, vectors in zip(batches, results):
        for text, vector in zip(batch, vectors):
            assert np.array_equal(vector, expected[text])
    assert cache.count() == 40
    service.close()


def remote_embedder(handler):
    embedder = RemoteEmbedder("https://emb.example/v1/", "embed-model", token="secret", dimension=3)
    embedder.client = httpx.Client(transport=httpx.MockTransport(handler))
    return embedder


def test_remote_embedder_payload_and_index_order():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("Authorization")
        seen["body"] = json.loads(request.content)
        data = [{"index": i, "embedding": [float(i + 1), 0.0, 1.0]} for i in range(len(seen["body"]["input"]))]
        return httpx.Response(200, json={"data": list(reversed(data))})

    embedder = remote_embedder(handler)
    assert embedder.embed_batch(["a", "b", "c"]) == [[1.0, 0.0, 1.0], [2.0, 0.0, 1.0], [3.0, 0.0, 1.0]]
    assert seen["url"] == "https://emb.example/v1/embeddings"
    assert seen["auth"] == "Bearer secret"
    assert seen["body"] == {"model": "embed-model", "input": ["a", "b", "c"]}
    assert embedder.invocations == 1


def test_remote_embedder_count_mismatch_is_retried_then_unavailable():
    embedder = remote_embedder(lambda r: httpx.Response(200, json={"data": [{"index": 0, "embedding": [1.0, 0.0, 0.0]}]}))
    with pytest.raises(TransportFailure):
        embedder.embed_batch(["a", "b"])
    service = EmbeddingService(embedder, max_attempts=2, backoff_factor=0)
    with pytest.raises(EmbedderUnavailable):
        service.embed(["a", "b"])
    assert embedder.invocations == 3


@pytest.mark.parametrize("status,error", [(500, TransportFailure), (401, ServiceRefusal)])
def test_remote_embedder_status_mapping(status, error):
    embedder = remote_embedder(lambda r: httpx.Response(status, text="no"))
    with pytest.raises(error):
        embedder.embed_batch(["a"])


# ------------------------------
# Controlador
# ------------------------------
def test_retrieval_controller_builds_index_from_schema(sample_schema):
    service = EmbeddingService(LocalHashEmbedder(128))
    controller = RetrievalController(service, chunk_size=2000, chunk_overlap=200)
    index = controller.build_index(sample_schema)
    assert len(index) == len(sample_schema.element_docs)
    hits, texts = Retriever(index, service).retrieve("Description: The date of birth for the individual.", 3)
    assert hits[0].chunk_id == "Patient.birthDate#0"
    assert "birth" in texts[0]


def test_small_chunks_split_documents(sample_schema):
    controller = RetrievalController(EmbeddingService(LocalHashEmbedder(32)), chunk_size=60, chunk_overlap=10)
    chunks = controller.build_chunks(sample_schema)
    assert len(chunks) > len(sample_schema.element_docs)
    assert all(len(c.text) <= 60 for c in chunks)
