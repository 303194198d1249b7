# modules/retrieval/embedders.py
"""
Embedders y caché de embeddings
- Contrato Embedder: model_name, dimension, contador de invocaciones
- LocalHashEmbedder: trigramas de caracteres hasheados, determinista y sin red
- RemoteEmbedder: endpoint estilo /embeddings (model + input -> data[].embedding)
- EmbeddingCache: SQLite, clave = sha256(texto) + modelo
- EmbeddingService: normaliza, valida dimensión, reintenta y cachea
"""
import hashlib
import logging
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import backoff
import httpx
import numpy as np

from utils.errors import (
    DimensionMismatch, EmbedderUnavailable, ServiceRefusal, TransportFailure, ZeroVector,
)
from utils.http import post_json

logger = logging.getLogger(__name__)


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def normalize(vector, position: int = 0) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVector(position)
    return v / norm


# ------------------------------
# Contrato
# ------------------------------
class Embedder(ABC):
    model_name = "embedder"
    dimension: Optional[int] = None

    def __init__(self):
        self.invocations = 0
        self._count_lock = threading.Lock()

    def embed_batch(self, texts: Sequence[str]) -> List[List[float]]:
        with self._count_lock:
            self.invocations += 1
        return self._embed(list(texts))

    @abstractmethod
    def _embed(self, texts: List[str]) -> List[List[float]]:
        ...


class LocalHashEmbedder(Embedder):
    """Bolsa de trigramas hasheados a `dimension` cubetas (sin normalizar; eso lo hace el servicio)"""

    def __init__(self, dimension: int = 256):
        super().__init__()
        if dimension <= 0:
            raise ValueError("La dimensión debe ser positiva")
        self.dimension = dimension
        self.model_name = f"local-trigram-{dimension}"

    def _bucket(self, trigram: str) -> int:
        digest = hashlib.blake2b(trigram.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def _embed(self, texts: List[str]) -> List[List[float]]:
        out = []
        for text in texts:
            padded = f"^{text.lower()}$"
            vec = np.zeros(self.dimension, dtype=np.float64)
            for i in range(len(padded) - 2):
                vec[self._bucket(padded[i:i + 3])] += 1.0
            out.append(vec.tolist())
        return out


class RemoteEmbedder(Embedder):
    def __init__(self, endpoint: str, model: str, token: Optional[str] = None,
                 dimension: Optional[int] = None, timeout: float = 30.0):
        super().__init__()
        self.endpoint = endpoint.rstrip("/")
        self.model_name = model
        self.token = token
        self.dimension = dimension
        self.client = httpx.Client(timeout=timeout)

    def _embed(self, texts: List[str]) -> List[List[float]]:
        data = post_json(self.client, f"{self.endpoint}/embeddings",
                         {"model": self.model_name, "input": texts}, self.token)
        items = sorted(data.get("data", []), key=lambda d: d.get("index", 0))
        if len(items) != len(texts):
            raise TransportFailure(f"Se pidieron {len(texts)} embeddings y llegaron {len(items)}")
        return [item["embedding"] for item in items]


# ------------------------------
# Caché persistente
# ------------------------------
class EmbeddingCache:
    def __init__(self, database, model_name: str):
        self.db = database
        self.model = model_name

    def get_many(self, digests: Sequence[str]) -> Dict[str, np.ndarray]:
        found = {}
        wanted = list(dict.fromkeys(digests))
        # SQLite limita los parámetros por consulta
        for i in range(0, len(wanted), 500):
            part = wanted[i:i + 500]
            marks = ",".join("?" * len(part))
            rows = self.db.execute_query(
                f"SELECT digest, vector FROM embedding_cache WHERE model=? AND digest IN ({marks})",
                (self.model, *part),
            )
            for r in rows or []:
                found[r["digest"]] = np.frombuffer(r["vector"], dtype="<f8").copy()
        return found

    def put_many(self, items: Dict[str, np.ndarray]):
        if not items:
            return
        self.db.execute_many(
            "INSERT OR IGNORE INTO embedding_cache (digest, model, dimension, vector) VALUES (?, ?, ?, ?)",
            [(d, self.model, int(v.shape[0]), np.asarray(v, dtype="<f8").tobytes()) for d, v in items.items()],
        )

    def count(self) -> int:
        rows = self.db.execute_query("SELECT COUNT(*) FROM embedding_cache WHERE model=?", (self.model,))
        return rows[0][0] if rows else 0

    def close(self):
        self.db.close()


# ------------------------------
# Servicio
# ------------------------------
class EmbeddingService:
    def __init__(self, embedder: Embedder, cache: Optional[EmbeddingCache] = None,
                 batch_size: int = 64, max_attempts: int = 3, backoff_factor: float = 0.5,
                 parallelism: int = 1):
        self.embedder = embedder
        self.cache = cache
        self.batch_size = max(1, int(batch_size))
        self.max_attempts = max(1, int(max_attempts))
        self.backoff_factor = backoff_factor
        self.parallelism = max(1, int(parallelism))
        self.dimension = embedder.dimension
        self.hits = 0
        self.misses = 0
        self._memo: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def model_name(self) -> str:
        return self.embedder.model_name

    def close(self):
        """Cierra la caché SQLite; el memo en memoria sigue disponible"""
        if self.cache is not None:
            self.cache.close()

    def stats(self) -> Dict[str, float]:
        total = self.hits + self.misses
        return {
            "hits": self.hits,
            "misses": self.misses,
            "hit_rate": (self.hits / total) if total else 1.0,
            "embedder_invocations": self.embedder.invocations,
        }

    def _call_with_retry(self, texts: List[str]) -> List[List[float]]:
        call = backoff.on_exception(
            backoff.expo, TransportFailure,
            max_tries=self.max_attempts, factor=self.backoff_factor, jitter=None, logger=logger,
        )(self.embedder.embed_batch)
        try:
            return call(texts)
        except TransportFailure as e:
            raise EmbedderUnavailable(
                f"Embedder no disponible tras {self.max_attempts} intentos: {e}", self.max_attempts
            ) from e
        except ServiceRefusal as e:
            raise EmbedderUnavailable(f"Embedder rechazó la petición: {e}", 1) from e

    def _check_dimension(self, vectors: List[List[float]]):
        for v in vectors:
            with self._lock:
                if self.dimension is None:
                    self.dimension = len(v)
            if len(v) != self.dimension:
                raise DimensionMismatch(self.dimension, len(v))

    def _embed_missing(self, texts: Dict[str, str]) -> Dict[str, np.ndarray]:
        digests = list(texts)
        batches = [digests[i:i + self.batch_size] for i in range(0, len(digests), self.batch_size)]

        def run(batch):
            raw = self._call_with_retry([texts[d] for d in batch])
            if len(raw) != len(batch):
                raise DimensionMismatch(len(batch), len(raw))
            self._check_dimension(raw)
            return {d: normalize(v, digests.index(d)) for d, v in zip(batch, raw)}

        out: Dict[str, np.ndarray] = {}
        if self.parallelism > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                for part in pool.map(run, batches):
                    out.update(part)
        else:
            for batch in batches:
                out.update(run(batch))
        return out

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        """Un vector unitario por texto, en el mismo orden; cada texto distinto se embebe una vez"""
        digests = [text_digest(t) for t in texts]
        with self._lock:
            known = {d: self._memo[d] for d in digests if d in self._memo}

        pending = [d for d in dict.fromkeys(digests) if d not in known]
        if pending and self.cache is not None:
            stored = self.cache.get_many(pending)
            for v in stored.values():
                with self._lock:
                    if self.dimension is None:
                        self.dimension = int(v.shape[0])
                if v.shape[0] != self.dimension:
                    raise DimensionMismatch(self.dimension, v.shape[0])
            known.update(stored)

        missing = {}
        for d, t in zip(digests, texts):
            if d not in known and d not in missing:
                missing[d] = t
        for d, t in missing.items():
            if not t:
                raise ZeroVector(digests.index(d))

        fresh = self._embed_missing(missing) if missing else {}
        if fresh and self.cache is not None:
            self.cache.put_many(fresh)
        known.update(fresh)

        with self._lock:
            self._memo.update(known)
            self.misses += len(missing)
            self.hits += len(set(digests)) - len(missing)
        return [known[d] for d in digests]
