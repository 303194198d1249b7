# modules/retrieval/index.py
"""
Índice vectorial plano (búsqueda exacta por coseno)
- Vectores unitarios en una matriz numpy; similitud = producto punto
- Empates: gana la entrada insertada antes (argsort estable)
- Persistencia en tres archivos: chunks.jsonl, vectors.npy y manifest.json
"""
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from database.models import Chunk, RetrievalHit
from utils.errors import (
    BadParams, CountMismatch, DimensionMismatch, DuplicateChunkId, MissingIndex, RetrievalError,
)
from modules.retrieval.embedders import normalize

logger = logging.getLogger(__name__)

CHUNKS_FILE = "chunks.jsonl"
VECTORS_FILE = "vectors.npy"
MANIFEST_FILE = "manifest.json"


class VectorIndex:
    def __init__(self, chunks: Sequence[Chunk], matrix: np.ndarray, dimension: int):
        self.chunks = tuple(chunks)
        self.matrix = matrix
        self.dimension = dimension
        self._by_id = {c.chunk_id: c for c in self.chunks}

    def __len__(self):
        return len(self.chunks)

    def chunk(self, chunk_id: str) -> Chunk:
        return self._by_id[chunk_id]


def build_index(chunks: Sequence[Chunk], vectors: Sequence, dimension: Optional[int] = None) -> VectorIndex:
    if len(chunks) != len(vectors):
        raise CountMismatch(len(chunks), len(vectors))
    seen = set()
    for c in chunks:
        if c.chunk_id in seen:
            raise DuplicateChunkId(c.chunk_id)
        seen.add(c.chunk_id)

    if len(vectors) == 0:
        if not dimension or dimension <= 0:
            raise BadParams("Un índice vacío necesita una dimensión positiva")
        return VectorIndex([], np.zeros((0, dimension), dtype=np.float64), dimension)

    dim = dimension or len(vectors[0])
    rows = []
    for v in vectors:
        if len(v) != dim:
            raise DimensionMismatch(dim, len(v))
        rows.append(np.asarray(v, dtype=np.float64))
    return VectorIndex(chunks, np.vstack(rows), dim)


def search(index: VectorIndex, query, k: int) -> List[RetrievalHit]:
    if k < 1:
        raise BadParams(f"k debe ser >= 1 (llegó {k})")
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise DimensionMismatch(index.dimension, int(q.size))
    if len(index) == 0:
        return []
    q = normalize(q)
    sims = index.matrix @ q
    order = np.argsort(-sims, kind="stable")[:k]
    return [
        RetrievalHit(
            chunk_id=index.chunks[i].chunk_id,
            similarity=float(np.clip(sims[i], -1.0, 1.0)),
            rank=rank,
        )
        for rank, i in enumerate(order, start=1)
    ]


# ------------------------------
# Persistencia
# ------------------------------
def _chunk_lines(index: VectorIndex) -> List[str]:
    return [json.dumps(c.to_record(), ensure_ascii=False, sort_keys=True) for c in index.chunks]


def index_digest(index: VectorIndex) -> str:
    h = hashlib.sha256()
    h.update(str(index.dimension).encode())
    for line in _chunk_lines(index):
        h.update(line.encode("utf-8") + b"\n")
    h.update(np.ascontiguousarray(index.matrix, dtype="<f8").tobytes())
    return h.hexdigest()


def persist_index(index: VectorIndex, folder: str, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    os.makedirs(folder, exist_ok=True)
    with open(os.path.join(folder, CHUNKS_FILE), "w", encoding="utf-8", newline="\n") as f:
        for line in _chunk_lines(index):
            f.write(line + "\n")
    np.save(os.path.join(folder, VECTORS_FILE), np.ascontiguousarray(index.matrix, dtype="<f8"),
            allow_pickle=False)
    manifest = {
        "dimension": index.dimension,
        "count": len(index),
        "digest": index_digest(index),
        **(extra or {}),
    }
    with open(os.path.join(folder, MANIFEST_FILE), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    logger.info("Índice persistido en %s (%d vectores, dim %d)", folder, len(index), index.dimension)
    return manifest


def read_index_manifest(folder: str) -> Dict[str, Any]:
    path = os.path.join(folder, MANIFEST_FILE)
    if not os.path.exists(path):
        raise MissingIndex(folder)
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_index(folder: str) -> VectorIndex:
    manifest = read_index_manifest(folder)
    chunks_path = os.path.join(folder, CHUNKS_FILE)
    vectors_path = os.path.join(folder, VECTORS_FILE)
    if not (os.path.exists(chunks_path) and os.path.exists(vectors_path)):
        raise MissingIndex(folder)

    with open(chunks_path, "r", encoding="utf-8") as f:
        chunks = [Chunk.from_record(json.loads(line)) for line in f if line.strip()]
    matrix = np.load(vectors_path, allow_pickle=False)
    dimension = int(manifest["dimension"])
    if matrix.ndim != 2 or matrix.shape[1] != dimension:
        raise DimensionMismatch(dimension, int(matrix.shape[-1]) if matrix.ndim else 0)
    if len(chunks) != matrix.shape[0] or len(chunks) != int(manifest["count"]):
        raise RetrievalError(
            f"Índice inconsistente en {folder}: manifest={manifest['count']}, "
            f"chunks={len(chunks)}, vectores={matrix.shape[0]}"
        )
    return build_index(chunks, list(matrix), dimension)
