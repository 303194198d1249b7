# modules/retrieval/controller.py
"""
Controlador de Recuperación
- Corpus -> documentos -> chunks -> embeddings -> índice
- Recuperación top-k para una consulta de texto
"""
import logging
from typing import List, Sequence, Tuple

from database.models import Chunk, FhirSchema, RetrievalHit
from modules.fhir_corpus.controller import render_documents
from modules.retrieval.embedders import EmbeddingService
from modules.retrieval.index import VectorIndex, build_index, search
from modules.retrieval.splitter import DEFAULT_SEPARATORS, split_text

logger = logging.getLogger(__name__)


class RetrievalController:
    def __init__(self, embedding_service: EmbeddingService, chunk_size: int = 2000,
                 chunk_overlap: int = 200, separators: Sequence[str] = DEFAULT_SEPARATORS):
        self.embeddings = embedding_service
        self.chunk_size = chunk_size
        self.chunk_overlap = chunk_overlap
        self.separators = tuple(separators)

    def build_chunks(self, schema: FhirSchema) -> List[Chunk]:
        chunks: List[Chunk] = []
        for doc_id, text in render_documents(schema):
            chunks.extend(split_text(text, self.chunk_size, self.chunk_overlap, self.separators, doc_id=doc_id))
        return chunks

    def build_index(self, schema: FhirSchema) -> VectorIndex:
        chunks = self.build_chunks(schema)
        logger.info("%d documentos -> %d chunks", len(schema.element_docs), len(chunks))
        vectors = self.embeddings.embed([c.text for c in chunks])
        return build_index(chunks, vectors, self.embeddings.dimension)


class Retriever:
    """Consulta de texto -> hits top-k y los textos de esos chunks, en orden de rango"""

    def __init__(self, index: VectorIndex, embedding_service: EmbeddingService):
        self.index = index
        self.embeddings = embedding_service

    def retrieve(self, query_text: str, k: int) -> Tuple[List[RetrievalHit], List[str]]:
        (vector,) = self.embeddings.embed([query_text])
        hits = search(self.index, vector, k)
        return hits, [self.index.chunk(h.chunk_id).text for h in hits]
