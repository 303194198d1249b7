# modules/mapping_engine/controller.py
"""
Controlador de Mapeo (RAG)
- Consulta del campo -> top-k chunks -> prompt -> generación -> ruta FHIR validada
- Reintentos con backoff exponencial ante fallos transitorios del servicio
- Un fallo de una entrada queda registrado en su resultado; el lote sigue
"""
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import backoff

from database.models import (
    DictionaryEntry, FhirSchema, GenerationRequest, MappingPath, MappingResult,
)
from modules.dictionary_ingest.controller import entry_to_query
from modules.fhir_corpus.controller import normalize_resource_case, parse_path, validate_path
from modules.mapping_engine.clients import LlmClient
from modules.mapping_engine.prompt import DEFAULT_TEMPLATE, SENTINEL, PromptTemplate, build_prompt
from modules.retrieval.controller import Retriever
from utils.errors import PathError, RetrievalError, ServiceRefusal, TransportFailure

logger = logging.getLogger(__name__)

# ruta con al menos dos bloques, no pegada a otros identificadores;
# el recurso tiene 2+ caracteres para no tomar abreviaturas como "e.g" o "i.e"
PATH_TOKEN_RE = re.compile(
    r"(?<![A-Za-z0-9_.])[A-Za-z][A-Za-z0-9]+(?:\.[A-Za-z][A-Za-z0-9]*)+(?![A-Za-z0-9_])"
)


@dataclass(frozen=True)
class MappingSettings:
    k: int = 20
    temperature: float = 0.0
    max_output_tokens: int = 256
    model_name: str = ""
    max_attempts: int = 3
    backoff_factor: float = 0.5
    parallelism: int = 4
    include_code_values: bool = True
    normalize_resource_case: bool = True


# ------------------------------
# Generación y parseo
# ------------------------------
def generate(request: GenerationRequest, client: LlmClient, max_attempts: int = 3,
             backoff_factor: float = 0.5) -> str:
    """TransportFailure se reintenta hasta max_attempts; ServiceRefusal sale de inmediato"""
    call = backoff.on_exception(
        backoff.expo, TransportFailure,
        max_tries=max(1, max_attempts), factor=backoff_factor, jitter=None, logger=logger,
    )(client.complete)
    try:
        return call(request)
    except TransportFailure as e:
        raise TransportFailure(f"Sin respuesta tras {max_attempts} intentos: {e}", attempts=max_attempts) from e


def parse_response(raw: str) -> Tuple[Optional[MappingPath], Optional[str]]:
    """
    1) línea que empieza con 'FHIR_MAPPING:'
    2) si no, el primer token con forma de ruta (>= 2 bloques) en todo el texto
    Devuelve (ruta, None) o (None, diagnóstico).
    """
    raw = raw or ""
    for line in raw.splitlines():
        stripped = line.strip()
        if stripped.startswith(SENTINEL):
            remainder = stripped[len(SENTINEL):].strip().strip("`'\"").strip()
            try:
                return parse_path(remainder), None
            except PathError:
                break

    match = PATH_TOKEN_RE.search(raw)
    if match:
        return MappingPath(tuple(match.group(0).split("."))), None
    return None, f"Sin ruta FHIR reconocible en la respuesta: {raw!r}"


class MappingController:
    def __init__(self, schema: FhirSchema, retriever: Retriever, client: LlmClient,
                 settings: MappingSettings = MappingSettings(),
                 template: PromptTemplate = DEFAULT_TEMPLATE):
        if settings.k < 1:
            raise ValueError("k debe ser >= 1")
        self.schema = schema
        self.retriever = retriever
        self.client = client
        self.settings = settings
        self.template = template.validate()

    def map_entry(self, entry: DictionaryEntry) -> MappingResult:
        s = self.settings
        key = entry.key

        try:
            hits, texts = self.retriever.retrieve(entry_to_query(entry, s.include_code_values), s.k)
        except RetrievalError as e:
            logger.warning("Recuperación fallida para %s: %s", key, e)
            return MappingResult(entry_key=key, parse_error=f"embedder: {e}", failure="embedder")
        chunk_ids = tuple(h.chunk_id for h in hits)

        prompt = build_prompt(self.template, texts, entry, s.include_code_values)
        request = GenerationRequest(
            prompt=prompt, temperature=s.temperature, max_output_tokens=s.max_output_tokens,
            model_name=s.model_name, entry_key=key,
        )
        try:
            raw = generate(request, self.client, s.max_attempts, s.backoff_factor)
        except TransportFailure as e:
            logger.warning("Generación fallida para %s: %s", key, e)
            return MappingResult(entry_key=key, parse_error=f"transport: {e}",
                                 retrieved_chunk_ids=chunk_ids, failure="transport")
        except ServiceRefusal as e:
            logger.warning("Servicio rechazó %s: %s", key, e)
            return MappingResult(entry_key=key, parse_error=f"refusal: {e}",
                                 retrieved_chunk_ids=chunk_ids, failure="refusal")

        path, error = parse_response(raw)
        if path is None:
            return MappingResult(entry_key=key, raw_response=raw, parse_error=error,
                                 retrieved_chunk_ids=chunk_ids)
        if s.normalize_resource_case:
            path = normalize_resource_case(path, self.schema)
        return MappingResult(
            entry_key=key,
            raw_response=raw,
            parsed_path=path,
            validation=validate_path(path, self.schema),
            retrieved_chunk_ids=chunk_ids,
        )

    def map_batch(self, entries: Sequence[DictionaryEntry]) -> List[MappingResult]:
        """Resultados en el orden de entrada, sin importar el orden de terminación"""
        if self.settings.parallelism <= 1 or len(entries) <= 1:
            return [self.map_entry(e) for e in entries]
        with ThreadPoolExecutor(max_workers=self.settings.parallelism) as pool:
            return list(pool.map(self.map_entry, entries))
