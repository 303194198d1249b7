"""
Jerarquía de errores de FhirMap
- Un error base (FhirMapError) y una familia por módulo
- Cada error guarda contexto estructurado (fila, posición, intentos...) además del mensaje
- El CLI traduce estas familias a códigos de salida
"""
from typing import Iterable, Optional


class FhirMapError(Exception):
    """Error base de la aplicación"""


class ConfigurationError(FhirMapError):
    pass


# ------------------------------
# Diccionarios de datos
# ------------------------------
class DictionaryError(FhirMapError):
    pass


class MissingColumn(DictionaryError):
    def __init__(self, column: str, source: Optional[str] = None):
        self.column = column
        self.source = source
        where = f" en {source}" if source else ""
        super().__init__(f"Falta la columna obligatoria '{column}'{where}")


class DuplicateKey(DictionaryError):
    def __init__(self, dataset_name: str, field_name: str, row_number: int):
        self.key = (dataset_name, field_name)
        self.row_number = row_number
        super().__init__(
            f"Clave duplicada ({dataset_name}, {field_name}) en la fila {row_number}"
        )


class EmptyFieldName(DictionaryError):
    def __init__(self, row_number: int):
        self.row_number = row_number
        super().__init__(f"field_name vacío en la fila {row_number}")


# ------------------------------
# Corpus FHIR y rutas
# ------------------------------
class CorpusError(FhirMapError):
    pass


class MalformedRecord(CorpusError):
    def __init__(self, record_index: int, reason: str):
        self.record_index = record_index
        self.reason = reason
        super().__init__(f"Registro {record_index} mal formado: {reason}")


class EmptyCorpus(CorpusError):
    def __init__(self, source: Optional[str] = None):
        self.source = source
        super().__init__(f"El corpus está vacío{f' ({source})' if source else ''}")


class PathError(FhirMapError):
    pass


class EmptyPath(PathError):
    def __init__(self):
        super().__init__("La ruta FHIR está vacía")


class BadBlock(PathError):
    def __init__(self, block: str, position: int, text: str):
        self.block = block
        self.position = position
        self.text = text
        super().__init__(f"Bloque inválido '{block}' en la posición {position} de '{text}'")


# ------------------------------
# Recuperación (chunks, embeddings, índice)
# ------------------------------
class RetrievalError(FhirMapError):
    pass


class BadParams(RetrievalError):
    pass


class DimensionMismatch(RetrievalError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"Dimensión inconsistente: se esperaba {expected}, llegó {got}")


class CountMismatch(RetrievalError):
    def __init__(self, chunks: int, vectors: int):
        self.chunks = chunks
        self.vectors = vectors
        super().__init__(f"{chunks} chunks pero {vectors} vectores")


class DuplicateChunkId(RetrievalError):
    def __init__(self, chunk_id: str):
        self.chunk_id = chunk_id
        super().__init__(f"chunk_id duplicado: {chunk_id}")


class ZeroVector(RetrievalError):
    def __init__(self, position: int):
        self.position = position
        super().__init__(f"Vector nulo en la posición {position}; no se puede normalizar")


class EmbedderUnavailable(RetrievalError):
    def __init__(self, message: str, attempts: int = 0):
        self.attempts = attempts
        super().__init__(message)


class MissingIndex(RetrievalError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"No existe un índice en {path}; ejecute primero 'index-build'")


# ------------------------------
# Generación
# ------------------------------
class GenerationError(FhirMapError):
    pass


class TransportFailure(GenerationError):
    """Fallo transitorio (red, 429, 5xx). Se reintenta."""

    def __init__(self, message: str, attempts: int = 1):
        self.attempts = attempts
        super().__init__(message)


class ServiceRefusal(GenerationError):
    """El servicio rechazó la petición (4xx no reintentable)."""

    def __init__(self, status_code: int, detail: str = ""):
        self.status_code = status_code
        self.detail = detail
        super().__init__(f"El servicio rechazó la petición ({status_code}): {detail}")


# ------------------------------
# Evaluación
# ------------------------------
class EvaluationError(FhirMapError):
    pass


class ContractViolation(EvaluationError):
    pass


class EmptyDataset(EvaluationError):
    def __init__(self, dataset_name: Optional[str] = None, detail: str = ""):
        self.dataset_name = dataset_name
        message = f"Dataset sin estructuras para evaluar: {dataset_name or '-'}"
        super().__init__(f"{message} ({detail})" if detail else message)


class DuplicatePrediction(EvaluationError):
    def __init__(self, key: tuple, source: Optional[str] = None):
        self.key = key
        self.source = source
        where = f" en {source}" if source else ""
        super().__init__(f"Predicción repetida para ({key[0]}, {key[1]}){where}")


class InconsistentIterations(EvaluationError):
    pass


class JoinError(EvaluationError):
    def __init__(self, missing_keys: Iterable[tuple]):
        self.missing_keys = sorted(missing_keys)
        listed = ", ".join(f"({d}, {f})" for d, f in self.missing_keys)
        super().__init__(f"Claves predichas sin ground truth: {listed}")


# ------------------------------
# Pipeline
# ------------------------------
class PipelineError(FhirMapError):
    pass


class MissingReport(PipelineError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"No hay reporte de puntajes en {path}; ejecute primero 'evaluate'")
