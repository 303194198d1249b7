"""
Modelos de datos para FhirMap
- Entradas de diccionario de datos (lo que se mapea)
- Documentación FHIR y rutas de mapeo (a dónde se mapea)
- Chunks, hits de búsqueda, resultados de mapeo y puntajes
Todos los modelos son inmutables; se pueden compartir entre hilos.
"""
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Optional, Tuple

from utils.errors import BadBlock, EmptyPath

# letra seguida de letras/dígitos
IDENTIFIER_RE = re.compile(r"[A-Za-z][A-Za-z0-9]*")

EntryKey = Tuple[str, str]


# ------------------------------
# Diccionario de datos
# ------------------------------
@dataclass(frozen=True)
class DictionaryEntry:
    dataset_name: str
    field_name: str
    field_description: str = ""
    code_values: Optional[Tuple[Tuple[str, str], ...]] = None

    @property
    def key(self) -> EntryKey:
        return (self.dataset_name, self.field_name)


@dataclass(frozen=True)
class DataDictionary:
    dataset_name: str
    entries: Tuple[DictionaryEntry, ...] = ()

    def __len__(self):
        return len(self.entries)


# ------------------------------
# Corpus FHIR
# ------------------------------
@dataclass(frozen=True)
class ElementDoc:
    resource_name: str
    element_path: str
    description: str

    @property
    def full_path(self) -> str:
        if self.element_path:
            return f"{self.resource_name}.{self.element_path}"
        return self.resource_name

    @property
    def doc_id(self) -> str:
        return self.full_path


@dataclass(frozen=True)
class FhirSchema:
    resources: FrozenSet[str]
    element_docs: Tuple[ElementDoc, ...]
    version_label: str = ""
    _elements: FrozenSet[Tuple[str, str]] = field(init=False, repr=False, compare=False)
    _by_lower: Dict[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_elements",
            frozenset((d.resource_name, d.element_path) for d in self.element_docs),
        )
        object.__setattr__(self, "_by_lower", {r.lower(): r for r in sorted(self.resources)})

    def has_resource(self, name: str) -> bool:
        return name in self.resources

    def has_element(self, resource_name: str, element_path: str) -> bool:
        return (resource_name, element_path) in self._elements

    def find_resource(self, name: str) -> Optional[str]:
        """Búsqueda sin distinguir mayúsculas; devuelve el nombre canónico"""
        return self._by_lower.get((name or "").lower())

    def elements_of(self, resource_name: str):
        return [d for d in self.element_docs if d.resource_name == resource_name]


@dataclass(frozen=True)
class MappingPath:
    blocks: Tuple[str, ...]

    def __post_init__(self):
        if not self.blocks:
            raise EmptyPath()
        text = ".".join(self.blocks)
        for position, block in enumerate(self.blocks, start=1):
            if not IDENTIFIER_RE.fullmatch(block or ""):
                raise BadBlock(block, position, text)

    def resource(self) -> str:
        return self.blocks[0]

    @property
    def element_path(self) -> str:
        return ".".join(self.blocks[1:])

    @property
    def text(self) -> str:
        return ".".join(self.blocks)

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class ValidationResult:
    resource_known: bool
    element_known: bool

    def to_record(self):
        return {"resource_known": self.resource_known, "element_known": self.element_known}


# ------------------------------
# Recuperación
# ------------------------------
@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    span: Tuple[int, int]

    def to_record(self):
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "start": self.span[0],
            "end": self.span[1],
            "text": self.text,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]):
        return cls(
            chunk_id=record["chunk_id"],
            doc_id=record["doc_id"],
            text=record["text"],
            span=(int(record["start"]), int(record["end"])),
        )


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    similarity: float
    rank: int


# ------------------------------
# Generación y mapeo
# ------------------------------
@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 256
    model_name: str = ""
    # metadato para clientes simulados; no viaja al servicio remoto
    entry_key: Optional[EntryKey] = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("El prompt no puede estar vacío")
        if self.temperature < 0:
            raise ValueError("La temperatura debe ser >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens debe ser positivo")


@dataclass(frozen=True)
class MappingResult:
    entry_key: EntryKey
    raw_response: str = ""
    parsed_path: Optional[MappingPath] = None
    parse_error: Optional[str] = None
    validation: Optional[ValidationResult] = None
    retrieved_chunk_ids: Tuple[str, ...] = ()
    # 'embedder' | 'transport' | 'refusal' cuando el fallo no es de parseo
    failure: Optional[str] = None

    def __post_init__(self):
        if (self.parsed_path is None) == (self.parse_error is None):
            raise ValueError("Debe existir exactamente uno de parsed_path / parse_error")

    @property
    def mapping_text(self) -> str:
        return self.parsed_path.text if self.parsed_path else ""

    def to_record(self) -> Dict[str, Any]:
        return {
            "dataset_name": self.entry_key[0],
            "field_name": self.entry_key[1],
            "fhir_mapping": self.mapping_text,
            "raw_response": self.raw_response,
            "parse_error": self.parse_error,
            "failure": self.failure,
            "validation": self.validation.to_record() if self.validation else None,
            "retrieved_chunk_ids": list(self.retrieved_chunk_ids),
        }


# ------------------------------
# Evaluación
# ------------------------------
class MatchClass(Enum):
    ABSOLUTE = "AbsoluteMatch"
    PARTIAL = "PartialMatch"
    MISMATCH = "Mismatch"


@dataclass(frozen=True)
class EvaluationPair:
    entry_key: EntryKey
    pred: Optional[MappingPath]
    gt: MappingPath


@dataclass(frozen=True)
class DatasetScore:
    dataset_name: str
    N: int
    S: int
    K: int
    P: float

    @property
    def mismatches(self) -> int:
        return self.N - self.S - self.K

    @property
    def score(self) -> float:
        return (self.S + self.P) / self.N * 100

    @property
    def resource_match_score(self) -> float:
        return (self.S + self.K) / self.N * 100


@dataclass(frozen=True)
class AggregateRow:
    dataset_name: str
    score_mean: float
    score_std: float
    resource_match_mean: float
    resource_match_std: float


@dataclass(frozen=True)
class RunAggregate:
    rows: Tuple[AggregateRow, ...]
    total: AggregateRow
    iteration_count: int

    def row(self, dataset_name: str) -> AggregateRow:
        if dataset_name == self.total.dataset_name:
            return self.total
        for r in self.rows:
            if r.dataset_name == dataset_name:
                return r
        raise KeyError(dataset_name)
