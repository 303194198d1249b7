# modules/fhir_corpus/controller.py
"""
Controlador del Corpus FHIR
- Carga el corpus recurso/elemento/descripción (un registro JSON por línea)
- Renderiza un documento por elemento para la base vectorial
- Gramática de rutas con puntos (Resource.element.subelement)
- Validación de rutas predichas contra el esquema: recurso estricto, elemento indulgente
"""
import hashlib
import json
import logging
from typing import Any, Dict, Iterable, List, Tuple, Union

from database.models import IDENTIFIER_RE, ElementDoc, FhirSchema, MappingPath, ValidationResult
from utils.errors import EmptyCorpus, EmptyPath, MalformedRecord

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("resource", "element", "description")


# ------------------------------
# Carga del corpus
# ------------------------------
def _iter_records(content: Union[str, Iterable[Dict[str, Any]]]):
    if isinstance(content, str):
        index = 0
        for line in content.splitlines():
            if not line.strip():
                continue
            index += 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(index, f"JSON inválido ({e.msg})") from e
            yield index, record
    else:
        for index, record in enumerate(content, start=1):
            yield index, record


def load_corpus(content, version_label: str = "") -> FhirSchema:
    """
    content: texto con un registro JSON por línea, o un iterable de dicts.
    Índices de registro 1-based, sin contar líneas en blanco.
    """
    docs: List[ElementDoc] = []
    resources = set()
    seen = set()
    for index, record in _iter_records(content):
        if not isinstance(record, dict):
            raise MalformedRecord(index, "el registro no es un objeto")
        for name in REQUIRED_FIELDS:
            if name not in record or record[name] is None:
                raise MalformedRecord(index, f"falta el campo '{name}'")
        resource = str(record["resource"]).strip()
        element = str(record["element"]).strip()
        description = str(record["description"]).strip()
        if not IDENTIFIER_RE.fullmatch(resource):
            raise MalformedRecord(index, f"nombre de recurso inválido '{resource}'")
        if not description:
            raise MalformedRecord(index, "descripción vacía")
        if (resource, element) in seen:
            raise MalformedRecord(index, f"par recurso-elemento repetido '{resource}.{element}'")
        seen.add((resource, element))
        resources.add(resource)
        docs.append(ElementDoc(resource, element, description))

    if not docs:
        raise EmptyCorpus()
    return FhirSchema(resources=frozenset(resources), element_docs=tuple(docs), version_label=version_label)


def load_corpus_file(path: str, version_label: str = "") -> FhirSchema:
    with open(path, "r", encoding="utf-8") as f:
        content = f.read()
    try:
        schema = load_corpus(content, version_label)
    except EmptyCorpus:
        raise EmptyCorpus(path)
    logger.info("Corpus %s: %d recursos, %d documentos", path, len(schema.resources), len(schema.element_docs))
    return schema


# ------------------------------
# Documentos para embeber
# ------------------------------
def render_document(doc: ElementDoc) -> str:
    return f"Resource: {doc.resource_name}\nElement: {doc.full_path}\nDescription: {doc.description}"


def render_documents(schema: FhirSchema) -> List[Tuple[str, str]]:
    return [(doc.doc_id, render_document(doc)) for doc in schema.element_docs]


def corpus_digest(schema: FhirSchema) -> str:
    h = hashlib.sha256()
    h.update(schema.version_label.encode("utf-8"))
    for doc_id, text in render_documents(schema):
        h.update(b"\x00" + doc_id.encode("utf-8") + b"\x00" + text.encode("utf-8"))
    return h.hexdigest()


# ------------------------------
# Rutas de mapeo
# ------------------------------
def parse_path(text: str) -> MappingPath:
    """'ImagingStudy.series.extension.valueDecimal' -> 4 bloques (posiciones 1-based en errores)"""
    text = (text or "").strip()
    if not text:
        raise EmptyPath()
    return MappingPath(tuple(text.split(".")))


def canonical_text(path: MappingPath) -> str:
    return path.text


def validate_path(path: MappingPath, schema: FhirSchema) -> ValidationResult:
    resource_known = schema.has_resource(path.resource())
    element_known = resource_known and schema.has_element(path.resource(), path.element_path)
    return ValidationResult(resource_known=resource_known, element_known=element_known)


def normalize_resource_case(path: MappingPath, schema: FhirSchema) -> MappingPath:
    """'observation.valueQuantity' -> 'Observation.valueQuantity' si el recurso existe con otra capitalización"""
    if schema.has_resource(path.resource()):
        return path
    canonical = schema.find_resource(path.resource())
    if canonical is None:
        return path
    return MappingPath((canonical,) + path.blocks[1:])
