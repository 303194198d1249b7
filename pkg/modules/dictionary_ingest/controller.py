# modules/dictionary_ingest/controller.py
"""
Controlador de Diccionarios de Datos
- Lee diccionarios en tabla delimitada (dataset_name, field_name, field_description[, code_values])
- Valida claves (nombre de campo obligatorio, sin duplicados)
- Serializa de vuelta al mismo formato
- Arma el texto de consulta que se embebe para cada campo
"""
import csv
import io
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

from database.models import DataDictionary, DictionaryEntry
from utils.errors import DictionaryError, DuplicateKey, EmptyFieldName, MissingColumn

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DictionaryFormat:
    delimiter: str = ","
    dataset_column: str = "dataset_name"
    field_column: str = "field_name"
    description_column: str = "field_description"
    codes_column: str = "code_values"
    include_code_values: bool = True

    def required_columns(self):
        return (self.dataset_column, self.field_column, self.description_column)


# ------------------------------
# Valores codificados
# ------------------------------
def parse_code_values(cell: str) -> Optional[Tuple[Tuple[str, str], ...]]:
    """'1=Male;2=Female' -> (('1', 'Male'), ('2', 'Female'))"""
    pairs = []
    for piece in (cell or "").split(";"):
        piece = piece.strip()
        if not piece:
            continue
        code, _, meaning = piece.partition("=")
        pairs.append((code.strip(), meaning.strip()))
    return tuple(pairs) if pairs else None


def render_code_values(code_values) -> str:
    return ";".join(f"{code}={meaning}" for code, meaning in (code_values or ()))


# ------------------------------
# Parseo / serialización
# ------------------------------
def parse_dictionary(content: str, fmt: DictionaryFormat = DictionaryFormat()) -> DataDictionary:
    """
    Una DictionaryEntry por fila de datos, en el orden del archivo.
    Los números de fila de los errores cuentan el encabezado como fila 1.
    """
    reader = csv.reader(io.StringIO(content), delimiter=fmt.delimiter)
    header = next(reader, None)
    if header is None:
        raise MissingColumn(fmt.field_column)
    header = [h.strip() for h in header]
    for column in fmt.required_columns():
        if column not in header:
            raise MissingColumn(column)

    idx_dataset = header.index(fmt.dataset_column)
    idx_field = header.index(fmt.field_column)
    idx_desc = header.index(fmt.description_column)
    idx_codes = header.index(fmt.codes_column) if fmt.codes_column in header else None

    def cell(row, i):
        return row[i].strip() if i is not None and i < len(row) else ""

    entries: List[DictionaryEntry] = []
    seen = {}
    dataset_name = None
    for row_number, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        field_name = cell(row, idx_field)
        if not field_name:
            raise EmptyFieldName(row_number)
        dataset = cell(row, idx_dataset)
        if dataset_name is None:
            dataset_name = dataset
        elif dataset != dataset_name:
            raise DictionaryError(
                f"Fila {row_number}: dataset '{dataset}' distinto de '{dataset_name}'; "
                "use un archivo por dataset"
            )
        key = (dataset, field_name)
        if key in seen:
            raise DuplicateKey(dataset, field_name, row_number)
        seen[key] = row_number
        entries.append(DictionaryEntry(
            dataset_name=dataset,
            field_name=field_name,
            field_description=cell(row, idx_desc),
            code_values=parse_code_values(cell(row, idx_codes)) if idx_codes is not None else None,
        ))

    return DataDictionary(dataset_name=dataset_name or "", entries=tuple(entries))


def render_dictionary(dictionary: DataDictionary, fmt: DictionaryFormat = DictionaryFormat()) -> str:
    """Inverso de parse_dictionary (la columna de códigos solo si algún campo tiene códigos)"""
    with_codes = any(e.code_values for e in dictionary.entries)
    header = list(fmt.required_columns())
    if with_codes:
        header.append(fmt.codes_column)

    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter=fmt.delimiter, lineterminator="\n")
    writer.writerow(header)
    for e in dictionary.entries:
        row = [e.dataset_name, e.field_name, e.field_description]
        if with_codes:
            row.append(render_code_values(e.code_values))
        writer.writerow(row)
    return buffer.getvalue()


# ------------------------------
# Consulta para recuperación
# ------------------------------
def entry_to_query(entry: DictionaryEntry, include_code_values: bool = True) -> str:
    lines = [f"Field name: {entry.field_name}"]
    if entry.field_description:
        lines.append(f"Description: {entry.field_description}")
    if include_code_values and entry.code_values:
        lines.append("Coded values: " + "; ".join(f"{c}={m}" for c, m in entry.code_values))
    return "\n".join(lines)


class DictionaryController:
    def __init__(self, fmt: DictionaryFormat = DictionaryFormat()):
        self.fmt = fmt

    def load_file(self, path: str) -> DataDictionary:
        """Leer un diccionario UTF-8 (con o sin BOM)"""
        with open(path, "r", encoding="utf-8-sig", newline="") as f:
            content = f.read()
        try:
            dictionary = parse_dictionary(content, self.fmt)
        except DictionaryError as e:
            e.source = path
            raise
        logger.info("Diccionario %s: %d campos (%s)", dictionary.dataset_name or "-", len(dictionary), path)
        return dictionary

    def load_all(self, paths: Iterable[str]) -> List[DataDictionary]:
        dictionaries = [self.load_file(p) for p in paths]
        names = [d.dataset_name for d in dictionaries if d.dataset_name]
        repeated = {n for n in names if names.count(n) > 1}
        if repeated:
            raise DictionaryError(f"Dataset repetido en varios archivos: {', '.join(sorted(repeated))}")
        return dictionaries

    def query_for(self, entry: DictionaryEntry) -> str:
        return entry_to_query(entry, self.fmt.include_code_values)
