# modules/evaluation/controller.py
"""
Controlador de Evaluación
- Clasifica cada predicción: AbsoluteMatch / PartialMatch / Mismatch
- Crédito parcial = Jaccard sobre los conjuntos de bloques (recurso incluido)
- Score = (S + P) / N * 100 ; Resource Match Score = (S + K) / N * 100
- Agrega varias iteraciones: media y desviación estándar muestral, fila Total agrupada
"""
import csv
import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from database.models import (
    AggregateRow, DatasetScore, EntryKey, EvaluationPair, MappingPath, MatchClass, RunAggregate,
)
from modules.fhir_corpus.controller import parse_path
from utils.errors import (
    ContractViolation, DuplicatePrediction, EmptyDataset, EvaluationError, InconsistentIterations,
    JoinError, MissingColumn, PathError,
)

logger = logging.getLogger(__name__)

TOTAL = "Total"
TABLE_COLUMNS = ("dataset_name", "field_name", "fhir_mapping")


# ------------------------------
# Clasificación y puntajes
# ------------------------------
def classify(pred: Optional[MappingPath], gt: MappingPath) -> MatchClass:
    if pred is None:
        return MatchClass.MISMATCH
    if pred.blocks == gt.blocks:
        return MatchClass.ABSOLUTE
    if pred.resource() == gt.resource():
        return MatchClass.PARTIAL
    return MatchClass.MISMATCH


def jaccard(pred: MappingPath, gt: MappingPath) -> float:
    a, b = set(pred.blocks), set(gt.blocks)
    return len(a & b) / len(a | b)


def partial_credit(pred: MappingPath, gt: MappingPath) -> float:
    if classify(pred, gt) is not MatchClass.PARTIAL:
        raise ContractViolation(f"partial_credit solo aplica a PartialMatch: {pred} vs {gt}")
    return jaccard(pred, gt)


def score_dataset(pairs: Sequence[EvaluationPair], dataset_name: Optional[str] = None) -> DatasetScore:
    if not pairs:
        raise EmptyDataset(dataset_name)
    keys = set()
    S = K = 0
    P = 0.0
    for pair in pairs:
        if pair.entry_key in keys:
            raise ContractViolation(f"Clave evaluada dos veces: {pair.entry_key}")
        keys.add(pair.entry_key)
        match = classify(pair.pred, pair.gt)
        if match is MatchClass.ABSOLUTE:
            S += 1
        elif match is MatchClass.PARTIAL:
            K += 1
            P += partial_credit(pair.pred, pair.gt)
    name = dataset_name if dataset_name is not None else pairs[0].entry_key[0]
    return DatasetScore(dataset_name=name, N=len(pairs), S=S, K=K, P=P)


def pool_scores(scores: Iterable[DatasetScore], name: str = TOTAL) -> DatasetScore:
    scores = list(scores)
    if sum(s.N for s in scores) == 0:
        raise EmptyDataset(name, "no hay estructuras evaluables en la iteración")
    return DatasetScore(
        dataset_name=name,
        N=sum(s.N for s in scores),
        S=sum(s.S for s in scores),
        K=sum(s.K for s in scores),
        P=math.fsum(s.P for s in scores),
    )


def _mean_std(values: List[float]) -> Tuple[float, float]:
    if all(v == values[0] for v in values):
        return values[0], 0.0
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if len(values) > 1 else 0.0
    return math.fsum(values) / len(values), std


def _aggregate_row(name: str, scores: List[DatasetScore]) -> AggregateRow:
    score_mean, score_std = _mean_std([s.score for s in scores])
    rms_mean, rms_std = _mean_std([s.resource_match_score for s in scores])
    return AggregateRow(name, score_mean, score_std, rms_mean, rms_std)


def aggregate(iteration_scores: Sequence[Dict[str, DatasetScore]]) -> RunAggregate:
    """iteration_scores: una tabla {dataset: DatasetScore} por iteración"""
    if not iteration_scores:
        raise InconsistentIterations("No hay iteraciones para agregar")
    datasets = set(iteration_scores[0])
    for i, table in enumerate(iteration_scores, start=1):
        if set(table) != datasets:
            raise InconsistentIterations(
                f"La iteración {i} cubre {sorted(table)} y la 1 cubre {sorted(datasets)}"
            )
    if not datasets:
        raise EmptyDataset(detail="ninguna iteración tiene datasets con estructuras evaluables")
    rows = tuple(
        _aggregate_row(name, [table[name] for table in iteration_scores])
        for name in sorted(datasets)
    )
    total = _aggregate_row(TOTAL, [pool_scores(table.values()) for table in iteration_scores])
    return RunAggregate(rows=rows, total=total, iteration_count=len(iteration_scores))


# ------------------------------
# Tablas de mapeo y ground truth
# ------------------------------
def _numbered_rows(path: str) -> List[Tuple[int, str, str, str]]:
    """(línea del archivo, dataset_name, field_name, fhir_mapping); se saltan filas en blanco"""
    with open(path, "r", encoding="utf-8-sig", newline="") as f:
        reader = csv.DictReader(f)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for column in TABLE_COLUMNS:
            if column not in header:
                raise MissingColumn(column, path)
        reader.fieldnames = header
        rows = []
        for row in reader:
            if not any((v or "").strip() for v in row.values() if isinstance(v, str)):
                continue
            rows.append((
                reader.line_num, row["dataset_name"].strip(), row["field_name"].strip(),
                (row["fhir_mapping"] or "").strip(),
            ))
        return rows


def read_mapping_rows(path: str) -> List[Tuple[str, str, str]]:
    """Filas (dataset_name, field_name, fhir_mapping) de una tabla con la forma de salida"""
    return [(dataset, field, mapping) for _, dataset, field, mapping in _numbered_rows(path)]


def load_ground_truth(path: str) -> Dict[EntryKey, MappingPath]:
    truth: Dict[EntryKey, MappingPath] = {}
    for line, dataset, field, mapping in _numbered_rows(path):
        key = (dataset, field)
        if key in truth:
            raise EvaluationError(f"{path}: ground truth duplicado para {key} (línea {line})")
        try:
            truth[key] = parse_path(mapping)
        except PathError as e:
            raise EvaluationError(f"{path}: ground truth inválido en la línea {line}: {e}") from e
    return truth


def _parse_prediction(key: EntryKey, text: str) -> Optional[MappingPath]:
    if not text:
        return None
    try:
        return parse_path(text)
    except PathError as e:
        logger.warning("Predicción ilegible para %s (%s); cuenta como Mismatch", key, e)
        return None


def join_pairs(predictions: Sequence[Tuple[str, str, str]], ground_truth: Dict[EntryKey, MappingPath],
               exclude_keys: Iterable[EntryKey] = ()) -> Dict[str, List[EvaluationPair]]:
    """
    Une predicciones y ground truth por (dataset_name, field_name), agrupado por dataset.
    Estructuras del ground truth sin predicción cuentan como predicción ausente.
    Una clave predicha dos veces es un error (DuplicatePrediction).
    """
    excluded: Set[EntryKey] = set(exclude_keys)
    predicted: Dict[EntryKey, str] = {}
    seen: Set[EntryKey] = set()
    for d, f, text in predictions:
        if (d, f) in seen:
            raise DuplicatePrediction((d, f))
        seen.add((d, f))
        if (d, f) not in excluded:
            predicted[(d, f)] = text
    unknown = [k for k in predicted if k not in ground_truth]
    if unknown:
        raise JoinError(unknown)

    datasets = {d for d, _ in predicted}
    grouped: Dict[str, List[EvaluationPair]] = {}
    for key, gt in ground_truth.items():
        if key[0] not in datasets or key in excluded:
            continue
        pred = _parse_prediction(key, predicted.get(key, ""))
        grouped.setdefault(key[0], []).append(EvaluationPair(entry_key=key, pred=pred, gt=gt))
    return grouped


def score_iteration(grouped: Dict[str, List[EvaluationPair]]) -> Dict[str, DatasetScore]:
    return {name: score_dataset(pairs, name) for name, pairs in grouped.items()}
