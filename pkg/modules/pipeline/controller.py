# modules/pipeline/controller.py
"""
Controlador del Pipeline
- index-build: corpus -> documentos -> chunks -> embeddings -> índice persistido
- map: una tabla de mapeo + diagnósticos por diccionario y por iteración
- evaluate: predicciones vs ground truth -> reporte agregado + detalle por iteración
- report: resumen legible (consola + report.txt) y gráfico de barras
- manifest.json: config usada, digests, conteos y fallos de cada comando
"""
import csv
import glob
import io
import json
import logging
import os
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

from auth.credentials import CredentialManager
from database.database import Database
from database.models import DataDictionary, MappingResult
from modules.dictionary_ingest.controller import DictionaryController, DictionaryFormat
from modules.evaluation.controller import (
    TABLE_COLUMNS, aggregate, join_pairs, load_ground_truth, read_mapping_rows, score_iteration,
)
from modules.evaluation.views import ScoreReportView
from modules.fhir_corpus.controller import corpus_digest, load_corpus_file
from modules.mapping_engine.clients import LlmClient, MockLlmClient, RemoteLlmClient
from modules.mapping_engine.controller import MappingController, MappingSettings
from modules.mapping_engine.prompt import DEFAULT_TEMPLATE, PromptTemplate, load_template
from modules.retrieval.controller import RetrievalController, Retriever
from modules.retrieval.embedders import (
    Embedder, EmbeddingCache, EmbeddingService, LocalHashEmbedder, RemoteEmbedder,
)
from modules.retrieval.index import index_digest, load_index, persist_index, read_index_manifest
from utils.config import PipelineConfig
from utils.errors import (
    ConfigurationError, DuplicatePrediction, EmptyDataset, EvaluationError, MissingReport,
)
from utils.reports import ReportGenerator

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.txt"
QUERY_MODE = "entry_to_query"

# estados de un comando (el CLI los traduce a códigos de salida)
STATUS_OK = "ok"
STATUS_PARTIAL = "partial"
STATUS_FAILED = "failed"

_ITER_RE = re.compile(r"^(?P<dataset>.+)__iter(?P<n>\d+)\.csv$")


def safe_name(name: str) -> str:
    """Nombre de dataset apto para archivo"""
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name) or "dataset"


def _write_text(path: str, content: str):
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(content)


# ------------------------------
# Manifiesto del run
# ------------------------------
@dataclass
class RunManifest:
    timestamp: str = ""
    config: Dict[str, Any] = field(default_factory=dict)
    corpus_digest: Optional[str] = None
    index_digest: Optional[str] = None
    entry_counts: Dict[str, int] = field(default_factory=dict)
    failure_counts: Dict[str, int] = field(default_factory=dict)
    cache_stats: Dict[str, Any] = field(default_factory=dict)
    query_mode: str = QUERY_MODE
    credentials: Dict[str, Optional[str]] = field(default_factory=dict)
    commands: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        if not os.path.exists(path):
            return cls()
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def record(self, command: str, config: PipelineConfig, **details):
        self.timestamp = datetime.now().isoformat(timespec="seconds")
        self.config = config.snapshot()
        self.commands[command] = {"timestamp": self.timestamp, **details}

    def save(self, path: str):
        _write_text(path, json.dumps(self.__dict__, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class CommandResult:
    status: str
    message: str
    details: Dict[str, Any] = field(default_factory=dict)


# ------------------------------
# Controlador
# ------------------------------
class PipelineController:
    def __init__(self, config: PipelineConfig, credentials: Optional[CredentialManager] = None,
                 embedder: Optional[Embedder] = None, client: Optional[LlmClient] = None):
        """
        embedder / client permiten inyectar dobles en pruebas; si faltan se construyen desde la config
        """
        self.config = config
        self.credentials = credentials or CredentialManager()
        self._embedder = embedder
        self._client = client
        self.view = ScoreReportView(config.number_format)

    @property
    def manifest_path(self) -> str:
        return self.config.out(MANIFEST_FILE)

    def _manifest(self) -> RunManifest:
        return RunManifest.load(self.manifest_path)

    def _fingerprints(self) -> Dict[str, Optional[str]]:
        c = self.credentials
        return {
            "embedder_token": c.fingerprint(c.embedder_token()) if self.config.embedder.mode == "remote" else None,
            "generator_token": c.fingerprint(c.generator_token()) if self.config.generator.mode == "remote" else None,
        }

    # ------------------------------
    # Construcción de colaboradores
    # ------------------------------
    def build_embedder(self) -> Embedder:
        if self._embedder is not None:
            return self._embedder
        e = self.config.embedder
        if e.mode == "local":
            self._embedder = LocalHashEmbedder(e.dimension)
        else:
            token = self.credentials.require(self.credentials.embedder_token(), "embedder")
            self._embedder = RemoteEmbedder(
                endpoint=self.credentials.embedder_endpoint(e.endpoint),
                model=e.model, token=token, dimension=e.dimension, timeout=e.timeout,
            )
        return self._embedder

    def build_client(self) -> LlmClient:
        if self._client is not None:
            return self._client
        g = self.config.generator
        if g.mode == "mock":
            if not g.mock_script:
                raise ConfigurationError("generator.mode=mock necesita generator.mock_script")
            if not os.path.exists(g.mock_script):
                raise ConfigurationError(f"No existe el guion del mock: {g.mock_script}")
            self._client = MockLlmClient.from_file(g.mock_script)
        else:
            token = self.credentials.require(self.credentials.generator_token(), "generator")
            self._client = RemoteLlmClient(
                endpoint=self.credentials.generator_endpoint(g.endpoint),
                model=g.model, token=token, timeout=g.timeout,
            )
        return self._client

    def build_embedding_service(self) -> EmbeddingService:
        embedder = self.build_embedder()
        cache = EmbeddingCache(Database(self.config.cache_path), embedder.model_name)
        e = self.config.embedder
        return EmbeddingService(
            embedder, cache=cache, batch_size=e.batch_size, max_attempts=e.max_attempts,
            backoff_factor=e.backoff_factor, parallelism=self.config.parallelism,
        )

    def template(self) -> PromptTemplate:
        if self.config.prompt_template:
            return load_template(self.config.prompt_template)
        return DEFAULT_TEMPLATE

    def dictionary_format(self) -> DictionaryFormat:
        c = self.config
        return DictionaryFormat(
            delimiter=c.delimiter, dataset_column=c.dataset_column, field_column=c.field_column,
            description_column=c.description_column, codes_column=c.codes_column,
            include_code_values=c.include_code_values,
        )

    def _load_schema(self):
        path = self.config.corpus_path
        if not path or not os.path.exists(path):
            raise FileNotFoundError(f"No existe el corpus FHIR: {path}")
        return load_corpus_file(path, self.config.corpus_version_label)

    # ------------------------------
    # index-build
    # ------------------------------
    def cmd_index_build(self) -> CommandResult:
        c = self.config
        schema = self._load_schema()
        service = self.build_embedding_service()
        try:
            retrieval = RetrievalController(service, c.chunk_size, c.chunk_overlap, c.separators)
            index = retrieval.build_index(schema)
        finally:
            service.close()

        digest_corpus = corpus_digest(schema)
        saved = persist_index(index, c.index_dir, extra={
            "corpus_digest": digest_corpus,
            "embedder_model": service.model_name,
            "config": c.snapshot(),
        })
        stats = service.stats()
        logger.info("Caché de embeddings: %d aciertos, %d fallos (%.0f%%)",
                    stats["hits"], stats["misses"], 100 * stats["hit_rate"])

        manifest = self._manifest()
        manifest.corpus_digest = digest_corpus
        manifest.index_digest = saved["digest"]
        manifest.cache_stats = stats
        manifest.credentials = self._fingerprints()
        manifest.record("index_build", c, chunks=len(index), resources=len(schema.resources),
                        elements=len(schema.element_docs), dimension=index.dimension)
        manifest.save(self.manifest_path)

        message = (f"Índice con {len(index)} chunks (dim {index.dimension}); "
                   f"caché de embeddings {100 * stats['hit_rate']:.0f}% aciertos")
        return CommandResult(STATUS_OK, message, {
            "index_digest": saved["digest"], "corpus_digest": digest_corpus, "cache": stats,
        })

    # ------------------------------
    # map
    # ------------------------------
    def _load_dictionaries(self) -> List[DataDictionary]:
        if not self.config.dictionary_paths:
            raise ConfigurationError("No hay diccionarios configurados ([dictionary] paths)")
        for path in self.config.dictionary_paths:
            if not os.path.exists(path):
                raise FileNotFoundError(f"No existe el diccionario: {path}")
        return DictionaryController(self.dictionary_format()).load_all(self.config.dictionary_paths)

    def mapping_path(self, dataset_name: str, iteration: int) -> str:
        return self.config.out("mappings", f"{safe_name(dataset_name)}__iter{iteration:02d}.csv")

    def diagnostics_path(self, dataset_name: str, iteration: int) -> str:
        return self.config.out("diagnostics", f"{safe_name(dataset_name)}__iter{iteration:02d}.jsonl")

    @staticmethod
    def render_mapping_table(results: List[MappingResult]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for r in results:
            writer.writerow([r.entry_key[0], r.entry_key[1], r.mapping_text])
        return buffer.getvalue()

    @staticmethod
    def render_diagnostics(results: List[MappingResult]) -> str:
        return "".join(
            json.dumps(r.to_record(), sort_keys=True, ensure_ascii=False) + "\n" for r in results
        )

    def cmd_map(self) -> CommandResult:
        c = self.config
        schema = self._load_schema()
        index_manifest = read_index_manifest(c.index_dir)
        index = load_index(c.index_dir)
        if index_manifest.get("corpus_digest") not in (None, corpus_digest(schema)):
            logger.warning("El corpus cambió desde el último index-build; conviene reconstruir el índice")
        dictionaries = self._load_dictionaries()

        service = self.build_embedding_service()
        g = c.generator
        settings = MappingSettings(
            k=c.k, temperature=g.temperature, max_output_tokens=g.max_output_tokens, model_name=g.model,
            max_attempts=g.max_attempts, backoff_factor=g.backoff_factor, parallelism=c.parallelism,
            include_code_values=c.include_code_values, normalize_resource_case=g.normalize_resource_case,
        )
        controller = MappingController(schema, Retriever(index, service), self.build_client(),
                                       settings, self.template())

        # se limpian tablas de corridas anteriores para que evaluate no mezcle iteraciones
        for folder, pattern in (("mappings", "*.csv"), ("diagnostics", "*.jsonl")):
            for old in glob.glob(c.out(folder, pattern)):
                os.remove(old)

        entry_counts = {d.dataset_name: len(d.entries) for d in dictionaries}
        failure_counts = {d.dataset_name: 0 for d in dictionaries}
        service_failures = {d.dataset_name: 0 for d in dictionaries}
        total = failed = 0
        try:
            for iteration in range(1, c.iterations + 1):
                for dictionary in dictionaries:
                    logger.info("Iteración %d/%d: %s (%d campos)", iteration, c.iterations,
                                dictionary.dataset_name, len(dictionary.entries))
                    results = controller.map_batch(dictionary.entries)
                    _write_text(self.mapping_path(dictionary.dataset_name, iteration),
                                self.render_mapping_table(results))
                    _write_text(self.diagnostics_path(dictionary.dataset_name, iteration),
                                self.render_diagnostics(results))
                    for r in results:
                        total += 1
                        if r.parsed_path is None:
                            failed += 1
                            failure_counts[dictionary.dataset_name] += 1
                        if r.failure is not None:
                            service_failures[dictionary.dataset_name] += 1
        finally:
            service.close()

        stats = service.stats()
        manifest = self._manifest()
        manifest.index_digest = index_manifest.get("digest")
        manifest.corpus_digest = index_manifest.get("corpus_digest", manifest.corpus_digest)
        manifest.entry_counts = entry_counts
        manifest.failure_counts = failure_counts
        manifest.cache_stats = stats
        manifest.credentials = self._fingerprints()
        manifest.record("map", c, iterations=c.iterations, mappings=total, failed=failed,
                        service_failures=service_failures, llm_invocations=controller.client.invocations)
        manifest.save(self.manifest_path)

        if total and failed == total:
            status = STATUS_FAILED
        elif failed:
            status = STATUS_PARTIAL
        else:
            status = STATUS_OK
        message = (f"{total} mapeos en {c.iterations} iteración(es) sobre {len(dictionaries)} "
                   f"diccionario(s); {failed} sin ruta")
        if failed:
            logger.warning(message)
        return CommandResult(status, message, {
            "entry_counts": entry_counts, "failure_counts": failure_counts, "total": total, "failed": failed,
        })

    # ------------------------------
    # evaluate
    # ------------------------------
    def prediction_files(self) -> Dict[int, List[str]]:
        """{iteración: [tablas de mapeo]} a partir de mappings/<dataset>__iterNN.csv"""
        found: Dict[int, List[str]] = {}
        for path in sorted(glob.glob(self.config.out("mappings", "*.csv"))):
            match = _ITER_RE.match(os.path.basename(path))
            if match:
                found.setdefault(int(match.group("n")), []).append(path)
        return dict(sorted(found.items()))

    def scores_path(self) -> str:
        return self.config.out("evaluation", "scores.csv")

    def iterations_path(self) -> str:
        return self.config.out("evaluation", "iterations.csv")

    def cmd_evaluate(self) -> CommandResult:
        c = self.config
        if not c.ground_truth_path:
            raise ConfigurationError("Falta [pipeline] ground_truth_path")
        if not os.path.exists(c.ground_truth_path):
            raise FileNotFoundError(f"No existe el ground truth: {c.ground_truth_path}")
        files = self.prediction_files()
        if not files:
            raise EvaluationError(f"No hay tablas de mapeo en {c.out('mappings')}; ejecute 'map' primero")

        truth = load_ground_truth(c.ground_truth_path)
        excluded: Tuple = (self.template().example_key,) if c.exclude_one_shot_from_evaluation else ()
        iteration_scores = []
        for iteration, paths in files.items():
            predictions = []
            origin: Dict[Tuple[str, str], str] = {}
            for path in paths:
                for row in read_mapping_rows(path):
                    key = (row[0], row[1])
                    if key in origin:
                        where = path if origin[key] == path else f"{origin[key]} y {path}"
                        raise DuplicatePrediction(key, where)
                    origin[key] = path
                    predictions.append(row)
            grouped = join_pairs(predictions, truth, excluded)
            if not grouped:
                raise EmptyDataset(detail=f"la iteración {iteration} no tiene estructuras evaluables")
            iteration_scores.append(score_iteration(grouped))
            logger.info("Iteración %d evaluada: %s", iteration, ", ".join(sorted(grouped)))

        run = aggregate(iteration_scores)
        _write_text(self.scores_path(), self.view.render_report(run))
        _write_text(self.iterations_path(), self.view.render_iterations(iteration_scores))

        manifest = self._manifest()
        manifest.record("evaluate", c, iterations=run.iteration_count,
                        datasets=[r.dataset_name for r in run.rows],
                        total_score=run.total.score_mean,
                        total_resource_match=run.total.resource_match_mean,
                        excluded_keys=[list(k) for k in excluded])
        manifest.save(self.manifest_path)
        return CommandResult(
            STATUS_OK,
            f"Total: Score {self.view.fmt(run.total.score_mean)}% ± {self.view.fmt(run.total.score_std)}, "
            f"Resource Match {self.view.fmt(run.total.resource_match_mean)}% ± "
            f"{self.view.fmt(run.total.resource_match_std)}",
            {"aggregate": run},
        )

    # ------------------------------
    # report
    # ------------------------------
    def report_metadata(self, manifest: RunManifest) -> Dict[str, str]:
        """Metadatos estables del run (sin marcas de tiempo)"""
        c = self.config
        meta = {
            "corpus": f"{c.corpus_path} [{c.corpus_version_label}]" if c.corpus_version_label else c.corpus_path,
            "corpus_digest": manifest.corpus_digest or "-",
            "index_digest": manifest.index_digest or "-",
            "embedder": f"{c.embedder.mode}:{c.embedder.model if c.embedder.mode == 'remote' else c.embedder.dimension}",
            "generator": f"{c.generator.mode}:{c.generator.model} (temperature {c.generator.temperature})",
            "k": str(c.k),
            "chunks": f"size {c.chunk_size}, overlap {c.chunk_overlap}",
            "iterations": str(c.iterations),
            "query_mode": manifest.query_mode,
        }
        for name in sorted(manifest.entry_counts):
            meta[f"entries[{name}]"] = str(manifest.entry_counts[name])
        for name in sorted(manifest.failure_counts):
            meta[f"failures[{name}]"] = str(manifest.failure_counts[name])
        return meta

    def cmd_report(self) -> CommandResult:
        c = self.config
        path = self.scores_path()
        if not os.path.exists(path):
            raise MissingReport(path)
        with open(path, "r", encoding="utf-8") as f:
            rows = self.view.parse_report(f.read())

        manifest = self._manifest()
        summary = self.view.render_summary(rows, self.report_metadata(manifest))
        _write_text(c.out(REPORT_FILE), summary)

        chart = None
        if c.chart and rows:
            chart = ReportGenerator.create_score_chart(rows, c.out("evaluation", "scores.png"))
        manifest.record("report", c, report=c.out(REPORT_FILE), chart=chart)
        manifest.save(self.manifest_path)
        return CommandResult(STATUS_OK, summary, {"rows": rows, "chart": chart})
