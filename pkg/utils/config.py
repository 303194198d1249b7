"""
Configuración de FhirMap desde config.ini
- Una sección por tema ([corpus], [retrieval], [embedder], [generator], [pipeline]...)
- Las opciones de línea de comandos pisan lo leído del archivo
- Los invariantes se verifican al construir, antes de cualquier trabajo
"""
import configparser
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

from utils.errors import ConfigurationError

DEFAULT_CONFIG_PATH = "config.ini"


def read_cfg(path: str = DEFAULT_CONFIG_PATH) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    if path:
        if not os.path.exists(path):
            raise ConfigurationError(f"No existe el archivo de configuración: {path}")
        cfg.read(path, encoding="utf-8")
    return cfg


def _unescape(text: str) -> str:
    return text.replace("\\n", "\n").replace("\\t", "\t")


@dataclass(frozen=True)
class EmbedderSettings:
    mode: str = "local"
    endpoint: str = "https://api.openai.com/v1"
    model: str = "text-embedding-ada-002"
    dimension: int = 256
    batch_size: int = 64
    max_attempts: int = 3
    backoff_factor: float = 0.5
    timeout: float = 30.0


@dataclass(frozen=True)
class GeneratorSettings:
    mode: str = "mock"
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_output_tokens: int = 256
    max_attempts: int = 3
    backoff_factor: float = 0.5
    timeout: float = 60.0
    mock_script: str = ""
    normalize_resource_case: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: str = ""
    corpus_version_label: str = ""
    dictionary_paths: Tuple[str, ...] = ()
    ground_truth_path: Optional[str] = None
    k: int = 20
    chunk_size: int = 2000
    chunk_overlap: int = 200
    separators: Tuple[str, ...] = ("\n\n", "\n", " ", "")
    iterations: int = 10
    parallelism: int = 4
    output_dir: str = "output"
    exclude_one_shot_from_evaluation: bool = True
    prompt_template: str = ""
    delimiter: str = ","
    dataset_column: str = "dataset_name"
    field_column: str = "field_name"
    description_column: str = "field_description"
    codes_column: str = "code_values"
    include_code_values: bool = True
    embedder: EmbedderSettings = field(default_factory=EmbedderSettings)
    generator: GeneratorSettings = field(default_factory=GeneratorSettings)
    number_format: str = "%.2f"
    chart: bool = True
    log_level: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    log_file: str = ""

    def __post_init__(self):
        if self.chunk_size <= 0:
            raise ConfigurationError(f"chunk_size debe ser positivo ({self.chunk_size})")
        if not 0 <= self.chunk_overlap < self.chunk_size:
            raise ConfigurationError(
                f"chunk_overlap ({self.chunk_overlap}) debe ser menor que chunk_size ({self.chunk_size})"
            )
        if self.k < 1:
            raise ConfigurationError(f"k debe ser >= 1 ({self.k})")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations debe ser >= 1 ({self.iterations})")
        if self.parallelism < 1:
            raise ConfigurationError(f"parallelism debe ser >= 1 ({self.parallelism})")
        if not self.separators:
            raise ConfigurationError("Se necesita al menos un separador")
        if self.embedder.mode not in ("local", "remote"):
            raise ConfigurationError(f"embedder.mode inválido: {self.embedder.mode}")
        if self.embedder.dimension <= 0:
            raise ConfigurationError("embedder.dimension debe ser positiva")
        if self.generator.mode not in ("remote", "mock"):
            raise ConfigurationError(f"generator.mode inválido: {self.generator.mode}")
        if self.generator.temperature < 0:
            raise ConfigurationError("generator.temperature debe ser >= 0")
        if self.generator.max_output_tokens <= 0:
            raise ConfigurationError("generator.max_output_tokens debe ser positivo")
        if self.generator.max_attempts < 1 or self.embedder.max_attempts < 1:
            raise ConfigurationError("max_attempts debe ser >= 1")

    # ------------------------------
    # Construcción
    # ------------------------------
    @classmethod
    def from_ini(cls, path: Optional[str] = DEFAULT_CONFIG_PATH,
                 overrides: Optional[Dict[str, Any]] = None) -> "PipelineConfig":
        cfg = read_cfg(path) if path else configparser.ConfigParser(interpolation=None)
        d, e, g = cls(), EmbedderSettings(), GeneratorSettings()

        def get(section, key, fallback):
            return cfg.get(section, key, fallback=fallback)

        try:
            paths = get("dictionary", "paths", "")
            separators = get("retrieval", "separators", None)
            embedder = EmbedderSettings(
                mode=get("embedder", "mode", e.mode).strip().lower(),
                endpoint=get("embedder", "endpoint", e.endpoint),
                model=get("embedder", "model", e.model),
                dimension=cfg.getint("embedder", "dimension", fallback=e.dimension),
                batch_size=cfg.getint("embedder", "batch_size", fallback=e.batch_size),
                max_attempts=cfg.getint("embedder", "max_attempts", fallback=e.max_attempts),
                backoff_factor=cfg.getfloat("embedder", "backoff_factor", fallback=e.backoff_factor),
                timeout=cfg.getfloat("embedder", "timeout", fallback=e.timeout),
            )
            generator = GeneratorSettings(
                mode=get("generator", "mode", g.mode).strip().lower(),
                endpoint=get("generator", "endpoint", g.endpoint),
                model=get("generator", "model", g.model),
                temperature=cfg.getfloat("generator", "temperature", fallback=g.temperature),
                max_output_tokens=cfg.getint("generator", "max_output_tokens", fallback=g.max_output_tokens),
                max_attempts=cfg.getint("generator", "max_attempts", fallback=g.max_attempts),
                backoff_factor=cfg.getfloat("generator", "backoff_factor", fallback=g.backoff_factor),
                timeout=cfg.getfloat("generator", "timeout", fallback=g.timeout),
                mock_script=get("generator", "mock_script", g.mock_script).strip(),
                normalize_resource_case=cfg.getboolean(
                    "generator", "normalize_resource_case", fallback=g.normalize_resource_case),
            )
            values = dict(
                corpus_path=get("corpus", "path", d.corpus_path).strip(),
                corpus_version_label=get("corpus", "version_label", d.corpus_version_label).strip(),
                dictionary_paths=tuple(p.strip() for p in paths.split(",") if p.strip()),
                ground_truth_path=(get("pipeline", "ground_truth_path", "") or "").strip() or None,
                k=cfg.getint("retrieval", "k", fallback=d.k),
                chunk_size=cfg.getint("retrieval", "chunk_size", fallback=d.chunk_size),
                chunk_overlap=cfg.getint("retrieval", "chunk_overlap", fallback=d.chunk_overlap),
                separators=(tuple(_unescape(s) for s in separators.split("|"))
                            if separators is not None else d.separators),
                iterations=cfg.getint("pipeline", "iterations", fallback=d.iterations),
                parallelism=cfg.getint("pipeline", "parallelism", fallback=d.parallelism),
                output_dir=get("pipeline", "output_dir", d.output_dir).strip(),
                exclude_one_shot_from_evaluation=cfg.getboolean(
                    "pipeline", "exclude_one_shot_from_evaluation", fallback=d.exclude_one_shot_from_evaluation),
                prompt_template=get("pipeline", "prompt_template", "").strip(),
                delimiter=_unescape(get("dictionary", "delimiter", d.delimiter)) or ",",
                dataset_column=get("dictionary", "dataset_column", d.dataset_column).strip(),
                field_column=get("dictionary", "field_column", d.field_column).strip(),
                description_column=get("dictionary", "description_column", d.description_column).strip(),
                codes_column=get("dictionary", "codes_column", d.codes_column).strip(),
                include_code_values=cfg.getboolean("dictionary", "include_code_values",
                                                   fallback=d.include_code_values),
                embedder=embedder,
                generator=generator,
                number_format=get("reports", "number_format", d.number_format).strip(),
                chart=cfg.getboolean("reports", "chart", fallback=d.chart),
                log_level=get("logging", "level", d.log_level).strip(),
                log_format=get("logging", "format", d.log_format),
                log_file=get("logging", "file", "").strip(),
            )
        except ValueError as ex:
            raise ConfigurationError(f"Valor inválido en {path}: {ex}") from ex

        config = cls(**values)
        return config.with_overrides(overrides or {})

    def with_overrides(self, overrides: Dict[str, Any]) -> "PipelineConfig":
        """
        Claves planas: k, chunk_size, chunk_overlap, iterations, parallelism, output_dir,
        temperature, embedder_endpoint, generator_endpoint, ... Los None se ignoran.
        """
        top, emb, gen = {}, {}, {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "temperature":
                gen["temperature"] = float(value)
            elif key.startswith("embedder_"):
                emb[key[len("embedder_"):]] = value
            elif key.startswith("generator_"):
                gen[key[len("generator_"):]] = value
            elif key == "dictionary_paths":
                top[key] = tuple(value)
            else:
                top[key] = value
        try:
            return replace(
                self,
                embedder=replace(self.embedder, **emb),
                generator=replace(self.generator, **gen),
                **top,
            )
        except TypeError as ex:
            raise ConfigurationError(f"Opción desconocida: {ex}") from ex

    # ------------------------------
    # Rutas derivadas
    # ------------------------------
    def out(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)

    @property
    def index_dir(self) -> str:
        return self.out("index")

    @property
    def cache_path(self) -> str:
        return self.out("cache", "embeddings.db")

    def snapshot(self) -> Dict[str, Any]:
        """Copia serializable (JSON) de la configuración; no contiene secretos"""
        data = asdict(self)
        data["dictionary_paths"] = list(self.dictionary_paths)
        data["separators"] = list(self.separators)
        return data
