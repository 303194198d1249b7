"""
Interfaz de línea de comandos de FhirMap
- Subcomandos: index-build, map, evaluate, report
- Opciones globales: --config, --output-dir y overrides de parámetros
- Códigos de salida: 0 éxito, 1 configuración/entrada, 2 fallo parcial, 3 fallo total
"""
import logging
import sqlite3
from typing import Optional

import typer
from typing_extensions import Annotated

from auth.credentials import CredentialManager
from modules.pipeline.controller import (
    STATUS_FAILED, STATUS_OK, STATUS_PARTIAL, CommandResult, PipelineController,
)
from utils.config import DEFAULT_CONFIG_PATH, PipelineConfig
from utils.errors import (
    ConfigurationError, CorpusError, DictionaryError, EmbedderUnavailable, EvaluationError,
    FhirMapError, MissingReport, PathError, RetrievalError,
)
from utils.logger import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PARTIAL = 2
EXIT_FAILED = 3

STATUS_EXIT = {STATUS_OK: EXIT_OK, STATUS_PARTIAL: EXIT_PARTIAL, STATUS_FAILED: EXIT_FAILED}

app = typer.Typer(
    help="Mapeo de diccionarios de datos clínicos a rutas FHIR con recuperación + generación.",
    no_args_is_help=True,
    add_completion=False,
)


def exit_code_for(error: BaseException) -> int:
    """Familia de error -> código de salida"""
    if isinstance(error, EmbedderUnavailable):
        return EXIT_FAILED
    if isinstance(error, (ConfigurationError, DictionaryError, CorpusError, PathError, EvaluationError,
                          RetrievalError, MissingReport, FileNotFoundError)):
        return EXIT_INPUT
    return EXIT_FAILED


@app.callback()
def main(
    ctx: typer.Context,
    config: Annotated[str, typer.Option("--config", "-c", help="Archivo INI de configuración")] = DEFAULT_CONFIG_PATH,
    output_dir: Annotated[Optional[str], typer.Option("--output-dir", help="Carpeta de artefactos")] = None,
    k: Annotated[Optional[int], typer.Option("--k", help="Chunks recuperados por campo")] = None,
    chunk_size: Annotated[Optional[int], typer.Option("--chunk-size")] = None,
    chunk_overlap: Annotated[Optional[int], typer.Option("--chunk-overlap")] = None,
    iterations: Annotated[Optional[int], typer.Option("--iterations")] = None,
    parallelism: Annotated[Optional[int], typer.Option("--parallelism")] = None,
    temperature: Annotated[Optional[float], typer.Option("--temperature")] = None,
    embedder_endpoint: Annotated[Optional[str], typer.Option("--embedder-endpoint")] = None,
    generator_endpoint: Annotated[Optional[str], typer.Option("--generator-endpoint")] = None,
    log_level: Annotated[Optional[str], typer.Option("--log-level")] = None,
):
    """Carga la configuración una vez; los subcomandos la reciben por el contexto"""
    overrides = {
        "output_dir": output_dir, "k": k, "chunk_size": chunk_size, "chunk_overlap": chunk_overlap,
        "iterations": iterations, "parallelism": parallelism, "temperature": temperature,
        "embedder_endpoint": embedder_endpoint, "generator_endpoint": generator_endpoint,
        "log_level": log_level,
    }
    try:
        cfg = PipelineConfig.from_ini(config, overrides)
    except ConfigurationError as e:
        typer.secho(f"Error de configuración: {e}", fg=typer.colors.RED, err=True)
        raise typer.Exit(code=EXIT_INPUT)
    setup_logging(cfg.log_level, cfg.log_format, cfg.log_file)
    ctx.obj = cfg


def _run(ctx: typer.Context, command: str):
    controller = PipelineController(ctx.obj, CredentialManager())
    try:
        result: CommandResult = getattr(controller, command)()
    except (FhirMapError, FileNotFoundError, sqlite3.Error) as e:
        code = exit_code_for(e)
        logger.debug("Detalle del error", exc_info=True)
        typer.secho(f"Error: {e}", fg=typer.colors.RED, err=True)
        raise typer.Exit(code=code)

    color = typer.colors.GREEN if result.status == STATUS_OK else typer.colors.YELLOW
    typer.secho(result.message, fg=color)
    code = STATUS_EXIT[result.status]
    if code:
        raise typer.Exit(code=code)


@app.command("index-build")
def index_build(ctx: typer.Context):
    """Construye y persiste el índice vectorial del corpus FHIR"""
    _run(ctx, "cmd_index_build")


@app.command("map")
def map_(ctx: typer.Context):
    """Mapea cada diccionario configurado, una tabla por iteración"""
    _run(ctx, "cmd_map")


@app.command("evaluate")
def evaluate(ctx: typer.Context):
    """Compara las tablas de mapeo con el ground truth"""
    _run(ctx, "cmd_evaluate")


@app.command("report")
def report(ctx: typer.Context):
    """Resumen legible del reporte de puntajes"""
    _run(ctx, "cmd_report")
