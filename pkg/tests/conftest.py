"""
Configuración compartida de pytest
- Raíz del repo en sys.path (igual que main.py)
- Fixtures de muestra: corpus FHIR, diccionario ADNI, config temporal
"""
import os
import sys
import textwrap

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

FIXTURES = os.path.join(ROOT, "tests", "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURES, name)


@pytest.fixture
def sample_schema():
    from modules.fhir_corpus.controller import load_corpus_file
    return load_corpus_file(fixture_path("sample_corpus.jsonl"), "sample")


@pytest.fixture
def adni_dictionary():
    from modules.dictionary_ingest.controller import DictionaryController
    return DictionaryController().load_file(fixture_path("adni_dictionary.csv"))


@pytest.fixture
def write_config(tmp_path):
    """Fábrica: escribe un config.ini en tmp_path apuntando a los fixtures; devuelve su ruta"""

    def _write(dictionary_paths=None, mock_script=None, ground_truth=None, iterations=1,
               parallelism=2, k=5, chunk_size=2000, chunk_overlap=200, chart=False, output_dir=None,
               extra=""):
        paths = dictionary_paths or [fixture_path("adni_dictionary.csv")]
        content = textwrap.dedent(f"""\
            [corpus]
            path = {fixture_path("sample_corpus.jsonl")}
            version_label = sample

            [dictionary]
            paths = {",".join(paths)}

            [retrieval]
            k = {k}
            chunk_size = {chunk_size}
            chunk_overlap = {chunk_overlap}

            [embedder]
            mode = local
            dimension = 128
            max_attempts = 2
            backoff_factor = 0

            [generator]
            mode = mock
            mock_script = {mock_script or fixture_path("adni_mock_responses.json")}
            max_attempts = 2
            backoff_factor = 0

            [pipeline]
            iterations = {iterations}
            parallelism = {parallelism}
            output_dir = {output_dir or str(tmp_path / "output")}
            ground_truth_path = {ground_truth or fixture_path("adni_ground_truth.csv")}

            [reports]
            chart = {chart}

            [logging]
            level = WARNING
            format = %(levelname)s %(name)s: %(message)s
            """) + extra
        path = tmp_path / "config.ini"
        path.write_text(content, encoding="utf-8")
        return str(path)

    return _write
