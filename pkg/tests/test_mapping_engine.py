import json
import random
import string

import httpx
import pytest

from database.models import DictionaryEntry, GenerationRequest, MappingPath
from modules.dictionary_ingest.controller import entry_to_query
from modules.fhir_corpus.controller import canonical_text, parse_path
from modules.mapping_engine.clients import MockLlmClient, RemoteLlmClient, prompt_digest
from modules.mapping_engine.controller import MappingController, MappingSettings, generate, parse_response
from modules.mapping_engine.prompt import (
    DEFAULT_TEMPLATE, EMPTY_CONTEXT, SENTINEL, PromptTemplate, build_prompt, load_template,
)
from modules.retrieval.controller import RetrievalController, Retriever
from modules.retrieval.embedders import Embedder, EmbeddingService, LocalHashEmbedder
from modules.retrieval.index import search
from utils.errors import ConfigurationError, ServiceRefusal, TransportFailure

ENTRY = DictionaryEntry("ADNI", "BRAINSTEM_SIZE", "brain-stem ROI size in mm³")


def request_for(entry=ENTRY, prompt="prompt"):
    return GenerationRequest(prompt=prompt, entry_key=entry.key)


@pytest.fixture
def retriever(sample_schema):
    service = EmbeddingService(LocalHashEmbedder(128))
    index = RetrievalController(service).build_index(sample_schema)
    return Retriever(index, service)


def controller_for(schema, retriever, script, **settings):
    options = dict(k=5, max_attempts=3, backoff_factor=0, parallelism=1)
    options.update(settings)
    return MappingController(schema, retriever, MockLlmClient(script), MappingSettings(**options))


# ------------------------------
# Prompt
# ------------------------------
def test_prompt_sections_in_order():
    prompt = build_prompt(DEFAULT_TEMPLATE, ["chunk one", "chunk two"], ENTRY)
    order = [
        DEFAULT_TEMPLATE.role_definition,
        DEFAULT_TEMPLATE.initial_instructions,
        "[1]\nchunk one\n\n[2]\nchunk two",
        "Example:\nInput:\nField name: BRAINSTEM",
        "Field name: BRAINSTEM_SIZE\nDescription: brain-stem ROI size in mm³",
        DEFAULT_TEMPLATE.output_format_direction,
        DEFAULT_TEMPLATE.final_instructions,
    ]
    positions = [prompt.index(part) for part in order]
    assert positions == sorted(positions)
    assert f"{SENTINEL} Observation.valueQuantity.value" in prompt


def test_prompt_with_no_context():
    prompt = build_prompt(DEFAULT_TEMPLATE, [], ENTRY)
    assert EMPTY_CONTEXT in prompt


def test_template_placeholders_validated():
    broken = PromptTemplate(
        role_definition="r", initial_instructions="i", context_placeholder="no token",
        one_shot_example=DEFAULT_TEMPLATE.one_shot_example, input_placeholder="{input}",
        output_format_direction="o", final_instructions="f",
    )
    with pytest.raises(ConfigurationError):
        broken.validate()


def test_load_template_overrides(tmp_path):
    path = tmp_path / "template.json"
    path.write_text(json.dumps({
        "role_definition": "You map fields.",
        "one_shot_example": {"dataset_name": "DEMO", "field_name": "AGE", "fhir_mapping": "Patient.birthDate"},
    }), encoding="utf-8")
    template = load_template(str(path))
    assert template.role_definition == "You map fields."
    assert template.example_key == ("DEMO", "AGE")
    assert template.final_instructions == DEFAULT_TEMPLATE.final_instructions


# ------------------------------
# Parseo de respuestas
# ------------------------------
def test_parse_sentinel_line():
    path, error = parse_response("Reasoning...\nFHIR_MAPPING: Observation.component.valueQuantity.value\n")
    assert error is None
    assert path == MappingPath(("Observation", "component", "valueQuantity", "value"))


def test_parse_fallback_first_path_token():
    path, _ = parse_response("I would use ImagingStudy.series.extension.valueDecimal for this field.")
    assert path.text == "ImagingStudy.series.extension.valueDecimal"


def test_parse_prose_without_path():
    path, error = parse_response("I am not sure which resource applies here")
    assert path is None
    assert "Sin ruta" in error


def test_parse_empty_response():
    path, error = parse_response("")
    assert path is None and error


@pytest.mark.parametrize("raw", [
    "I cannot map this field, e.g. it has no clear meaning",
    "Not applicable, i.e. out of scope.",
])
def test_parse_fallback_ignores_abbreviations(raw):
    path, error = parse_response(raw)
    assert path is None
    assert "Sin ruta" in error


def test_parse_fallback_skips_abbreviation_before_path():
    path, _ = parse_response("Use a demographic element, e.g. Patient.gender.")
    assert path.text == "Patient.gender"


def test_sentinel_roundtrip_random_paths():
    rng = random.Random(11)
    for _ in range(300):
        blocks = [
            rng.choice(string.ascii_letters) + "".join(rng.choice(string.ascii_letters + string.digits)
                                                       for _ in range(rng.randint(0, 8)))
            for _ in range(rng.randint(1, 6))
        ]
        path = parse_path(".".join(blocks))
        parsed, error = parse_response(f"{SENTINEL} " + canonical_text(path))
        assert error is None
        assert parsed == path


# ------------------------------
# Clientes
# ------------------------------
def test_mock_sequence_repeats_last():
    client = MockLlmClient({"ADNI::BRAINSTEM_SIZE": ["first", "second"]})
    assert [client.complete(request_for()) for _ in range(3)] == ["first", "second", "second"]
    assert client.invocations == 3


def test_mock_prompt_digest_has_priority():
    client = MockLlmClient({prompt_digest("p"): "by digest", "ADNI::BRAINSTEM_SIZE": "by key"})
    assert client.complete(request_for(prompt="p")) == "by digest"
    assert client.complete(request_for(prompt="other")) == "by key"


def test_mock_from_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"responses": {"ADNI::BRAINSTEM_SIZE": "x"}, "default": "d"}), encoding="utf-8")
    client = MockLlmClient.from_file(str(path))
    assert client.complete(request_for()) == "x"
    assert client.complete(request_for(DictionaryEntry("ADNI", "OTHER"))) == "d"


def test_generate_retries_transport_failures():
    client = MockLlmClient({"ADNI::BRAINSTEM_SIZE": ["!transport", "!transport", "FHIR_MAPPING: Patient"]})
    assert generate(request_for(), client, max_attempts=3, backoff_factor=0) == "FHIR_MAPPING: Patient"
    assert client.invocations == 3


def test_generate_gives_up_after_max_attempts():
    client = MockLlmClient({"ADNI::BRAINSTEM_SIZE": "!transport"})
    with pytest.raises(TransportFailure) as info:
        generate(request_for(), client, max_attempts=3, backoff_factor=0)
    assert info.value.attempts == 3
    assert client.invocations == 3


def test_generate_does_not_retry_refusal():
    client = MockLlmClient({"ADNI::BRAINSTEM_SIZE": "!refusal"})
    with pytest.raises(ServiceRefusal):
        generate(request_for(), client, max_attempts=3, backoff_factor=0)
    assert client.invocations == 1


def test_remote_client_chat_completions_payload():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("Authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "FHIR_MAPPING: Patient"}}]})

    client = RemoteLlmClient("https://llm.example/v1/", "model-x", token="secret")
    client.client = httpx.Client(transport=httpx.MockTransport(handler))
    request = GenerationRequest(prompt="hello", temperature=0.0, max_output_tokens=32)
    assert client.complete(request) == "FHIR_MAPPING: Patient"
    assert seen["url"] == "https://llm.example/v1/chat/completions"
    assert seen["auth"] == "Bearer secret"
    assert seen["body"]["model"] == "model-x"
    assert seen["body"]["max_tokens"] == 32
    assert seen["body"]["messages"][0]["content"] == "hello"


@pytest.mark.parametrize("status,error", [(503, TransportFailure), (429, TransportFailure), (400, ServiceRefusal)])
def test_remote_client_status_mapping(status, error):
    client = RemoteLlmClient("https://llm.example/v1", "m")
    client.client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(status, text="no")))
    with pytest.raises(error):
        client.complete(GenerationRequest(prompt="hello"))


# ------------------------------
# Mapeo de entradas
# ------------------------------
def test_map_entry_records_retrieval_and_validation(sample_schema, retriever):
    controller = controller_for(sample_schema, retriever, {
        "ADNI::BRAINSTEM_SIZE": "FHIR_MAPPING: Observation.component.valueQuantity.value",
    })
    result = controller.map_entry(ENTRY)
    assert result.mapping_text == "Observation.component.valueQuantity.value"
    assert result.validation.resource_known and result.validation.element_known
    assert len(result.retrieved_chunk_ids) == 5
    assert result.failure is None


def test_map_entry_normalizes_resource_case(sample_schema, retriever):
    controller = controller_for(sample_schema, retriever, {"ADNI::BRAINSTEM_SIZE": "FHIR_MAPPING: observation.code"})
    assert controller.map_entry(ENTRY).mapping_text == "Observation.code"


def test_map_entry_unknown_element_kept(sample_schema, retriever):
    controller = controller_for(sample_schema, retriever, {
        "ADNI::BRAINSTEM_SIZE": "FHIR_MAPPING: ImagingStudy.series.extension.valueDecimal",
    })
    result = controller.map_entry(ENTRY)
    assert result.mapping_text == "ImagingStudy.series.extension.valueDecimal"
    assert result.validation.resource_known and not result.validation.element_known


def test_map_entry_transport_failure_is_recorded(sample_schema, retriever):
    controller = controller_for(sample_schema, retriever, {"ADNI::BRAINSTEM_SIZE": "!transport"})
    result = controller.map_entry(ENTRY)
    assert result.parsed_path is None
    assert result.failure == "transport"
    assert result.retrieved_chunk_ids


def test_map_entry_embedder_failure_is_recorded(sample_schema, retriever):
    class Down(Embedder):
        model_name = "down"

        def _embed(self, texts):
            raise TransportFailure("down")

    broken = Retriever(retriever.index, EmbeddingService(Down(), max_attempts=2, backoff_factor=0))
    controller = controller_for(sample_schema, broken, {})
    result = controller.map_entry(ENTRY)
    assert result.failure == "embedder"
    assert result.mapping_text == ""


def test_map_batch_keeps_input_order(sample_schema, retriever, adni_dictionary):
    script = {f"ADNI::{e.field_name}": f"FHIR_MAPPING: Observation.{e.field_name.lower().replace('_', '')}"
              for e in adni_dictionary.entries}
    sequential = controller_for(sample_schema, retriever, script).map_batch(adni_dictionary.entries)
    parallel = controller_for(sample_schema, retriever, script, parallelism=4).map_batch(adni_dictionary.entries)
    assert [r.entry_key for r in parallel] == [e.key for e in adni_dictionary.entries]
    assert [r.to_record() for r in parallel] == [r.to_record() for r in sequential]


def test_failure_does_not_touch_other_entries(sample_schema, retriever, adni_dictionary):
    script = {f"ADNI::{e.field_name}": "FHIR_MAPPING: Observation.code" for e in adni_dictionary.entries}
    clean = controller_for(sample_schema, retriever, dict(script)).map_batch(adni_dictionary.entries)
    script["ADNI::CC_CENTRAL"] = "!transport"
    broken = controller_for(sample_schema, retriever, script, parallelism=3).map_batch(adni_dictionary.entries)
    for a, b in zip(clean, broken):
        if a.entry_key == ("ADNI", "CC_CENTRAL"):
            assert b.failure == "transport"
        else:
            assert a.to_record() == b.to_record()


def test_map_entry_records_search_ids_in_rank_order(sample_schema, retriever):
    controller = controller_for(sample_schema, retriever, {"ADNI::BRAINSTEM_SIZE": "FHIR_MAPPING: Observation.code"})
    result = controller.map_entry(ENTRY)
    (query,) = retriever.embeddings.embed([entry_to_query(ENTRY)])
    hits = search(retriever.index, query, 5)
    assert result.retrieved_chunk_ids == tuple(h.chunk_id for h in hits)
    assert [h.rank for h in hits] == [1, 2, 3, 4, 5]


def test_map_entry_unknown_resource(sample_schema, retriever):
    controller = controller_for(sample_schema, retriever, {"ADNI::BRAINSTEM_SIZE": "FHIR_MAPPING: Zzz.foo"})
    result = controller.map_entry(ENTRY)
    assert result.mapping_text == "Zzz.foo"
    assert not result.validation.resource_known
    assert not result.validation.element_known
