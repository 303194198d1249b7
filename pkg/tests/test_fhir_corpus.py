import json
import random
import string

import pytest

from database.models import MappingPath
from modules.fhir_corpus.controller import (
    canonical_text, corpus_digest, load_corpus, normalize_resource_case, parse_path, render_document,
    render_documents, validate_path,
)
from utils.errors import BadBlock, EmptyCorpus, EmptyPath, MalformedRecord


def test_sample_corpus_has_ten_or_more_resources(sample_schema):
    assert len(sample_schema.resources) >= 10
    assert sample_schema.has_element("Observation", "component.valueQuantity.value")
    assert not sample_schema.has_element("ImagingStudy", "series.extension.valueDecimal")


def test_parse_path_blocks():
    path = parse_path("ImagingStudy.series.extension.valueDecimal")
    assert path.blocks == ("ImagingStudy", "series", "extension", "valueDecimal")
    assert path.resource() == "ImagingStudy"
    assert canonical_text(path) == "ImagingStudy.series.extension.valueDecimal"


def test_parse_path_single_block():
    assert parse_path("Patient").blocks == ("Patient",)


@pytest.mark.parametrize("text", ["", "   "])
def test_parse_path_empty(text):
    with pytest.raises(EmptyPath):
        parse_path(text)


def test_parse_path_bad_block_position():
    with pytest.raises(BadBlock) as info:
        parse_path("Observation..value")
    assert info.value.position == 2
    with pytest.raises(BadBlock) as info:
        parse_path("Observation.1value")
    assert info.value.position == 2


def test_validate_path_known_resource_unknown_element(sample_schema):
    result = validate_path(parse_path("ImagingStudy.series.extension.valueDecimal"), sample_schema)
    assert result.resource_known and not result.element_known


def test_validate_path_unknown_resource(sample_schema):
    result = validate_path(parse_path("Foo.bar"), sample_schema)
    assert not result.resource_known and not result.element_known


def test_validate_path_known_element(sample_schema):
    result = validate_path(parse_path("Observation.valueQuantity.value"), sample_schema)
    assert result.resource_known and result.element_known


def test_normalize_resource_case(sample_schema):
    fixed = normalize_resource_case(parse_path("observation.valueQuantity.value"), sample_schema)
    assert fixed == MappingPath(("Observation", "valueQuantity", "value"))
    unknown = parse_path("foo.bar")
    assert normalize_resource_case(unknown, sample_schema) is unknown


def test_render_document_shape(sample_schema):
    doc = sample_schema.elements_of("Patient")[1]
    assert render_document(doc) == (
        "Resource: Patient\nElement: Patient.birthDate\nDescription: The date of birth for the individual."
    )
    ids = [doc_id for doc_id, _ in render_documents(sample_schema)]
    assert len(ids) == len(set(ids)) == len(sample_schema.element_docs)


def test_malformed_record_index():
    content = "\n".join([
        json.dumps({"resource": "Patient", "element": "gender", "description": "Gender"}),
        "",
        json.dumps({"resource": "Patient", "element": "birthDate"}),
    ])
    with pytest.raises(MalformedRecord) as info:
        load_corpus(content)
    assert info.value.record_index == 2


def test_bad_resource_identifier():
    with pytest.raises(MalformedRecord):
        load_corpus([{"resource": "Bad Name", "element": "", "description": "x"}])


def test_duplicate_pair_rejected():
    record = {"resource": "Patient", "element": "gender", "description": "x"}
    with pytest.raises(MalformedRecord):
        load_corpus([record, record])


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        load_corpus("\n\n")


def test_find_resource_case_insensitive(sample_schema):
    assert sample_schema.find_resource("imagingstudy") == "ImagingStudy"
    assert sample_schema.find_resource("nothing") is None


def test_corpus_digest_stable(sample_schema):
    again = load_corpus(
        [{"resource": d.resource_name, "element": d.element_path, "description": d.description}
         for d in sample_schema.element_docs],
        sample_schema.version_label,
    )
    assert corpus_digest(again) == corpus_digest(sample_schema)
    changed = load_corpus([{"resource": "Patient", "element": "", "description": "x"}], "sample")
    assert corpus_digest(changed) != corpus_digest(sample_schema)


def random_path_text(rng):
    def block():
        return rng.choice(string.ascii_letters) + "".join(
            rng.choice(string.ascii_letters + string.digits) for _ in range(rng.randint(0, 9))
        )
    return ".".join(block() for _ in range(rng.randint(1, 6)))


def test_parse_path_roundtrip_random_paths():
    rng = random.Random(7)
    for _ in range(500):
        text = random_path_text(rng)
        path = parse_path(text)
        assert canonical_text(path) == text
        assert parse_path(canonical_text(path)) == path
