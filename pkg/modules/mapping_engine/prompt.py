# modules/mapping_engine/prompt.py
"""
Plantilla de prompt en siete secciones, en este orden:
rol, instrucciones iniciales, contexto recuperado, ejemplo (one-shot),
entrada del diccionario, formato de salida e instrucciones finales.

El texto de cada sección se puede reemplazar con un JSON (load_template);
el orden de las secciones es fijo.
"""
import json
from dataclasses import dataclass
from typing import Sequence, Tuple

from database.models import DictionaryEntry
from modules.dictionary_ingest.controller import entry_to_query
from utils.errors import ConfigurationError

CONTEXT_TOKEN = "{context}"
INPUT_TOKEN = "{input}"
SENTINEL = "FHIR_MAPPING:"
EMPTY_CONTEXT = "(no FHIR documentation was retrieved for this field)"


@dataclass(frozen=True)
class PromptTemplate:
    role_definition: str
    initial_instructions: str
    context_placeholder: str
    one_shot_example: Tuple[DictionaryEntry, str]
    input_placeholder: str
    output_format_direction: str
    final_instructions: str

    def validate(self):
        if self.context_placeholder.count(CONTEXT_TOKEN) != 1:
            raise ConfigurationError(f"La sección de contexto debe contener {CONTEXT_TOKEN} exactamente una vez")
        if self.input_placeholder.count(INPUT_TOKEN) != 1:
            raise ConfigurationError(f"La sección de entrada debe contener {INPUT_TOKEN} exactamente una vez")
        for name in ("role_definition", "initial_instructions", "output_format_direction", "final_instructions"):
            text = getattr(self, name)
            if CONTEXT_TOKEN in text or INPUT_TOKEN in text:
                raise ConfigurationError(f"La sección '{name}' no puede contener marcadores")
        if CONTEXT_TOKEN in self.input_placeholder or INPUT_TOKEN in self.context_placeholder:
            raise ConfigurationError("Los marcadores no pueden cruzarse de sección")
        return self

    @property
    def example_key(self):
        return self.one_shot_example[0].key


DEFAULT_TEMPLATE = PromptTemplate(
    role_definition=(
        "You are a clinical data standards specialist. You map fields of clinical research "
        "data dictionaries to HL7 FHIR R5 resources and elements."
    ),
    initial_instructions=(
        "You will receive excerpts of the FHIR specification describing resources and their elements, "
        "followed by one field of a data dictionary (its name, description and, when available, its coded values). "
        "Choose the single FHIR resource.element path where the values of that field would be stored."
    ),
    context_placeholder="FHIR documentation excerpts (most relevant first):\n{context}",
    one_shot_example=(
        DictionaryEntry(dataset_name="ADNI", field_name="BRAINSTEM", field_description="brain-stem"),
        "Observation.valueQuantity.value",
    ),
    input_placeholder="Data dictionary field to map:\n{input}",
    output_format_direction=(
        "Output format: answer with exactly one line of the form\n"
        f"{SENTINEL} <Resource>.<element>[.<subelement>...]"
    ),
    final_instructions=(
        "Final instructions:\n"
        "- The first block must be a FHIR resource name spelled exactly as in the specification.\n"
        "- Prefer elements that appear in the documentation excerpts above.\n"
        "- Measured numeric values go in a value element of an Observation unless a more specific resource applies.\n"
        "- Use extension.<valueType> only when no standard element fits.\n"
        "- Do not explain your answer and do not output more than one mapping."
    ),
)


def render_context(context_chunks: Sequence[str]) -> str:
    if not context_chunks:
        return EMPTY_CONTEXT
    return "\n\n".join(f"[{rank}]\n{text}" for rank, text in enumerate(context_chunks, start=1))


def build_prompt(template: PromptTemplate, context_chunks: Sequence[str], entry: DictionaryEntry,
                 include_code_values: bool = True) -> str:
    example_entry, example_path = template.one_shot_example
    example = (
        "Example:\n"
        f"Input:\n{entry_to_query(example_entry, include_code_values)}\n"
        f"Output:\n{SENTINEL} {example_path}"
    )
    sections = [
        template.role_definition,
        template.initial_instructions,
        template.context_placeholder.replace(CONTEXT_TOKEN, render_context(context_chunks)),
        example,
        template.input_placeholder.replace(INPUT_TOKEN, entry_to_query(entry, include_code_values)),
        template.output_format_direction,
        template.final_instructions,
    ]
    return "\n\n".join(sections)


def load_template(path: str) -> PromptTemplate:
    """Plantilla desde JSON; las claves ausentes toman el valor por defecto"""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    example = data.get("one_shot_example")
    if example:
        one_shot = (
            DictionaryEntry(
                dataset_name=example.get("dataset_name", ""),
                field_name=example["field_name"],
                field_description=example.get("field_description", ""),
            ),
            example["fhir_mapping"],
        )
    else:
        one_shot = DEFAULT_TEMPLATE.one_shot_example
    template = PromptTemplate(
        role_definition=data.get("role_definition", DEFAULT_TEMPLATE.role_definition),
        initial_instructions=data.get("initial_instructions", DEFAULT_TEMPLATE.initial_instructions),
        context_placeholder=data.get("context_placeholder", DEFAULT_TEMPLATE.context_placeholder),
        one_shot_example=one_shot,
        input_placeholder=data.get("input_placeholder", DEFAULT_TEMPLATE.input_placeholder),
        output_format_direction=data.get("output_format_direction", DEFAULT_TEMPLATE.output_format_direction),
        final_instructions=data.get("final_instructions", DEFAULT_TEMPLATE.final_instructions),
    )
    return template.validate()
