# modules/mapping_engine/clients.py
"""
Clientes de generación
- RemoteLlmClient: convención chat-completions (model, messages, temperature -> choices[0])
- MockLlmClient: respuestas guionadas por entrada (DATASET::FIELD) o por digest del prompt
"""
import hashlib
import json
import logging
import threading
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Union

import httpx

from database.models import GenerationRequest
from utils.errors import ServiceRefusal, TransportFailure
from utils.http import post_json

logger = logging.getLogger(__name__)

TRANSPORT_MARK = "!transport"
REFUSAL_MARK = "!refusal"


def prompt_digest(prompt: str) -> str:
    return "sha256:" + hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def entry_script_key(dataset_name: str, field_name: str) -> str:
    return f"{dataset_name}::{field_name}"


class LlmClient(ABC):
    def __init__(self):
        self.invocations = 0
        self._count_lock = threading.Lock()

    def complete(self, request: GenerationRequest) -> str:
        with self._count_lock:
            self.invocations += 1
        return self._complete(request)

    @abstractmethod
    def _complete(self, request: GenerationRequest) -> str:
        ...


class RemoteLlmClient(LlmClient):
    def __init__(self, endpoint: str, model: str, token: Optional[str] = None, timeout: float = 60.0):
        super().__init__()
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.token = token
        self.client = httpx.Client(timeout=timeout)

    def _complete(self, request: GenerationRequest) -> str:
        payload = {
            "model": request.model_name or self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        data = post_json(self.client, f"{self.endpoint}/chat/completions", payload, self.token)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as e:
            raise TransportFailure(f"Respuesta de chat sin 'choices': {str(data)[:200]}") from e


class MockLlmClient(LlmClient):
    """
    script: {clave: respuesta | [respuestas...]}
    - clave 'DATASET::FIELD' o 'sha256:<digest del prompt>' (esta tiene prioridad)
    - una lista se consume en orden por clave; agotada, se repite la última
    - '!transport' simula un fallo transitorio, '!refusal' un 400
    """

    def __init__(self, script: Dict[str, Union[str, List[str]]], default: str = ""):
        super().__init__()
        self.script = dict(script)
        self.default = default
        self._cursor: Dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str):
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        if "responses" in data:
            return cls(data["responses"], data.get("default", ""))
        return cls(data)

    def _lookup(self, request: GenerationRequest):
        digest = prompt_digest(request.prompt)
        if digest in self.script:
            return digest
        if request.entry_key:
            key = entry_script_key(*request.entry_key)
            if key in self.script:
                return key
        return None

    def _complete(self, request: GenerationRequest) -> str:
        key = self._lookup(request)
        if key is None:
            return self.default
        scripted = self.script[key]
        if isinstance(scripted, list):
            with self._lock:
                position = self._cursor.get(key, 0)
                self._cursor[key] = position + 1
            response = scripted[min(position, len(scripted) - 1)] if scripted else self.default
        else:
            response = scripted

        if response == TRANSPORT_MARK:
            raise TransportFailure(f"Fallo simulado para {key}")
        if response == REFUSAL_MARK:
            raise ServiceRefusal(400, f"Rechazo simulado para {key}")
        return response
