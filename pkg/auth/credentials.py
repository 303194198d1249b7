"""
Módulo para la gestión de credenciales de los servicios remotos
- Los tokens solo se leen de variables de entorno, nunca de config.ini
- Los manifiestos guardan una huella (sha256 truncado), jamás el token
"""
import hashlib
import os
from typing import Dict, Optional

from utils.errors import ConfigurationError

EMBEDDER_TOKEN_ENV = "FHIRMAP_EMBEDDER_TOKEN"
GENERATOR_TOKEN_ENV = "FHIRMAP_GENERATOR_TOKEN"
EMBEDDER_ENDPOINT_ENV = "FHIRMAP_EMBEDDER_ENDPOINT"
GENERATOR_ENDPOINT_ENV = "FHIRMAP_GENERATOR_ENDPOINT"
FALLBACK_TOKEN_ENV = "OPENAI_API_KEY"


class CredentialManager:
    def __init__(self, environ: Optional[Dict[str, str]] = None):
        self.environ = os.environ if environ is None else environ

    def _get(self, name: str) -> Optional[str]:
        value = (self.environ.get(name) or "").strip()
        return value or None

    def embedder_token(self) -> Optional[str]:
        return self._get(EMBEDDER_TOKEN_ENV) or self._get(FALLBACK_TOKEN_ENV)

    def generator_token(self) -> Optional[str]:
        return self._get(GENERATOR_TOKEN_ENV) or self._get(FALLBACK_TOKEN_ENV)

    def embedder_endpoint(self, default: str) -> str:
        return self._get(EMBEDDER_ENDPOINT_ENV) or default

    def generator_endpoint(self, default: str) -> str:
        return self._get(GENERATOR_ENDPOINT_ENV) or default

    @staticmethod
    def fingerprint(token: Optional[str]) -> Optional[str]:
        """Huella corta del token para trazabilidad"""
        if not token:
            return None
        return hashlib.sha256(token.encode()).hexdigest()[:12]

    def require(self, token: Optional[str], what: str) -> str:
        if not token:
            raise ConfigurationError(
                f"Falta el token para {what}: defina {EMBEDDER_TOKEN_ENV if what == 'embedder' else GENERATOR_TOKEN_ENV} "
                f"o {FALLBACK_TOKEN_ENV}"
            )
        return token
