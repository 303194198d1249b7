"""
POST JSON compartido por los clientes remotos (embeddings y chat completions)
- 429 / 5xx / errores de red -> TransportFailure (se reintenta afuera)
- resto de 4xx -> ServiceRefusal (no se reintenta)
"""
from typing import Any, Dict, Optional

import httpx

from utils.errors import ServiceRefusal, TransportFailure

RETRYABLE_STATUS = {408, 409, 429}


def auth_headers(token: Optional[str]) -> Dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    return headers


def post_json(client: httpx.Client, url: str, payload: Dict[str, Any],
              token: Optional[str] = None) -> Dict[str, Any]:
    try:
        resp = client.post(url, headers=auth_headers(token), json=payload)
    except httpx.TransportError as e:
        raise TransportFailure(f"Error de red contra {url}: {e!r}") from e

    if resp.status_code >= 500 or resp.status_code in RETRYABLE_STATUS:
        raise TransportFailure(f"{url} respondió {resp.status_code}")
    if resp.status_code >= 400:
        raise ServiceRefusal(resp.status_code, resp.text[:500])
    try:
        return resp.json()
    except ValueError as e:
        raise TransportFailure(f"Respuesta no JSON de {url}") from e
