# modules/retrieval/splitter.py
"""
Partición recursiva de texto en chunks con solapamiento
- El corte lo hace RecursiveCharacterTextSplitter (langchain-text-splitters)
- El separador queda pegado al final de la pieza anterior y no se recortan espacios,
  así cada chunk es un substring exacto del documento
- La lista de separadores siempre termina en "" (corte por caracter) para respetar chunk_size
Aquí solo se validan parámetros y se ubica cada chunk en el documento (span).
"""
from functools import lru_cache
from typing import Iterator, List, Sequence, Tuple

from langchain_text_splitters import RecursiveCharacterTextSplitter

from database.models import Chunk
from utils.errors import BadParams

DEFAULT_SEPARATORS = ("\n\n", "\n", " ", "")

Span = Tuple[int, int]


def _check_params(chunk_size: int, overlap: int, separators: Sequence[str]):
    if chunk_size <= 0:
        raise BadParams(f"chunk_size debe ser positivo (llegó {chunk_size})")
    if overlap < 0 or overlap >= chunk_size:
        raise BadParams(f"Se requiere 0 <= overlap < chunk_size (overlap={overlap}, chunk_size={chunk_size})")
    if not separators:
        raise BadParams("La lista de separadores no puede estar vacía")


@lru_cache(maxsize=16)
def _splitter(chunk_size: int, overlap: int, separators: Tuple[str, ...]) -> RecursiveCharacterTextSplitter:
    seps = list(separators)
    if seps[-1] != "":
        seps.append("")
    return RecursiveCharacterTextSplitter(
        chunk_size=chunk_size,
        chunk_overlap=overlap,
        separators=seps,
        keep_separator="end",
        strip_whitespace=False,
    )


def _candidates(text: str, piece: str, low: int, high: int) -> Iterator[int]:
    return (s for s in range(max(0, low), high + 1) if text.startswith(piece, s))


def _locate(text: str, pieces: List[str], overlap: int) -> List[Span]:
    """
    Ubica cada chunk en el documento:
    - el primero arranca en 0 y el último termina al final del texto
    - cada chunk arranca dentro de los últimos `overlap` caracteres del anterior
    - si un chunk calza en varias posiciones (texto repetitivo) se prueba primero
      el mayor solapamiento y se retrocede si la cadena no cierra
    """
    starts: List[int] = []
    stack = [_candidates(text, pieces[0], 0, 0)]
    dead = set()
    while stack:
        i = len(stack) - 1
        start = next(stack[-1], None)
        if start is None:
            stack.pop()
            if starts:
                dead.add((len(starts) - 1, starts.pop()))
            continue
        if (i, start) in dead:
            continue
        end = start + len(pieces[i])
        if i == len(pieces) - 1:
            if end == len(text):
                starts.append(start)
                return [(s, s + len(p)) for s, p in zip(starts, pieces)]
            dead.add((i, start))
            continue
        starts.append(start)
        stack.append(_candidates(text, pieces[i + 1], end - overlap, end))
    raise BadParams("No se pudo ubicar los chunks en el documento")


def split_spans(text: str, chunk_size: int = 2000, overlap: int = 200,
                separators: Sequence[str] = DEFAULT_SEPARATORS) -> List[Span]:
    _check_params(chunk_size, overlap, separators)
    if not text:
        return []
    pieces = _splitter(chunk_size, overlap, tuple(separators)).split_text(text)
    return _locate(text, pieces, overlap)


def split_text(text: str, chunk_size: int = 2000, overlap: int = 200,
               separators: Sequence[str] = DEFAULT_SEPARATORS, doc_id: str = "") -> List[Chunk]:
    spans = split_spans(text, chunk_size, overlap, separators)
    return [
        Chunk(chunk_id=f"{doc_id}#{i}", doc_id=doc_id, text=text[s:e], span=(s, e))
        for i, (s, e) in enumerate(spans)
    ]
