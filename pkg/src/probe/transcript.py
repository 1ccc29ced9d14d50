"""Транскрипт проб: поток бинарных записей с префиксом длины, только дозапись.

Запись (little-endian):
    u32 длина тела
    тело:
        u8  режим (0 = logits, 1 = probability)
        u8  тег типа (0 = f32, 1 = f64)
        u8  источник (0 = direct, 1 = top-k, 2 = top-1)
        u8  reserved, 0
        u32 позиция
        u32 |V|
        u16 длина query_id
        ... query_id в UTF-8
        ... |V| значений
    16s первые 16 байт SHA-256 от тела
"""

import struct
from collections.abc import Iterable
from pathlib import Path
from types import TracebackType
from typing import BinaryIO

import numpy as np

from ..core.fingerprint_io import CHECKSUM_SIZE, DTYPE_F64, DTYPES, checksum
from ..core.vectors import BasisMode, ProbeVector, VectorSource
from ..errors import InvalidInputError, TranscriptError
from ..llmfp_logging import get_logger

logger = get_logger()

_LENGTH = struct.Struct("<I")
_FIXED = struct.Struct("<BBBBIIH")

_MODES = {BasisMode.LOGITS: 0, BasisMode.PROBABILITY: 1}
_SOURCES = {
    VectorSource.DIRECT: 0,
    VectorSource.TOP_K_RECOVERED: 1,
    VectorSource.TOP1_RECOVERED: 2,
}
_MODES_BY_CODE = {code: mode for mode, code in _MODES.items()}
_SOURCES_BY_CODE = {code: source for source, code in _SOURCES.items()}


def encode_record(vector: ProbeVector, tag: int = DTYPE_F64) -> bytes:
    """Одна запись транскрипта."""
    if tag not in DTYPES:
        raise InvalidInputError(f"неизвестный тег типа {tag}")
    query_id = vector.query_id.encode("utf-8")
    if len(query_id) > 0xFFFF:
        raise InvalidInputError(f"query_id длиннее 65535 байт: {vector.query_id[:32]}...")
    body = (
        _FIXED.pack(
            _MODES[vector.mode],
            tag,
            _SOURCES[vector.source],
            0,
            vector.position,
            vector.vocab_size,
            len(query_id),
        )
        + query_id
        + vector.values.astype(DTYPES[tag]).tobytes()
    )
    return _LENGTH.pack(len(body)) + body + checksum(body)


def _decode_body(body: bytes, index: int) -> ProbeVector:
    if len(body) < _FIXED.size:
        raise TranscriptError("тело записи короче заголовка", index)
    mode_code, tag, source_code, reserved, position, vocab_size, id_len = _FIXED.unpack_from(body, 0)
    if mode_code not in _MODES_BY_CODE:
        raise TranscriptError(f"неизвестный режим {mode_code}", index)
    if source_code not in _SOURCES_BY_CODE:
        raise TranscriptError(f"неизвестный источник {source_code}", index)
    if tag not in DTYPES or reserved != 0:
        raise TranscriptError(f"некорректный тег типа {tag} или reserved {reserved}", index)

    start = _FIXED.size + id_len
    dtype = DTYPES[tag]
    if len(body) != start + vocab_size * dtype.itemsize:
        raise TranscriptError("длина тела не совпадает с |V| и типом значений", index)
    try:
        query_id = body[_FIXED.size : start].decode("utf-8")
    except UnicodeDecodeError as e:
        raise TranscriptError(f"query_id не в UTF-8: {e}", index) from e
    values = np.frombuffer(body, dtype=dtype, count=vocab_size, offset=start).astype(np.float64)
    try:
        return ProbeVector(
            values,
            _MODES_BY_CODE[mode_code],
            query_id,
            position,
            _SOURCES_BY_CODE[source_code],
        )
    except InvalidInputError as e:
        raise TranscriptError(str(e), index) from e


def decode_transcript(data: bytes) -> list[ProbeVector]:
    """Разбирает поток записей; ошибки называют номер записи (с 1)."""
    vectors: list[ProbeVector] = []
    offset = 0
    index = 0
    while offset < len(data):
        index += 1
        if len(data) - offset < _LENGTH.size:
            raise TranscriptError("обрезан префикс длины", index)
        (length,) = _LENGTH.unpack_from(data, offset)
        body_start = offset + _LENGTH.size
        body_end = body_start + length
        if body_end + CHECKSUM_SIZE > len(data):
            raise TranscriptError("запись обрезана", index)
        body = data[body_start:body_end]
        if data[body_end : body_end + CHECKSUM_SIZE] != checksum(body):
            raise TranscriptError("контрольная сумма не совпадает", index)
        vectors.append(_decode_body(body, index))
        offset = body_end + CHECKSUM_SIZE
    return vectors


class TranscriptWriter:
    """Единственный писатель транскрипта: записи только дописываются в конец."""

    def __init__(self, path: Path, tag: int = DTYPE_F64) -> None:
        """Открывает файл на дозапись."""
        self.path = path
        self.tag = tag
        self.count = 0
        self._fh: BinaryIO = path.open("ab")

    def __enter__(self) -> "TranscriptWriter":
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()

    def append(self, vector: ProbeVector) -> None:
        """Дописывает одну запись."""
        self._fh.write(encode_record(vector, self.tag))
        self.count += 1

    def extend(self, vectors: Iterable[ProbeVector]) -> None:
        """Дописывает записи по порядку."""
        for vector in vectors:
            self.append(vector)

    def close(self) -> None:
        """Сбрасывает буфер и закрывает файл."""
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()
            logger.info("transcript.written", path=str(self.path), records=self.count)


def append_transcript(path: Path, vectors: Iterable[ProbeVector]) -> int:
    """Дописывает векторы в транскрипт, возвращает число записей."""
    with TranscriptWriter(path) as writer:
        writer.extend(vectors)
        return writer.count


def load_transcript(path: Path) -> list[ProbeVector]:
    """Читает транскрипт; пустой файл — пустой список."""
    vectors = decode_transcript(path.read_bytes())
    logger.info("transcript.loaded", path=str(path), records=len(vectors))
    return vectors
