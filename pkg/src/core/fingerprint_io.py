"""Бинарные форматы весов: отпечаток LLMFP/1 и входная матрица RAWMAT/1.

LLMFP/1 (little-endian):
    0   8s  magic  b"LLMFP\\x00\\x01\\x00"
    8   u32 vocab_size
    12  u32 hidden_size
    16  u8  dtype tag (0 = f32, 1 = f64)
    17  3x  reserved, нули
    20  ... row-major payload, vocab_size * hidden_size значений
    end 16s первые 16 байт SHA-256 от payload

RAWMAT/1 — тот же заголовок с magic b"RAWMAT\\x00\\x01" и rows/cols вместо
vocab/hidden, без контрольной суммы. Это документированный вход для
fingerprint-export, а не формат чекпойнта LLM.

Веса f32 расширяются до f64 при загрузке.
"""

import hashlib
import struct
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from ..errors import FingerprintFormatError, InvalidInputError
from ..llmfp_logging import get_logger
from .subspace import Fingerprint

logger = get_logger()

FP_MAGIC = b"LLMFP\x00\x01\x00"
RAW_MAGIC = b"RAWMAT\x00\x01"

_HEADER = struct.Struct("<8sIIB3s")
CHECKSUM_SIZE = 16

DTYPE_F32 = 0
DTYPE_F64 = 1
DTYPES: dict[int, np.dtype[Any]] = {
    DTYPE_F32: np.dtype("<f4"),
    DTYPE_F64: np.dtype("<f8"),
}


def checksum(payload: bytes) -> bytes:
    """Первые 16 байт SHA-256 от payload."""
    return hashlib.sha256(payload).digest()[:CHECKSUM_SIZE]


def dtype_tag(name: str) -> int:
    """Тег типа по имени ('f32' или 'f64')."""
    tags = {"f32": DTYPE_F32, "f64": DTYPE_F64}
    if name not in tags:
        raise InvalidInputError(f"неизвестный тип '{name}', ожидается f32 или f64")
    return tags[name]


def _encode(magic: bytes, matrix: npt.NDArray[Any], tag: int) -> tuple[bytes, bytes]:
    rows, cols = matrix.shape
    header = _HEADER.pack(magic, rows, cols, tag, b"\x00\x00\x00")
    payload = np.ascontiguousarray(matrix, dtype=DTYPES[tag]).tobytes(order="C")
    return header, payload


def _decode(
    data: bytes, magic: bytes, label: str
) -> tuple[npt.NDArray[np.float64], int, int]:
    """Разбирает заголовок и payload. Возвращает (матрица f64, tag, конец payload)."""
    if len(data) < _HEADER.size:
        raise FingerprintFormatError(f"{label}: заголовок обрезан", offset=len(data))
    got_magic, rows, cols, tag, reserved = _HEADER.unpack_from(data, 0)
    if got_magic != magic:
        raise FingerprintFormatError(f"{label}: неверная сигнатура {got_magic!r}", offset=0)
    if rows == 0:
        raise FingerprintFormatError(f"{label}: нулевое число строк", offset=8)
    if cols == 0:
        raise FingerprintFormatError(f"{label}: нулевое число столбцов", offset=12)
    if tag not in DTYPES:
        raise FingerprintFormatError(f"{label}: неизвестный тег типа {tag}", offset=16)
    if reserved != b"\x00\x00\x00":
        raise FingerprintFormatError(f"{label}: зарезервированные байты не нулевые", offset=17)

    dtype = DTYPES[tag]
    start = _HEADER.size
    end = start + rows * cols * dtype.itemsize
    if len(data) < end:
        raise FingerprintFormatError(
            f"{label}: payload обрезан, ожидалось {end - start} байт", offset=len(data)
        )
    matrix = np.frombuffer(data, dtype=dtype, count=rows * cols, offset=start)
    return matrix.reshape(rows, cols).astype(np.float64), tag, end


# -------------------- LLMFP/1 --------------------
def encode_fingerprint(fp: Fingerprint, dtype: str = "f64") -> bytes:
    """Сериализует отпечаток в LLMFP/1."""
    header, payload = _encode(FP_MAGIC, fp.weights, dtype_tag(dtype))
    return header + payload + checksum(payload)


def decode_fingerprint(data: bytes, model_id: str) -> Fingerprint:
    """Разбирает LLMFP/1 и проверяет контрольную сумму."""
    weights, _, end = _decode(data, FP_MAGIC, "LLMFP/1")
    trailer = data[end:]
    if len(trailer) != CHECKSUM_SIZE:
        raise FingerprintFormatError(
            f"LLMFP/1: ожидается {CHECKSUM_SIZE} байт контрольной суммы, найдено {len(trailer)}",
            offset=end,
        )
    if trailer != checksum(data[_HEADER.size : end]):
        raise FingerprintFormatError("LLMFP/1: контрольная сумма не совпадает", offset=end)
    return Fingerprint(model_id=model_id, weights=weights)


def save_fingerprint(fp: Fingerprint, path: Path, dtype: str = "f64") -> None:
    """Записывает отпечаток в файл."""
    path.write_bytes(encode_fingerprint(fp, dtype=dtype))
    logger.info(
        "fingerprint.saved",
        path=str(path),
        model_id=fp.model_id,
        vocab_size=fp.vocab_size,
        hidden_size=fp.hidden_size,
        dtype=dtype,
    )


def load_fingerprint(path: Path, model_id: str | None = None) -> Fingerprint:
    """Читает отпечаток. model_id по умолчанию — имя файла без расширения."""
    fp = decode_fingerprint(path.read_bytes(), model_id=model_id or path.stem)
    logger.info(
        "fingerprint.loaded",
        path=str(path),
        model_id=fp.model_id,
        vocab_size=fp.vocab_size,
        hidden_size=fp.hidden_size,
    )
    return fp


def read_fingerprint_header(path: Path) -> dict[str, int | bool]:
    """Метаданные LLMFP/1 и статус контрольной суммы без построения Fingerprint."""
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FingerprintFormatError("LLMFP/1: заголовок обрезан", offset=len(data))
    _, rows, cols, tag, _ = _HEADER.unpack_from(data, 0)
    try:
        decode_fingerprint(data, model_id=path.stem)
        valid = True
    except (FingerprintFormatError, InvalidInputError):
        valid = False
    return {"vocab_size": rows, "hidden_size": cols, "dtype_tag": tag, "checksum_ok": valid}


# -------------------- RAWMAT/1 --------------------
def encode_raw_matrix(matrix: npt.ArrayLike, dtype: str = "f64") -> bytes:
    """Сериализует матрицу в RAWMAT/1."""
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise InvalidInputError(f"RAWMAT/1: ожидается матрица, ndim={arr.ndim}")
    header, payload = _encode(RAW_MAGIC, arr, dtype_tag(dtype))
    return header + payload


def load_raw_matrix(path: Path) -> tuple[npt.NDArray[np.float64], int]:
    """Читает RAWMAT/1. Возвращает (матрица f64, тег исходного типа)."""
    data = path.read_bytes()
    matrix, tag, end = _decode(data, RAW_MAGIC, "RAWMAT/1")
    if len(data) != end:
        raise FingerprintFormatError(
            f"RAWMAT/1: лишние {len(data) - end} байт после payload", offset=end
        )
    return matrix, tag
