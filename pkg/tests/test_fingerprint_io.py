import numpy as np
import pytest

from src.core.fingerprint_io import (
    FP_MAGIC,
    decode_fingerprint,
    encode_fingerprint,
    encode_raw_matrix,
    load_fingerprint,
    load_raw_matrix,
    read_fingerprint_header,
    save_fingerprint,
)
from src.core.subspace import Fingerprint
from src.errors import FingerprintFormatError


def test_save_load_f64_is_bitwise_equal(tmp_path, fingerprint):
    path = tmp_path / "victim.llmfp"
    save_fingerprint(fingerprint, path)

    loaded = load_fingerprint(path)

    assert loaded.model_id == "victim"
    assert np.array_equal(loaded.weights, fingerprint.weights)


def test_f32_export_sets_dtype_tag_and_widens(tmp_path, rng):
    weights = rng.standard_normal((4096, 64)).astype(np.float32)
    fp = Fingerprint("small", weights)
    data = encode_fingerprint(fp, dtype="f32")

    assert data[:8] == FP_MAGIC
    assert data[16] == 0
    assert len(data) == 20 + 4096 * 64 * 4 + 16
    decoded = decode_fingerprint(data, model_id="small")
    assert np.array_equal(decoded.weights, weights.astype(np.float64))


def test_model_id_defaults_to_file_stem(tmp_path, fingerprint):
    path = tmp_path / "gemma-like.llmfp"
    save_fingerprint(fingerprint, path)

    assert load_fingerprint(path).model_id == "gemma-like"
    assert load_fingerprint(path, model_id="explicit").model_id == "explicit"


@pytest.mark.parametrize(
    ("offset", "value", "expected"),
    [
        (0, b"X", 0),
        (8, b"\x00\x00\x00\x00", 8),
        (16, b"\x07", 16),
        (18, b"\x01", 17),
    ],
)
def test_corrupted_header_names_offset(fingerprint, offset, value, expected):
    data = bytearray(encode_fingerprint(fingerprint))
    data[offset : offset + len(value)] = value

    with pytest.raises(FingerprintFormatError) as err:
        decode_fingerprint(bytes(data), model_id="x")

    assert err.value.offset == expected
    assert f"смещение {expected}" in str(err.value)


def test_checksum_mismatch(fingerprint):
    data = bytearray(encode_fingerprint(fingerprint))
    data[100] ^= 0xFF

    with pytest.raises(FingerprintFormatError, match="контрольная сумма"):
        decode_fingerprint(bytes(data), model_id="x")


def test_truncated_payload(fingerprint):
    data = encode_fingerprint(fingerprint)[:-500]

    with pytest.raises(FingerprintFormatError) as err:
        decode_fingerprint(data, model_id="x")

    assert err.value.offset == len(data)


def test_header_reports_checksum_status(tmp_path, fingerprint):
    good = tmp_path / "good.llmfp"
    bad = tmp_path / "bad.llmfp"
    data = encode_fingerprint(fingerprint, dtype="f32")
    good.write_bytes(data)
    broken = bytearray(data)
    broken[-1] ^= 0x01
    bad.write_bytes(bytes(broken))

    assert read_fingerprint_header(good) == {
        "vocab_size": fingerprint.vocab_size,
        "hidden_size": fingerprint.hidden_size,
        "dtype_tag": 0,
        "checksum_ok": True,
    }
    assert read_fingerprint_header(bad)["checksum_ok"] is False


def test_raw_matrix_keeps_source_dtype(tmp_path, rng):
    matrix = rng.standard_normal((30, 3)).astype(np.float32)
    path = tmp_path / "w.rawmat"
    path.write_bytes(encode_raw_matrix(matrix, dtype="f32"))

    loaded, tag = load_raw_matrix(path)

    assert tag == 0
    assert loaded.dtype == np.float64
    assert np.array_equal(loaded, matrix.astype(np.float64))


def test_raw_matrix_rejects_trailing_bytes(tmp_path, rng):
    path = tmp_path / "w.rawmat"
    path.write_bytes(encode_raw_matrix(rng.standard_normal((10, 2))) + b"\x00")

    with pytest.raises(FingerprintFormatError, match="лишние"):
        load_raw_matrix(path)


def test_raw_matrix_is_not_a_fingerprint(tmp_path, rng):
    path = tmp_path / "w.llmfp"
    path.write_bytes(encode_raw_matrix(rng.standard_normal((10, 2))))

    with pytest.raises(FingerprintFormatError) as err:
        load_fingerprint(path)

    assert err.value.offset == 0
