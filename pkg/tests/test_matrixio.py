"""Binary matrix container, delimited tables, and manifests."""

import os
import struct

import numpy as np
import pytest

from sderom import matrixio


def test_header_layout_is_frozen():
    # magic, u32 version, u8 kind, u64 rows, u64 cols, little endian
    assert matrixio.MAGIC == b"SPMR"
    assert matrixio.VERSION == 1
    assert struct.calcsize("<4sIBQQ") == 25


def test_round_trip_preserves_values_and_kind(tmp_path):
    matrix = np.arange(12, dtype=np.float64).reshape(3, 4) / 7.0
    file = tmp_path / "m.spmr"
    matrixio.write_matrix(file, matrix, matrixio.KIND_BASIS)
    back, kind = matrixio.read_matrix(file)
    assert kind == matrixio.KIND_BASIS
    assert np.array_equal(back, matrix)


def test_payload_is_column_major_float64(tmp_path):
    matrix = np.array([[1.0, 2.0], [3.0, 4.0]])
    file = tmp_path / "m.spmr"
    matrixio.write_matrix(file, matrix, matrixio.KIND_GENERIC)
    raw = file.read_bytes()
    header = raw[:25]
    magic, version, kind, rows, cols = struct.unpack("<4sIBQQ", header)
    assert (magic, version, kind, rows, cols) == (b"SPMR", 1, 0, 2, 2)
    payload = np.frombuffer(raw[25:], dtype="<f8")
    assert np.array_equal(payload, [1.0, 3.0, 2.0, 4.0])


def test_reader_rejects_corrupt_headers(tmp_path):
    matrix = np.ones((2, 2))
    file = tmp_path / "m.spmr"
    matrixio.write_matrix(file, matrix, matrixio.KIND_GENERIC)
    raw = bytearray(file.read_bytes())

    bad_magic = tmp_path / "bad_magic.spmr"
    bad_magic.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(ValueError):
        matrixio.read_matrix(bad_magic)

    truncated = tmp_path / "short.spmr"
    truncated.write_bytes(bytes(raw[:-8]))
    with pytest.raises(ValueError):
        matrixio.read_matrix(truncated)

    bad_kind = bytearray(raw)
    bad_kind[8] = 99
    bad_kind_file = tmp_path / "bad_kind.spmr"
    bad_kind_file.write_bytes(bytes(bad_kind))
    with pytest.raises(ValueError):
        matrixio.read_matrix(bad_kind_file)


def test_writes_leave_no_temporaries(tmp_path):
    file = tmp_path / "m.spmr"
    matrixio.write_matrix(file, np.ones((1, 1)), matrixio.KIND_GENERIC)
    matrixio.atomic_write_text(tmp_path / "t.txt", "x = 1\n")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["m.spmr", "t.txt"]


def test_csv_round_trip_keeps_shortest_repr(tmp_path):
    file = tmp_path / "t.csv"
    t = np.array([0.0, 0.1, 0.2])
    v = np.array([1.0, 1.0 / 3.0, 1e-17])
    matrixio.write_csv(file, ["t", "v"], [t, v])
    text = file.read_text()
    assert text.splitlines()[0] == "t,v"
    assert "0.3333333333333333" in text
    header, data = matrixio.read_csv(file)
    assert header == ["t", "v"]
    assert np.array_equal(data["t"], t)
    assert np.array_equal(data["v"], v)


def test_keyvalue_parser_handles_comments_and_duplicates(tmp_path):
    file = tmp_path / "c.txt"
    file.write_text("# comment\na = 1\nb=two words\n\n")
    assert matrixio.parse_keyvalue_text(file) == {"a": "1", "b": "two words"}
    file.write_text("a = 1\na = 2\n")
    with pytest.raises(ValueError):
        matrixio.parse_keyvalue_text(file)


def test_manifest_is_sorted_and_reproducible(tmp_path):
    file = tmp_path / "manifest.txt"
    matrixio.write_manifest(file, {"zebra": 1, "alpha": "x", "mid": 2.5})
    first = file.read_bytes()
    assert first.decode().splitlines() == ["alpha = x", "mid = 2.5", "zebra = 1"]
    matrixio.write_manifest(file, {"mid": 2.5, "alpha": "x", "zebra": 1})
    assert file.read_bytes() == first


def test_sha256_matches_known_digest(tmp_path):
    file = tmp_path / "x.bin"
    file.write_bytes(b"abc")
    digest = matrixio.sha256_file(file)
    assert digest == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )
