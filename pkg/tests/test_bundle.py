import json
import struct

import numpy as np
import pytest

from tenslim.bundle import (FORMAT_VERSION, MAGIC, WeightBundle, read_bundle,
                            write_bundle)
from tenslim.errors import (BadMagic, CorruptOffsets, ShapeMismatch,
                            TruncatedPayload, VersionUnsupported)


def test_empty_bundle_round_trips(tmp_path):
    path = tmp_path / "empty.tlsw"
    write_bundle(WeightBundle(extras={"note": "empty"}), path)
    got = read_bundle(path)
    assert got.entries == {}
    assert got.extras == {"note": "empty"}


def test_single_f32_tensor_byte_accounting(tmp_path):
    path = tmp_path / "one.tlsw"
    b = WeightBundle()
    b.add("w", "dense", np.arange(4, dtype=np.float32).reshape(2, 2))
    write_bundle(b, path)
    raw = path.read_bytes()
    mlen = struct.unpack_from("<Q", raw, 8)[0]
    assert len(raw) == 4 + 4 + 8 + mlen + 16  # magic + version + len + manifest + payload


def test_round_trip_bit_exact_all_roles_and_dtypes(tmp_path):
    rng = np.random.default_rng(0)
    b = WeightBundle(extras={"layers": {}})
    b.add("model/w", "dense", rng.standard_normal((3, 4)))
    b.add("l/L/0", "cp", rng.standard_normal((4, 2)).astype(np.float32))
    b.add("l/L/1", "tucker", rng.standard_normal((2, 2)))
    b.add("l/L/2", "tt", rng.standard_normal((1, 3, 2)).astype(np.float32))
    b.add("l/L/3", "ttm", rng.standard_normal((1, 2, 2, 1)))
    b.add("l/sparse", "sparse", rng.standard_normal((3, 4)).astype(np.float32))
    b.add("l/mask", "mask",
          (rng.random((3, 4)) < 0.5).astype(np.float32))
    path = tmp_path / "all.tlsw"
    write_bundle(b, path)
    got = read_bundle(path)
    assert set(got.entries) == set(b.entries)
    for name, e in b.entries.items():
        g = got.entries[name]
        assert g.array.dtype == e.array.dtype
        assert np.array_equal(g.array, e.array)
        assert g.role == e.role


def test_write_read_write_is_stable(tmp_path):
    rng = np.random.default_rng(1)
    b = WeightBundle()
    b.add("a", "dense", rng.standard_normal((5,)).astype(np.float32))
    p1, p2 = tmp_path / "a.tlsw", tmp_path / "b.tlsw"
    write_bundle(b, p1)
    write_bundle(read_bundle(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.tlsw"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(BadMagic):
        read_bundle(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "v9.tlsw"
    path.write_bytes(MAGIC + struct.pack("<I", 99) + struct.pack("<Q", 2)
                     + b"{}")
    with pytest.raises(VersionUnsupported):
        read_bundle(path)


def _valid_file(tmp_path):
    b = WeightBundle()
    b.add("w", "dense", np.arange(6, dtype=np.float32).reshape(2, 3))
    path = tmp_path / "v.tlsw"
    write_bundle(b, path)
    return path


def test_truncated_payload(tmp_path):
    path = _valid_file(tmp_path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-1])
    with pytest.raises(TruncatedPayload):
        read_bundle(path)


def test_corrupt_offsets_rejected(tmp_path):
    path = _valid_file(tmp_path)
    raw = path.read_bytes()
    mlen = struct.unpack_from("<Q", raw, 8)[0]
    manifest = json.loads(raw[16:16 + mlen])
    manifest["tensors"][0]["length"] = 20  # disagrees with dtype x numel
    m2 = json.dumps(manifest).encode()
    path.write_bytes(raw[:8] + struct.pack("<Q", len(m2)) + m2
                     + raw[16 + mlen:])
    with pytest.raises(CorruptOffsets):
        read_bundle(path)


def test_overlapping_entries_rejected(tmp_path):
    b = WeightBundle()
    b.add("a", "dense", np.zeros(2, dtype=np.float32))
    b.add("b", "dense", np.zeros(2, dtype=np.float32))
    path = tmp_path / "o.tlsw"
    write_bundle(b, path)
    raw = path.read_bytes()
    mlen = struct.unpack_from("<Q", raw, 8)[0]
    manifest = json.loads(raw[16:16 + mlen])
    manifest["tensors"][1]["offset"] = 4  # overlaps entry a's span
    m2 = json.dumps(manifest).encode()
    path.write_bytes(raw[:8] + struct.pack("<Q", len(m2)) + m2
                     + raw[16 + mlen:])
    with pytest.raises(CorruptOffsets):
        read_bundle(path)


def test_mask_requires_matching_sparse():
    b = WeightBundle()
    b.add("l/mask", "mask", np.ones((2, 2), dtype=np.float32))
    with pytest.raises(ShapeMismatch):
        b.validate()
    b.add("l/sparse", "sparse", np.zeros((2, 2), dtype=np.float32))
    b.validate()


def test_version_constant():
    assert FORMAT_VERSION == 1
