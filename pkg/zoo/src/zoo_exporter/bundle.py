"""Standalone WeightBundle writer/reader.

This mirrors the neutral on-disk contract consumed by the compression
toolkit: magic b"TLSW", format version u32 LE, manifest length u64 LE, a
UTF-8 JSON manifest, then the raw little-endian payload.  Offsets in the
manifest are relative to the start of the payload.  The exporter keeps
its own implementation so the two sides share only the file format.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TLSW"
FORMAT_VERSION = 1

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class BundleFormatError(Exception):
    pass


def write_bundle(entries, extras, path) -> None:
    """Write ``entries`` = [(name, role, float array, meta)] plus extras."""
    manifest_entries = []
    blobs = []
    offset = 0
    seen = set()
    for name, role, array, meta in entries:
        if name in seen:
            raise BundleFormatError(f"duplicate entry {name!r}")
        seen.add(name)
        arr = np.ascontiguousarray(array)
        dtype = "f64" if arr.dtype == np.float64 else "f32"
        data = arr.astype(_DTYPES[dtype], copy=False).tobytes()
        manifest_entries.append({
            "name": name, "role": role, "shape": list(arr.shape),
            "dtype": dtype, "offset": offset, "length": len(data),
            "meta": dict(meta),
        })
        blobs.append(data)
        offset += len(data)
    manifest = json.dumps({
        "format_version": FORMAT_VERSION,
        "extras": extras,
        "tensors": manifest_entries,
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def read_bundle(path):
    """Read a bundle back as ({name: (role, array, meta)}, extras)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC or len(raw) < 16:
        raise BundleFormatError(f"{path}: not a WeightBundle")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"{path}: unsupported version {version}")
    mlen = struct.unpack_from("<Q", raw, 8)[0]
    manifest = json.loads(raw[16:16 + mlen].decode("utf-8"))
    payload = raw[16 + mlen:]
    out = {}
    for rec in manifest["tensors"]:
        dtype = _DTYPES[rec["dtype"]]
        off, length = rec["offset"], rec["length"]
        arr = np.frombuffer(payload[off:off + length], dtype=dtype)
        out[rec["name"]] = (rec["role"],
                            arr.reshape(tuple(rec["shape"])).copy(),
                            rec.get("meta", {}))
    return out, manifest.get("extras", {})
