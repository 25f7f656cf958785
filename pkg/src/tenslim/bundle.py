"""WeightBundle: the neutral on-disk tensor container.

Layout: magic b"TLSW", format version u32 LE, manifest length u64 LE,
UTF-8 JSON manifest, then the raw little-endian payload.  The manifest
lists every tensor entry (name, role, shape, dtype, payload offset/length,
free-form meta) plus bundle-level extras.  Offsets are relative to the
start of the payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadMagic, CorruptOffsets, ShapeMismatch,
                     TruncatedPayload, VersionUnsupported)

MAGIC = b"TLSW"
FORMAT_VERSION = 1

ROLES = ("dense", "cp", "tucker", "tt", "ttm", "mask", "sparse")
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


@dataclass
class BundleEntry:
    name: str
    role: str
    array: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ShapeMismatch(f"unknown role {self.role!r}")
        dtype = np.dtype(self.array.dtype)
        if dtype not in _DTYPE_NAMES:
            raise ShapeMismatch(f"unsupported dtype {dtype}; use f32/f64")
        self.array = np.ascontiguousarray(self.array)

    @property
    def dtype_name(self) -> str:
        return _DTYPE_NAMES[np.dtype(self.array.dtype)]


@dataclass
class WeightBundle:
    entries: dict = field(default_factory=dict)  # name -> BundleEntry
    extras: dict = field(default_factory=dict)

    def add(self, name: str, role: str, array: np.ndarray,
            meta: dict | None = None) -> None:
        if name in self.entries:
            raise ShapeMismatch(f"duplicate entry {name!r}")
        self.entries[name] = BundleEntry(name, role, array, meta or {})

    def validate(self) -> None:
        for name, e in self.entries.items():
            if e.role == "mask":
                if not name.endswith("/mask"):
                    raise ShapeMismatch(f"mask entry {name!r} must end /mask")
                partner = name[:-len("mask")] + "sparse"
                other = self.entries.get(partner)
                if other is None or other.role != "sparse" \
                        or other.array.shape != e.array.shape:
                    raise ShapeMismatch(
                        f"mask {name!r} lacks a matching sparse entry")


def write_bundle(bundle: WeightBundle, path) -> None:
    bundle.validate()
    manifest_entries = []
    offset = 0
    blobs = []
    for e in bundle.entries.values():
        data = e.array.astype(_DTYPES[e.dtype_name], copy=False).tobytes()
        manifest_entries.append({
            "name": e.name, "role": e.role, "shape": list(e.array.shape),
            "dtype": e.dtype_name, "offset": offset, "length": len(data),
            "meta": e.meta,
        })
        blobs.append(data)
        offset += len(data)
    manifest = json.dumps({
        "format_version": FORMAT_VERSION,
        "extras": bundle.extras,
        "tensors": manifest_entries,
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def read_bundle(path) -> WeightBundle:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 16:
        raise TruncatedPayload(f"{path}: header truncated")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"{path}: format version {version}")
    mlen = struct.unpack_from("<Q", raw, 8)[0]
    header_end = 16 + mlen
    if header_end > len(raw):
        raise TruncatedPayload(f"{path}: manifest truncated")
    try:
        manifest = json.loads(raw[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptOffsets(f"{path}: unreadable manifest: {e}") from e
    if manifest.get("format_version") != version:
        raise VersionUnsupported(f"{path}: manifest/header version mismatch")

    payload = raw[header_end:]
    bundle = WeightBundle(extras=manifest.get("extras", {}))
    spans = []
    for rec in manifest["tensors"]:
        shape = tuple(int(s) for s in rec["shape"])
        dtype = _DTYPES.get(rec["dtype"])
        if dtype is None:
            raise CorruptOffsets(f"{path}: unknown dtype {rec['dtype']!r}")
        numel = int(np.prod(shape, dtype=np.int64)) if shape else 1
        expected = dtype.itemsize * numel
        off, length = int(rec["offset"]), int(rec["length"])
        if length != expected:
            raise CorruptOffsets(
                f"{path}: entry {rec['name']!r} declares {length} bytes, "
                f"dtype x numel gives {expected}")
        if off < 0 or off + length > len(payload):
            if off + length > len(payload) and off >= 0:
                raise TruncatedPayload(
                    f"{path}: entry {rec['name']!r} runs past end of file")
            raise CorruptOffsets(f"{path}: bad offset for {rec['name']!r}")
        spans.append((off, off + length, rec["name"]))
        arr = np.frombuffer(payload[off:off + length], dtype=dtype)
        bundle.add(rec["name"], rec["role"], arr.reshape(shape).copy(),
                   rec.get("meta", {}))
    spans.sort()
    for (a0, a1, n1), (b0, _, n2) in zip(spans, spans[1:]):
        if b0 < a1:
            raise CorruptOffsets(f"{path}: entries {n1!r}/{n2!r} overlap")
    bundle.validate()
    return bundle
