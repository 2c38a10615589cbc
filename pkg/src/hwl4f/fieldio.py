"""Binary and JSON serialization of fields.

Binary record: 16-byte little-endian header ``b"F4FD" | u32 n | u32 kind |
u32 reserved`` followed by row-major float64 payload.  ``kind`` selects the
payload shape:

* ``KIND_SPATIAL``   n*n real values
* ``KIND_FREQUENCY`` n*n complex values, interleaved (re, im)
* ``KIND_VECTOR``    n real values (flattened matrices, bias vectors)

Records can be concatenated; :func:`read_records` walks a stream of them.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO, Iterator

import numpy as np

MAGIC = b"F4FD"
KIND_SPATIAL = 0
KIND_FREQUENCY = 1
KIND_VECTOR = 2
_HEADER = struct.Struct("<4sIII")


class FieldFormatError(ValueError):
    pass


def encode_field(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    if values.ndim == 1:
        kind, n = KIND_VECTOR, values.shape[0]
        payload = values.astype("<f8")
    elif values.ndim == 2 and values.shape[0] == values.shape[1]:
        n = values.shape[0]
        if np.iscomplexobj(values):
            kind = KIND_FREQUENCY
            payload = values.astype("<c16").view("<f8")
        else:
            kind = KIND_SPATIAL
            payload = values.astype("<f8")
    else:
        raise FieldFormatError(f"cannot encode array of shape {values.shape}")
    return _HEADER.pack(MAGIC, n, kind, 0) + np.ascontiguousarray(payload).tobytes()


def _payload_len(n: int, kind: int) -> int:
    if kind == KIND_SPATIAL:
        return 8 * n * n
    if kind == KIND_FREQUENCY:
        return 16 * n * n
    if kind == KIND_VECTOR:
        return 8 * n
    raise FieldFormatError(f"unknown field kind {kind}")


def decode_field(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one record starting at ``offset``; returns (array, next offset)."""
    if len(buf) - offset < _HEADER.size:
        raise FieldFormatError("truncated header")
    magic, n, kind, _ = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}")
    size = _payload_len(n, kind)
    start = offset + _HEADER.size
    if len(buf) - start < size:
        raise FieldFormatError("truncated payload")
    raw = np.frombuffer(buf, dtype="<f8", count=size // 8, offset=start)
    if kind == KIND_SPATIAL:
        arr = raw.reshape(n, n).astype(np.float64)
    elif kind == KIND_FREQUENCY:
        arr = raw.view("<c16").reshape(n, n).astype(np.complex128)
    else:
        arr = raw.astype(np.float64)
    return arr, start + size


def read_records(buf: bytes) -> Iterator[np.ndarray]:
    offset = 0
    while offset < len(buf):
        arr, offset = decode_field(buf, offset)
        yield arr


def write_fields(fh: BinaryIO, arrays) -> None:
    for a in arrays:
        fh.write(encode_field(a))


def field_to_json(values: np.ndarray) -> str:
    """Small debug dump; complex values become ``{"re": ..., "im": ...}``."""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        doc = {"n": values.shape[0], "kind": "frequency",
               "re": values.real.tolist(), "im": values.imag.tolist()}
    else:
        doc = {"n": values.shape[0], "kind": "spatial", "values": values.tolist()}
    return json.dumps(doc)


def field_from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    if doc["kind"] == "frequency":
        return np.asarray(doc["re"]) + 1j * np.asarray(doc["im"])
    return np.asarray(doc["values"], dtype=np.float64)
