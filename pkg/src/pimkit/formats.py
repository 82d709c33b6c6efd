"""Binary matrix/vector files for GEMV inputs and results.

Layout: a 24-byte little-endian header ``magic "GEMV", u32 dtype code,
u64 rows, u64 cols`` followed by the payload. Dtype codes: 0 = INT8 (one
byte per value), 1 = INT4 (two values per byte, low nibble first),
2 = INT32 (results). Vectors are stored with ``rows = 1``.
"""
from __future__ import annotations

import struct

import numpy as np

from .isa import ContractError

MAGIC = b"GEMV"
HEADER = struct.Struct("<4sIQQ")
CODES = {"INT8": 0, "INT4": 1, "INT32": 2}
NAMES = {v: k for k, v in CODES.items()}


def pack_int4(values) -> bytes:
    v = np.asarray(values, dtype=np.int64).ravel()
    if v.size % 2:
        raise ContractError("INT4 payload needs an even number of values")
    if v.size and (v.min() < -8 or v.max() > 7):
        raise ContractError("INT4 values outside [-8, 7]")
    nib = (v & 0xF).astype(np.uint8)
    return (nib[0::2] | (nib[1::2] << 4)).tobytes()


def unpack_int4(data: bytes, count: int) -> np.ndarray:
    b = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(b.size * 2, dtype=np.int8)
    out[0::2] = (b & 0xF).astype(np.int8)
    out[1::2] = (b >> 4).astype(np.int8)
    out = np.where(out >= 8, out - 16, out).astype(np.int8)
    return out[:count]


def encode_array(array, dtype: str) -> bytes:
    a = np.asarray(array)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or dtype not in CODES:
        raise ContractError("expected a 1-D or 2-D array and a known dtype")
    rows, cols = a.shape
    if dtype == "INT8":
        if a.size and (a.min() < -128 or a.max() > 127):
            raise ContractError("INT8 values out of range")
        body = a.astype("<i1").tobytes()
    elif dtype == "INT4":
        body = pack_int4(a)
    else:
        body = a.astype("<i4").tobytes()
    return HEADER.pack(MAGIC, CODES[dtype], rows, cols) + body


def decode_array(data: bytes) -> tuple[np.ndarray, str]:
    """Return ``(array of shape (rows, cols), dtype name)``."""
    if len(data) < HEADER.size:
        raise ContractError("truncated GEMV header")
    magic, code, rows, cols = HEADER.unpack_from(data)
    if magic != MAGIC or code not in NAMES:
        raise ContractError("not a GEMV array file")
    dtype = NAMES[code]
    body = data[HEADER.size:]
    n = rows * cols
    expected = {"INT8": n, "INT4": (n + 1) // 2, "INT32": 4 * n}[dtype]
    if len(body) != expected:
        raise ContractError(f"payload is {len(body)} bytes, header implies {expected}")
    if dtype == "INT8":
        a = np.frombuffer(body, dtype="<i1").astype(np.int8)
    elif dtype == "INT4":
        a = unpack_int4(body, n)
    else:
        a = np.frombuffer(body, dtype="<i4").astype(np.int32)
    return a.reshape(rows, cols), dtype


def write_array(path: str, array, dtype: str) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_array(array, dtype))


def read_array(path: str) -> tuple[np.ndarray, str]:
    with open(path, "rb") as fh:
        return decode_array(fh.read())
