"""Signal file formats.

CSV: one sample per line; complex samples are written ``re,im``.

Binary (``.spw``)::

    b"SPW1" | u32 LE length | u8 flag (0 real, 1 complex) | float64 LE samples

Complex samples are interleaved ``re, im``.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPW1"
_HEADER = struct.Struct("<4sIB")


def write_csv(path, x) -> None:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("only 1-D signals can be written")
    if np.iscomplexobj(x):
        lines = [f"{v.real!r},{v.imag!r}" for v in x.tolist()]
    else:
        lines = [repr(float(v)) for v in x.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> np.ndarray:
    rows = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows:
        raise ValueError(f"{path}: empty signal file")
    if "," in rows[0]:
        vals = [complex(float(a), float(b)) for a, b in (r.split(",") for r in rows)]
        return np.array(vals, dtype=np.complex128)
    return np.array([float(r) for r in rows], dtype=np.float64)


def to_bytes(x) -> bytes:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("only 1-D signals can be written")
    is_complex = np.iscomplexobj(x)
    if is_complex:
        payload = x.astype("<c16").tobytes()
    else:
        payload = x.astype("<f8").tobytes()
    return _HEADER.pack(MAGIC, x.size, int(is_complex)) + payload


def from_bytes(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValueError("truncated signal header")
    magic, length, flag = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}; expected {MAGIC!r}")
    if flag not in (0, 1):
        raise ValueError(f"bad real/complex flag {flag}")
    width = 16 if flag else 8
    body = data[_HEADER.size:]
    if len(body) != length * width:
        raise ValueError(f"expected {length * width} payload bytes, got {len(body)}")
    dtype = "<c16" if flag else "<f8"
    return np.frombuffer(body, dtype=dtype).astype(np.complex128 if flag else np.float64)


def write_binary(path, x) -> None:
    Path(path).write_bytes(to_bytes(x))


def read_binary(path) -> np.ndarray:
    return from_bytes(Path(path).read_bytes())


def read_signal(path) -> np.ndarray:
    """Read a signal, choosing the format from the file's magic bytes."""
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return from_bytes(data)
    return read_csv(path)


def write_signal(path, x, fmt: str = "csv") -> None:
    if fmt == "csv":
        write_csv(path, x)
    elif fmt == "bin":
        write_binary(path, x)
    else:
        raise ValueError(f"unknown format {fmt!r}")
