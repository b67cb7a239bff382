"""Little-endian binary containers.

``SHKC`` (cases and rollouts)::

    b"SHKC" | u32 version | u32 nx | u32 ny | u32 n_snapshots | u32 n_fields
    f64[n_snapshots] times
    f32[n_snapshots, n_fields, nx, ny] snapshots (field-major, C order)

``SHKP`` (parameter checkpoints)::

    b"SHKP" | u32 version | u32 n_arrays
    repeated: u32 name_len | utf-8 name | u32 ndim | u32[ndim] shape | f32[prod(shape)] data
"""

from __future__ import annotations

import struct

import numpy as np

from .exceptions import FormatError

CASE_MAGIC = b"SHKC"
PARAM_MAGIC = b"SHKP"
VERSION = 1
CASE_HEADER = struct.Struct("<4s5I")


def case_nbytes(nx, ny, n_snapshots, n_fields=4):
    return CASE_HEADER.size + 8 * n_snapshots + 4 * n_snapshots * n_fields * nx * ny


def encode_case(times, snapshots) -> bytes:
    times = np.ascontiguousarray(times, dtype="<f8")
    data = np.ascontiguousarray(snapshots, dtype="<f4")
    if data.ndim != 4 or data.shape[0] != times.shape[0]:
        raise ValueError(f"snapshots {data.shape} do not match {times.shape[0]} times")
    n, nf, nx, ny = data.shape
    return CASE_HEADER.pack(CASE_MAGIC, VERSION, nx, ny, n, nf) + times.tobytes() + data.tobytes()


def decode_case(buf: bytes):
    """Return ``(times f64[n], snapshots f32[n, nf, nx, ny])``."""
    if len(buf) < CASE_HEADER.size:
        raise FormatError(f"truncated case file: {len(buf)} bytes is shorter than the header")
    magic, version, nx, ny, n, nf = CASE_HEADER.unpack_from(buf)
    if magic != CASE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CASE_MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    expected = case_nbytes(nx, ny, n, nf)
    if len(buf) != expected:
        raise FormatError(f"case file has {len(buf)} bytes, header implies {expected}")
    off = CASE_HEADER.size
    times = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64)
    data = np.frombuffer(buf, dtype="<f4", count=n * nf * nx * ny, offset=off + 8 * n)
    return times, data.reshape(n, nf, nx, ny).copy()


def write_case_file(path, times, snapshots):
    with open(path, "wb") as fh:
        fh.write(encode_case(times, snapshots))


def read_case_file(path):
    with open(path, "rb") as fh:
        return decode_case(fh.read())


def encode_params(arrays: dict) -> bytes:
    parts = [PARAM_MAGIC, struct.pack("<2I", VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        key = name.encode("utf-8")
        parts.append(struct.pack("<I", len(key)))
        parts.append(key)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_params(buf: bytes) -> dict:
    if len(buf) < 12 or buf[:4] != PARAM_MAGIC:
        raise FormatError(f"bad checkpoint magic {bytes(buf[:4])!r}, expected {PARAM_MAGIC!r}")
    version, count = struct.unpack_from("<2I", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off = 12
    out = {}
    try:
        for _ in range(count):
            (klen,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = bytes(buf[off:off + klen]).decode("utf-8")
            off += klen
            (ndim,) = struct.unpack_from("<I", buf, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if off + 4 * size > len(buf):
                raise FormatError(f"truncated checkpoint while reading {name!r}")
            out[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(shape).copy()
            off += 4 * size
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from exc
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes in checkpoint")
    return out
