"""Little-endian binary containers for clips (``QVC1``) and weights (``QWT1``).

Clip layout::

    magic  "QVC1"            4 bytes
    dtype  0=uint8 1=float32 1 byte
    rank   3 or 4            1 byte
    dims   uint32 LE each    4*rank bytes   (T,H,W) or (T,C,H,W)
    payload, row-major LE

A weight file is ``"QWT1"`` + uint32 record count, then per record a
uint16-prefixed UTF-8 name followed by one clip-style header (without magic)
and its payload. Weight records may also use dtype 2 (float64).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CLIP_MAGIC = b"QVC1"
WEIGHT_MAGIC = b"QWT1"

_CODES = {0: np.dtype("<u1"), 1: np.dtype("<f4"), 2: np.dtype("<f8")}
_KINDS = {np.dtype("uint8"): 0, np.dtype("float32"): 1, np.dtype("float64"): 2}
_MAX_ELEMENTS = 1 << 40


class FormatError(ValueError):
    """Malformed container; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (byte offset {offset})")
        self.offset = offset
        self.path = path


def _encode_array(arr: np.ndarray, allowed_codes) -> bytes:
    code = _KINDS.get(arr.dtype)
    if code is None or code not in allowed_codes:
        raise TypeError(f"unsupported dtype {arr.dtype}")
    header = struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_CODES[code]).tobytes()


def _decode_array(buf: bytes, offset: int, allowed_codes, allowed_ranks, path=None):
    if len(buf) < offset + 2:
        raise FormatError("truncated header", len(buf), path)
    code, rank = struct.unpack_from("<BB", buf, offset)
    if code not in allowed_codes:
        raise FormatError(f"unknown dtype code {code}", offset, path)
    if rank not in allowed_ranks:
        raise FormatError(f"unsupported rank {rank}", offset + 1, path)
    dims_at = offset + 2
    if len(buf) < dims_at + 4 * rank:
        raise FormatError("truncated dims", len(buf), path)
    dims = struct.unpack_from(f"<{rank}I", buf, dims_at)
    count = 1
    for d in dims:
        count *= d
    if count == 0 or count > _MAX_ELEMENTS:
        raise FormatError(f"dims {dims} out of range", dims_at, path)
    dtype = _CODES[code]
    start = dims_at + 4 * rank
    end = start + count * dtype.itemsize
    if len(buf) < end:
        raise FormatError(f"payload truncated: need {end - start} bytes, have {len(buf) - start}", start, path)
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=start).reshape(dims)
    return arr.astype(dtype.newbyteorder("="), copy=True), end


def encode_clip(clip: np.ndarray) -> bytes:
    if clip.ndim not in (3, 4):
        raise ValueError(f"clip must be rank 3 or 4, got {clip.ndim}")
    if clip.dtype == np.float32 and (clip.min() < 0 or clip.max() > 1):
        raise ValueError("float32 clip values must lie in [0, 1]")
    return CLIP_MAGIC + _encode_array(clip, (0, 1))


def decode_clip(buf: bytes, path=None) -> np.ndarray:
    if buf[:4] != CLIP_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0, path)
    arr, end = _decode_array(buf, 4, (0, 1), (3, 4), path)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes", end, path)
    return arr


def write_clip(path, clip: np.ndarray) -> None:
    Path(path).write_bytes(encode_clip(clip))


def read_clip(path) -> np.ndarray:
    return decode_clip(Path(path).read_bytes(), path)


def clip_as_float(clip: np.ndarray) -> np.ndarray:
    """uint8 payloads map to [0, 1] by /255; float payloads pass through."""
    if clip.dtype == np.uint8:
        return clip.astype(np.float32) / np.float32(255)
    return clip


def encode_weights(named: dict) -> bytes:
    parts = [WEIGHT_MAGIC, struct.pack("<I", len(named))]
    for name, arr in named.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        arr = np.asarray(arr)
        if arr.ndim > 255:
            raise ValueError("rank too large")
        parts.append(_encode_array(arr, (1, 2)))
    return b"".join(parts)


def decode_weights(buf: bytes, path=None) -> dict:
    if buf[:4] != WEIGHT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0, path)
    if len(buf) < 8:
        raise FormatError("truncated record count", len(buf), path)
    (count,) = struct.unpack_from("<I", buf, 4)
    offset = 8
    out = {}
    for _ in range(count):
        if len(buf) < offset + 2:
            raise FormatError("truncated record name", len(buf), path)
        (nlen,) = struct.unpack_from("<H", buf, offset)
        name_at = offset + 2
        if len(buf) < name_at + nlen:
            raise FormatError("truncated record name", len(buf), path)
        name = buf[name_at : name_at + nlen].decode("utf-8")
        arr, offset = _decode_array(buf, name_at + nlen, (1, 2), range(0, 256), path)
        out[name] = arr
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes", offset, path)
    return out


def write_weights(path, named: dict) -> None:
    Path(path).write_bytes(encode_weights(named))


def read_weights(path) -> dict:
    return decode_weights(Path(path).read_bytes(), path)
