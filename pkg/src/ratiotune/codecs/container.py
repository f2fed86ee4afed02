"""Self-describing buffer layout shared by the in-tree codecs.

All integers are little-endian::

    offset  size  field
    0       4     magic b"RTZB"
    4       1     codec id (1 = pq, 2 = bt)
    5       1     layout version (1)
    6       1     element kind (0 = float32, 1 = float64)
    7       1     dimension count N
    8       8*N   extents, uint64 each, slowest axis first
    8+8N    8     error bound, IEEE-754 double
    16+8N   ...   codec payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"RTZB"
VERSION = 1
CODEC_IDS = {"pq": 1, "bt": 2}
KIND_CODES = {"float32": 0, "float64": 1}
_KINDS_BY_CODE = {v: k for k, v in KIND_CODES.items()}
_CODECS_BY_ID = {v: k for k, v in CODEC_IDS.items()}


class CorruptBufferError(ValueError):
    """The byte stream is truncated, mangled or not ours."""


@dataclass(frozen=True)
class Header:
    codec: str
    element_kind: str
    shape: tuple[int, ...]
    bound: float

    @property
    def size(self) -> int:
        return 16 + 8 * len(self.shape)


def pack_header(h: Header) -> bytes:
    return b"".join(
        [
            MAGIC,
            struct.pack("<BBBB", CODEC_IDS[h.codec], VERSION, KIND_CODES[h.element_kind], len(h.shape)),
            struct.pack(f"<{len(h.shape)}Q", *h.shape),
            struct.pack("<d", h.bound),
        ]
    )


def unpack_header(buf: bytes) -> tuple[Header, memoryview]:
    view = memoryview(buf)
    if len(view) < 8 or bytes(view[:4]) != MAGIC:
        raise CorruptBufferError("bad magic")
    codec_id, version, kind, ndim = struct.unpack_from("<BBBB", view, 4)
    if version != VERSION:
        raise CorruptBufferError(f"unsupported layout version {version}")
    if codec_id not in _CODECS_BY_ID or kind not in _KINDS_BY_CODE or ndim == 0:
        raise CorruptBufferError("bad header fields")
    end = 16 + 8 * ndim
    if len(view) < end:
        raise CorruptBufferError("truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", view, 8)
    (bound,) = struct.unpack_from("<d", view, 8 + 8 * ndim)
    h = Header(_CODECS_BY_ID[codec_id], _KINDS_BY_CODE[kind], tuple(shape), bound)
    return h, view[end:]


class Reader:
    """Sequential reader over a payload that fails loudly on short reads."""

    def __init__(self, view: memoryview):
        self.view = view
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if n < 0 or self.pos + n > len(self.view):
            raise CorruptBufferError("payload truncated")
        out = self.view[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def finish(self):
        if self.pos != len(self.view):
            raise CorruptBufferError(f"{len(self.view) - self.pos} trailing bytes in payload")
