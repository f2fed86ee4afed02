"""Block fixed-point codec with bitplane truncation, in the style of ZFP's
fixed-accuracy mode.

Each block of ``edge**N`` samples shares one exponent ``E = floor(log2(max|v|))``.
Values are floored onto a fixed-point grid of step ``2**(p + 1)`` where
``p = floor(log2(bound))`` and reconstructed at the cell midpoint, so the
error is at most ``2**p <= bound``.  A block then needs ``B = E - p + 1``
two's-complement bitplanes (zero when ``E < p``).  Because the bound only
enters through ``p``, the compressed size is a step function of the bound
with breakpoints at powers of two.

Payload after the common header::

    uint8   block edge
    uint32  length of the exponent section
    bytes   DEFLATE-compressed int16 exponent per block
            (-32768 = all-zero block, 32767 = block stored raw)
    bytes   bitplanes, block-major then plane (MSB first), packed MSB-first
    bytes   raw blocks, DEFLATE-compressed little-endian element values
            (absent when no block is raw)
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .container import CorruptBufferError, Header, Reader, pack_header, unpack_header
from ..model import ELEMENT_KINDS

ZERO_BLOCK = -32768
RAW_BLOCK = 32767
# widest plane count whose midpoint reconstruction is exact in the element type
PLANE_CAP = {"float32": 23, "float64": 52}


@dataclass(frozen=True)
class BTConfig:
    block_edge: int = 4

    def __post_init__(self):
        if self.block_edge < 2 or self.block_edge > 255:
            raise ValueError(f"block_edge must lie in [2, 255], got {self.block_edge}")


def floor_log2(x: float) -> int:
    return math.frexp(x)[1] - 1


def to_blocks(x: np.ndarray, edge: int) -> tuple[np.ndarray, tuple[int, ...]]:
    padded = np.pad(x, [(0, (-s) % edge) for s in x.shape])
    split = []
    for s in padded.shape:
        split += [s // edge, edge]
    nd = x.ndim
    axes = list(range(0, 2 * nd, 2)) + list(range(1, 2 * nd, 2))
    blocks = padded.reshape(split).transpose(axes).reshape(-1, edge**nd)
    return blocks, padded.shape


def from_blocks(blocks: np.ndarray, padded_shape, shape, edge: int) -> np.ndarray:
    nd = len(shape)
    counts = [s // edge for s in padded_shape]
    arr = blocks.reshape(counts + [edge] * nd)
    axes = []
    for i in range(nd):
        axes += [i, nd + i]
    arr = arr.transpose(axes).reshape(padded_shape)
    return arr[tuple(slice(0, s) for s in shape)]


def plane_counts(exps: np.ndarray, p: int) -> np.ndarray:
    b = exps.astype(np.int64) - p + 1
    b[exps == ZERO_BLOCK] = 0
    b[exps == RAW_BLOCK] = 0
    return np.maximum(b, 0)


def encode_array(values: np.ndarray, bound: float, cfg: BTConfig = BTConfig()) -> bytes:
    if not bound > 0:
        raise ValueError(f"bt needs a positive error bound, got {bound}")
    x = np.asarray(values)
    kind = "float32" if x.dtype.itemsize == 4 else "float64"
    edge = cfg.block_edge
    blocks, _ = to_blocks(x, edge)
    v = blocks.astype(np.float64)

    p = floor_log2(bound)
    maxabs = np.max(np.abs(v), axis=1)
    _, e1 = np.frexp(maxabs)
    exps = np.where(maxabs > 0, e1 - 1, ZERO_BLOCK).astype(np.int64)
    planes = plane_counts(exps, p)
    exps[planes > PLANE_CAP[kind]] = RAW_BLOCK
    planes = plane_counts(exps, p)

    coded = planes > 0
    step = math.ldexp(1.0, p + 1)
    m = np.floor(v[coded] / step).astype(np.int64)
    recon = ((m + 0.5) * step).astype(x.dtype).astype(np.float64)
    # rounding guard; compares against 2**p so the decision depends on p only
    broken = np.any(np.abs(recon - v[coded]) > math.ldexp(1.0, p), axis=1)
    if broken.any():
        idx = np.flatnonzero(coded)[broken]
        exps[idx] = RAW_BLOCK
        planes = plane_counts(exps, p)
        coded = planes > 0
        m = m[~broken]

    b = planes[coded]
    rows = int(b.sum())
    if rows:
        owner = np.repeat(np.arange(len(b)), b)
        first_row = np.cumsum(b) - b
        shift = b[owner] - 1 - (np.arange(rows) - first_row[owner])
        bits = ((m[owner] >> shift[:, None]) & 1).astype(np.uint8)
        plane_bytes = np.packbits(bits.ravel()).tobytes()
    else:
        plane_bytes = b""

    raw = blocks[exps == RAW_BLOCK].astype(ELEMENT_KINDS[kind]).tobytes()
    raw = zlib.compress(raw, 6) if raw else b""
    ez = zlib.compress(exps.astype("<i2").tobytes(), 6)
    header = Header("bt", kind, tuple(int(s) for s in x.shape), float(bound))
    return b"".join([pack_header(header), struct.pack("<BI", edge, len(ez)), ez, plane_bytes, raw])


def decode_array(buf: bytes) -> np.ndarray:
    header, payload = unpack_header(buf)
    if header.codec != "bt":
        raise CorruptBufferError(f"expected a bt stream, found {header.codec}")
    dtype = ELEMENT_KINDS[header.element_kind]
    rd = Reader(payload)
    edge, ez_len = rd.unpack("<BI")
    if edge < 2:
        raise CorruptBufferError("bad block edge")
    try:
        exps = np.frombuffer(zlib.decompress(rd.take(ez_len)), dtype="<i2").astype(np.int64)
    except zlib.error as exc:
        raise CorruptBufferError(f"exponent section: {exc}") from None
    shape = header.shape
    padded_shape = tuple(s + (-s) % edge for s in shape)
    bsize = edge ** len(shape)
    nblocks = int(np.prod([s // edge for s in padded_shape]))
    if len(exps) != nblocks:
        raise CorruptBufferError("block count mismatch")

    p = floor_log2(header.bound)
    planes = plane_counts(exps, p)
    coded = planes > 0
    b = planes[coded]
    rows = int(b.sum())
    plane_bytes = rd.take((rows * bsize + 7) // 8)
    is_raw = exps == RAW_BLOCK
    rest = bytes(rd.take(len(payload) - rd.pos))
    n_raw = int(is_raw.sum()) * bsize
    if n_raw:
        z = zlib.decompressobj()
        try:
            rest = z.decompress(rest)
        except zlib.error as exc:
            raise CorruptBufferError(f"raw section: {exc}") from None
        if not z.eof or z.unused_data:
            raise CorruptBufferError("raw section truncated or padded")
    if len(rest) != n_raw * dtype.itemsize:
        raise CorruptBufferError("raw section has the wrong length")
    raw = np.frombuffer(rest, dtype=dtype)

    out = np.zeros((nblocks, bsize), dtype=np.float64)
    if rows:
        bits = np.unpackbits(np.frombuffer(plane_bytes, dtype=np.uint8), count=rows * bsize)
        bits = bits.reshape(rows, bsize).astype(np.int64)
        owner = np.repeat(np.arange(len(b)), b)
        first_row = np.cumsum(b) - b
        shift = b[owner] - 1 - (np.arange(rows) - first_row[owner])
        u = np.add.reduceat(bits << shift[:, None], first_row, axis=0)
        width = b[:, None]
        m = np.where(u >= (1 << (width - 1)), u - (1 << width), u)
        step = math.ldexp(1.0, p + 1)
        out[coded] = (m + 0.5) * step
    out = out.astype(dtype)
    out[is_raw] = raw.reshape(-1, bsize)
    return from_blocks(out, padded_shape, shape, edge)
