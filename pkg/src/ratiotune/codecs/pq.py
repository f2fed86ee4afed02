"""Prediction/quantization codec in the style of SZ.

Pipeline: 1-layer Lorenzo prediction from already-decoded neighbours,
linear-scaling quantization of the prediction error in units of
``2 * bound``, canonical Huffman coding of the quantization codes, then an
optional DEFLATE pass over the coded bytes.

The prediction runs in the integer domain: every value is first snapped to
the grid ``q = rint(x / (2 * bound))``.  The decoder's reconstruction of a
neighbour is ``2 * bound * q``, so the Lorenzo prediction of the
reconstructed neighbours is ``2 * bound * L(q)`` and the quantization code
``rint((pred - x) / (2 * bound))`` equals the integer ``L(q) - q``.  This is
the same code stream a point-by-point loop would produce, but it vectorises:
the N-dimensional Lorenzo residual is a chain of first differences and the
decoder inverts it with cumulative sums.

Codes with magnitude >= 2**15, points too large for the integer grid and
points whose float reconstruction would break the bound are escaped: the
symbol stream carries an escape and the raw value is stored verbatim,
together with its grid residual so later predictions stay in sync.

When the coded stream would outgrow the samples themselves (very small
bounds) the samples are stored verbatim instead, so the ratio never drops
far below one.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import huffman
from .container import CorruptBufferError, Header, Reader, pack_header, unpack_header
from ..model import ELEMENT_KINDS

ESCAPE = 0
CODE_LIMIT = 1 << 15
GRID_LIMIT = float(1 << 50)
DICT_LEVEL = 6
FLAG_DICT = 1
FLAG_VERBATIM = 2


@dataclass(frozen=True)
class PQConfig:
    predictor: str = "lorenzo1"
    dictionary_stage: bool = True

    def __post_init__(self):
        if self.predictor != "lorenzo1":
            raise ValueError(f"unknown predictor {self.predictor!r}")


def lorenzo_residual(q: np.ndarray) -> np.ndarray:
    r = q
    for axis in range(q.ndim):
        r = np.diff(r, axis=axis, prepend=0)
    return r


def lorenzo_restore(r: np.ndarray) -> np.ndarray:
    q = r
    for axis in range(r.ndim):
        q = np.cumsum(q, axis=axis)
    return q


def encode_array(values: np.ndarray, bound: float, cfg: PQConfig = PQConfig()) -> bytes:
    if not bound > 0:
        raise ValueError(f"pq needs a positive error bound, got {bound}")
    x = np.asarray(values)
    kind = "float32" if x.dtype.itemsize == 4 else "float64"
    x64 = x.astype(np.float64)
    step = 2.0 * bound
    scaled = x64 / step
    outside = ~(np.abs(scaled) <= GRID_LIMIT)
    q = np.rint(np.clip(scaled, -GRID_LIMIT, GRID_LIMIT)).astype(np.int64)
    recon = (q * step).astype(x.dtype)
    bad = outside | (np.abs(recon.astype(np.float64) - x64) > bound)

    r = lorenzo_residual(q).ravel()
    code = -r
    escaped = bad.ravel() | (np.abs(code) >= CODE_LIMIT)
    symbols = np.where(escaped, ESCAPE, code + CODE_LIMIT)

    n_esc = int(escaped.sum())
    inner = b"".join(
        [
            struct.pack("<Q", n_esc),
            huffman.encode(symbols),
            r[escaped].astype("<i8").tobytes(),
            x.ravel()[escaped].astype(ELEMENT_KINDS[kind]).tobytes(),
        ]
    )
    raw = x.astype(ELEMENT_KINDS[kind]).tobytes()
    flags = 0
    if len(inner) >= len(raw):
        inner, flags = raw, FLAG_VERBATIM
    if cfg.dictionary_stage:
        inner = zlib.compress(inner, DICT_LEVEL)
        flags |= FLAG_DICT
    header = Header("pq", kind, tuple(int(s) for s in x.shape), float(bound))
    return pack_header(header) + struct.pack("<B", flags) + inner


def decode_array(buf: bytes) -> np.ndarray:
    header, payload = unpack_header(buf)
    if header.codec != "pq":
        raise CorruptBufferError(f"expected a pq stream, found {header.codec}")
    outer = Reader(payload)
    (flags,) = outer.unpack("<B")
    rest = outer.take(len(payload) - 1)
    if flags & ~(FLAG_DICT | FLAG_VERBATIM):
        raise CorruptBufferError(f"unknown pq flags {flags}")
    if flags & FLAG_DICT:
        z = zlib.decompressobj()
        try:
            inner = z.decompress(rest)
        except zlib.error as exc:
            raise CorruptBufferError(f"dictionary stage: {exc}") from None
        if not z.eof or z.unused_data:
            raise CorruptBufferError("dictionary stream truncated or padded")
    else:
        inner = bytes(rest)

    dtype = ELEMENT_KINDS[header.element_kind]
    n = int(np.prod(header.shape))
    if flags & FLAG_VERBATIM:
        if len(inner) != n * dtype.itemsize:
            raise CorruptBufferError("verbatim payload has the wrong length")
        return np.frombuffer(inner, dtype=dtype).reshape(header.shape).copy()
    rd = Reader(memoryview(inner))
    (n_esc,) = rd.unpack("<Q")
    if n_esc > n:
        raise CorruptBufferError("escape count exceeds sample count")
    symbols = huffman.decode(rd, n)
    esc_resid = np.frombuffer(rd.take(8 * n_esc), dtype="<i8")
    esc_raw = np.frombuffer(rd.take(dtype.itemsize * n_esc), dtype=dtype)
    rd.finish()

    escaped = symbols == ESCAPE
    if int(escaped.sum()) != n_esc:
        raise CorruptBufferError("escape count mismatch")
    r = -(symbols - CODE_LIMIT)
    r[escaped] = esc_resid
    q = lorenzo_restore(r.reshape(header.shape))
    step = 2.0 * header.bound
    out = (q * step).astype(dtype).ravel()
    out[escaped] = esc_raw
    return out.reshape(header.shape)
