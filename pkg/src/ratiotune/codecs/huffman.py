"""Canonical, length-limited Huffman coding over 16-bit integer symbols.

Code lengths are computed from frequencies sorted with a positional
tie-break, so identical inputs always give identical bit streams.
"""

from __future__ import annotations

import numpy as np

from .container import CorruptBufferError, Reader

ALPHABET = 1 << 16
MAX_LEN = 16


def _sorted_lengths(a: list[int]) -> list[int]:
    """In-place Huffman code lengths for ascending frequencies (Moffat & Katajainen).

    Returns lengths aligned with the input order; needs len(a) >= 2.
    """
    n = len(a)
    leaf, root = 0, 0
    for nxt in range(n - 1):
        # first child
        if leaf >= n or (root < nxt and a[root] < a[leaf]):
            a[nxt] = a[root]
            a[root] = nxt
            root += 1
        else:
            a[nxt] = a[leaf]
            leaf += 1
        # second child
        if leaf >= n or (root < nxt and a[root] < a[leaf]):
            a[nxt] += a[root]
            a[root] = nxt
            root += 1
        else:
            a[nxt] += a[leaf]
            leaf += 1
    a[n - 2] = 0
    for nxt in range(n - 3, -1, -1):
        a[nxt] = a[a[nxt]] + 1
    avail, used, depth = 1, 0, 0
    root, nxt = n - 2, n - 1
    while avail > 0:
        while root >= 0 and a[root] == depth:
            used += 1
            root -= 1
        while avail > used:
            a[nxt] = depth
            nxt -= 1
            avail -= 1
        avail, depth, used = 2 * used, depth + 1, 0
    return a


def _limit(bl_count: list[int], limit: int) -> list[int]:
    # JPEG Annex K.3 style: push overlong codes up while keeping Kraft equality
    for i in range(len(bl_count) - 1, limit, -1):
        while bl_count[i] > 0:
            j = i - 2
            while bl_count[j] == 0:
                j -= 1
            bl_count[i] -= 2
            bl_count[i - 1] += 1
            bl_count[j + 1] += 2
            bl_count[j] -= 1
    return bl_count[: limit + 1]


def code_lengths(freqs: np.ndarray, limit: int = MAX_LEN) -> np.ndarray:
    """Code length for every entry of ``freqs`` (all entries must be > 0).

    Ties between equal frequencies are broken by position, so the result is
    a pure function of the input.
    """
    f = np.asarray(freqs, dtype=np.int64)
    k = len(f)
    if k > (1 << limit):
        raise ValueError("alphabet too large for the length limit")
    if k == 1:
        return np.ones(1, dtype=np.int64)
    order = np.lexsort((np.arange(k), f))
    lengths_sorted = _sorted_lengths(f[order].tolist())
    if max(lengths_sorted) > limit:
        bl_count = np.bincount(lengths_sorted).tolist()
        bl_count = _limit(bl_count, limit)
        # shortest codes go to the most frequent symbols
        lengths_sorted = np.repeat(np.arange(len(bl_count)), bl_count)[::-1].tolist()
    out = np.empty(k, dtype=np.int64)
    out[order] = lengths_sorted
    return out


def canonical_codes(symbols: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Codes assigned in (length, symbol) order, as in DEFLATE."""
    lengths = np.asarray(lengths, dtype=np.int64)
    bl_count = np.bincount(lengths, minlength=MAX_LEN + 2)
    bl_count[0] = 0
    next_code = np.zeros(len(bl_count), dtype=np.int64)
    code = 0
    for bits in range(1, len(bl_count)):
        code = (code + int(bl_count[bits - 1])) << 1
        next_code[bits] = code
    order = np.lexsort((symbols, lengths))
    sorted_len = lengths[order]
    # rank of each symbol among those sharing its length
    first_of_len = np.searchsorted(sorted_len, sorted_len, side="left")
    rank = np.arange(len(order)) - first_of_len
    codes = np.empty(len(order), dtype=np.int64)
    codes[order] = next_code[sorted_len] + rank
    return codes


def pack_bits(codes: np.ndarray, lengths: np.ndarray) -> tuple[bytes, int]:
    """Concatenate variable-length codes MSB-first into bytes."""
    lengths = lengths.astype(np.int64)
    total = int(lengths.sum())
    if total == 0:
        return b"", 0
    starts = np.cumsum(lengths) - lengths
    # a code of <= 16 bits starting at any bit offset touches at most 3 bytes;
    # codes never share bits, so summing the byte contributions equals OR-ing
    window = codes << (24 - lengths - (starts & 7))
    first = starts >> 3
    nbytes = (total + 7) // 8
    out = np.zeros(nbytes + 2, dtype=np.float64)
    for shift, offset in ((16, 0), (8, 1), (0, 2)):
        out += np.bincount(first + offset, weights=(window >> shift) & 0xFF, minlength=nbytes + 2)
    return out[:nbytes].astype(np.uint8).tobytes(), total


def encode(stream: np.ndarray) -> bytes:
    """Encode a stream of symbols in [0, 2**16) into table + bit payload."""
    stream = np.asarray(stream, dtype=np.int64)
    counts = np.bincount(stream, minlength=ALPHABET)
    symbols = np.flatnonzero(counts)
    lengths = code_lengths(counts[symbols])
    codes = canonical_codes(symbols, lengths)
    code_of = np.zeros(ALPHABET, dtype=np.int64)
    len_of = np.zeros(ALPHABET, dtype=np.int64)
    code_of[symbols] = codes
    len_of[symbols] = lengths
    payload, nbits = pack_bits(code_of[stream], len_of[stream])
    head = np.array([len(symbols)], dtype="<u4").tobytes()
    head += symbols.astype("<u2").tobytes() + lengths.astype("u1").tobytes()
    head += np.array([nbits], dtype="<u8").tobytes()
    return head + payload


def decode(reader: Reader, count: int) -> np.ndarray:
    """Read a table + bit payload written by :func:`encode`; returns ``count`` symbols."""
    (k,) = reader.unpack("<I")
    if k == 0 or k > ALPHABET:
        raise CorruptBufferError("bad Huffman table size")
    symbols = np.frombuffer(reader.take(2 * k), dtype="<u2").astype(np.int64)
    lengths = np.frombuffer(reader.take(k), dtype="u1").astype(np.int64)
    (nbits,) = reader.unpack("<Q")
    if lengths.min() < 1 or lengths.max() > MAX_LEN:
        raise CorruptBufferError("bad Huffman code length")
    if np.sum(np.ldexp(1.0, -lengths)) > 1.0:
        raise CorruptBufferError("Huffman lengths violate the Kraft inequality")
    raw = np.frombuffer(reader.take((nbits + 7) // 8), dtype=np.uint8)
    if count == 0:
        return np.zeros(0, dtype=np.int64)

    codes = canonical_codes(symbols, lengths)
    # table indexed by the next MAX_LEN bits of the stream
    sym_at = np.zeros(1 << MAX_LEN, dtype=np.int64)
    len_at = np.zeros(1 << MAX_LEN, dtype=np.int64)
    span = np.left_shift(1, MAX_LEN - lengths)
    lo = codes << (MAX_LEN - lengths)
    slots = np.repeat(lo - np.cumsum(span) + span, span) + np.arange(int(span.sum()))
    sym_at[slots] = np.repeat(symbols, span)
    len_at[slots] = np.repeat(lengths, span)

    padded = np.concatenate([raw, np.zeros(3, dtype=np.uint8)]).astype(np.uint32)
    words = (padded[:-3] << 24) | (padded[1:-2] << 16) | (padded[2:-1] << 8) | padded[3:]
    pos = np.arange(nbits, dtype=np.int64)
    window = ((words[pos >> 3] << (pos & 7).astype(np.uint32)) >> np.uint32(32 - MAX_LEN)).astype(np.int64)
    step = len_at[window]
    nxt = (pos + step).tolist()
    starts = [0] * count
    p = 0
    try:
        for i in range(count):
            starts[i] = p
            p = nxt[p]
    except IndexError:
        raise CorruptBufferError("bit stream ended early") from None
    if p != nbits:
        raise CorruptBufferError("bit stream length does not match symbol count")
    return sym_at[window[np.asarray(starts, dtype=np.int64)]]
