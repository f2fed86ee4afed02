"""In-tree reference codecs: ``pq`` (prediction + quantization) and ``bt``
(block transform + bitplane truncation)."""

from __future__ import annotations

import struct
import zlib

from ..compressor import CapabilitySet, CompressedBuffer, CompressorHandle, CorruptBuffer
from ..model import ABSOLUTE, Dataset
from . import bt, pq
from .bt import BTConfig, floor_log2
from .container import CorruptBufferError
from .pq import PQConfig


class _InTree(CompressorHandle):
    module = None

    def _encode(self, values, bound, kind):
        return self.module.encode_array(values, bound, self.config)

    def _decode(self, buf):
        return _decode_checked(self.module, buf)


class PQCompressor(_InTree):
    name = "pq"
    module = pq

    def __init__(self, dictionary_stage: bool = True, predictor: str = "lorenzo1"):
        self.config = PQConfig(predictor=predictor, dictionary_stage=dictionary_stage)
        super().__init__(
            CapabilitySet(supported_dims=frozenset({1, 2, 3, 4}), reentrant=True),
            {"dictionary_stage": dictionary_stage, "predictor": predictor},
        )
        if not dictionary_stage:
            self.name = "pq-nodict"


class BTCompressor(_InTree):
    name = "bt"
    module = bt

    def __init__(self, block_edge: int = 4):
        self.config = BTConfig(block_edge=block_edge)
        super().__init__(
            CapabilitySet(supported_dims=frozenset({1, 2, 3}), reentrant=True),
            {"block_edge": block_edge},
        )

    def effective_bound(self, bound: float) -> float:
        return 2.0 ** floor_log2(bound)


def pq_compress(d: Dataset, bound: float, cfg: PQConfig = PQConfig()) -> CompressedBuffer:
    return PQCompressor(cfg.dictionary_stage, cfg.predictor).compress(d, bound, ABSOLUTE)


def pq_decompress(b: CompressedBuffer) -> Dataset:
    return Dataset(_decode_checked(pq, b))


def bt_compress(d: Dataset, bound: float, cfg: BTConfig = BTConfig()) -> CompressedBuffer:
    return BTCompressor(cfg.block_edge).compress(d, bound, ABSOLUTE)


def bt_decompress(b: CompressedBuffer) -> Dataset:
    return Dataset(_decode_checked(bt, b))


def _decode_checked(module, b: CompressedBuffer):
    try:
        return module.decode_array(b.data)
    except (CorruptBufferError, ValueError, IndexError, struct.error, zlib.error) as exc:
        raise CorruptBuffer(b.codec_name, str(exc) or type(exc).__name__) from exc


__all__ = [
    "BTCompressor",
    "BTConfig",
    "PQCompressor",
    "PQConfig",
    "bt_compress",
    "bt_decompress",
    "pq_compress",
    "pq_decompress",
]
