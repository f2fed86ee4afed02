"""Request-to-response functions.

The HTTP routes and the local command line both go through these, so a
request gives the same answer whether it is served or run in-process.
"""

from __future__ import annotations

from .. import pipeline
from ..compressor import CODEC_NAMES
from ..io import parse_shape
from .schemas import (
    CodecsResponse,
    CompressRequest,
    CompressResponse,
    DecompressRequest,
    DecompressResponse,
    MetricsRequest,
    MetricsResponse,
    Row,
    SweepRequest,
    SweepResponse,
    TuneRequest,
    TuneResponse,
)


def tune(req: TuneRequest) -> TuneResponse:
    out = pipeline.tune(req.to_config())
    return TuneResponse(
        rows=[Row.from_row(r) for r in out.rows],
        all_feasible=out.all_feasible,
        max_bound=out.max_bound,
        traces=out.traces,
    )


def sweep(req: SweepRequest) -> SweepResponse:
    pts = pipeline.sweep(req.input, parse_shape(req.shape), req.dtype, req.codec, req.codec_params,
                         req.lower, req.upper, req.points, req.log)
    return SweepResponse(points=pts)


def metrics(req: MetricsRequest) -> MetricsResponse:
    q = pipeline.compare(req.original, req.reconstructed, parse_shape(req.shape), req.dtype)
    return MetricsResponse(**q.to_dict())


def compress(req: CompressRequest) -> CompressResponse:
    info = pipeline.compress_file(req.input, parse_shape(req.shape), req.dtype, req.codec, req.codec_params,
                                  req.error_bound, req.output)
    return CompressResponse(**info)


def decompress(req: DecompressRequest) -> DecompressResponse:
    return DecompressResponse(**pipeline.decompress_file(req.input, req.output))


def codecs() -> CodecsResponse:
    return CodecsResponse(codecs=list(CODEC_NAMES))
