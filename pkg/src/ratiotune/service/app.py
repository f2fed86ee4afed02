"""FastAPI application exposing tuning, sweeps, metrics and the codecs.

Paths in requests are resolved on the server.  Run with
``ratiotune serve`` or ``uvicorn ratiotune.service.app:app``.
"""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from ..compressor import CompressorError
from ..io import ReportError
from ..model import ContractError
from . import handlers
from .schemas import (
    CodecsResponse,
    CompressRequest,
    CompressResponse,
    DecompressRequest,
    DecompressResponse,
    HealthResponse,
    MetricsRequest,
    MetricsResponse,
    SweepRequest,
    SweepResponse,
    TuneRequest,
    TuneResponse,
)


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def create_app() -> FastAPI:
    app = FastAPI(title="ratiotune", version=_version())

    @app.exception_handler(ContractError)
    async def bad_input(_: Request, exc: ContractError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(CompressorError)
    async def codec_failed(_: Request, exc: CompressorError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(OSError)
    async def io_failed(_: Request, exc: OSError):
        status = 500 if isinstance(exc, ReportError) else 404 if isinstance(exc, FileNotFoundError) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    # handlers are CPU bound, so they run off the event loop

    @app.post("/tune", response_model=TuneResponse)
    async def tune(req: TuneRequest) -> TuneResponse:
        return await run_in_threadpool(handlers.tune, req)

    @app.post("/sweep", response_model=SweepResponse)
    async def sweep(req: SweepRequest) -> SweepResponse:
        return await run_in_threadpool(handlers.sweep, req)

    @app.post("/metrics", response_model=MetricsResponse)
    async def metrics(req: MetricsRequest) -> MetricsResponse:
        return await run_in_threadpool(handlers.metrics, req)

    @app.post("/compress", response_model=CompressResponse)
    async def compress(req: CompressRequest) -> CompressResponse:
        return await run_in_threadpool(handlers.compress, req)

    @app.post("/decompress", response_model=DecompressResponse)
    async def decompress(req: DecompressRequest) -> DecompressResponse:
        return await run_in_threadpool(handlers.decompress, req)

    @app.get("/codecs", response_model=CodecsResponse)
    async def codecs() -> CodecsResponse:
        return handlers.codecs()

    @app.get("/health", response_model=HealthResponse)
    async def health() -> HealthResponse:
        return HealthResponse(status="ok", version=_version())

    return app


app = create_app()
