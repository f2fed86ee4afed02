"""Request and response bodies of the HTTP API."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..io import ReportRow, RunConfig


class _Model(BaseModel):
    # infinities and NaNs travel as strings so PSNR of a lossless result survives
    model_config = ConfigDict(ser_json_inf_nan="strings", extra="forbid")


class TuneRequest(_Model):
    input: str = Field(description="file pattern with a {step} placeholder, resolved on the server")
    shape: list[int]
    dtype: str = "f32"
    codec: str = "pq"
    codec_params: dict[str, Any] = Field(default_factory=dict)
    target: float = Field(10.0, ge=1)
    epsilon: float = Field(0.1, gt=0, lt=1)
    max_bound: Optional[float] = Field(None, gt=0)
    regions: int = Field(12, ge=1)
    overlap: float = Field(0.1, ge=0, lt=0.5)
    max_iters: int = Field(100, ge=1)
    seed: int = 0
    pool: int = Field(1, ge=1)
    trace: bool = False
    deterministic: bool = False

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "TuneRequest":
        d = cfg.to_dict()
        for key in ("report", "format"):
            d.pop(key)
        return cls(**d)

    def to_config(self) -> RunConfig:
        return RunConfig(**self.model_dump())


class Row(_Model):
    field: str
    time_step: int
    error_bound: float
    rho_achieved: float
    feasible: bool
    retrained: bool
    compressor_calls: int
    psnr: Optional[float]
    ssim: Optional[float]
    max_abs_error: Optional[float]
    acf: Optional[float]
    elapsed: float
    error: Optional[str] = None

    @classmethod
    def from_row(cls, r: ReportRow) -> "Row":
        return cls(**r.to_dict())

    def to_row(self) -> ReportRow:
        return ReportRow(**self.model_dump())


class TuneResponse(_Model):
    rows: list[Row]
    all_feasible: bool
    max_bound: float
    traces: Optional[dict[str, list[dict[str, Any]]]] = None


class SweepRequest(_Model):
    input: str
    shape: list[int]
    dtype: str = "f32"
    codec: str = "pq"
    codec_params: dict[str, Any] = Field(default_factory=dict)
    lower: Optional[float] = Field(None, gt=0)
    upper: Optional[float] = Field(None, gt=0)
    points: int = Field(1000, ge=1, le=1_000_000)
    log: bool = True


class SweepResponse(_Model):
    points: list[tuple[float, float]]


class MetricsRequest(_Model):
    original: str
    reconstructed: str
    shape: list[int]
    dtype: str = "f32"


class MetricsResponse(_Model):
    psnr: float
    rmse: float
    max_abs_error: float
    ssim: Optional[float]
    acf_error_lag1: float
    ratio: Optional[float] = None


class CompressRequest(_Model):
    input: str
    shape: list[int]
    dtype: str = "f32"
    codec: str = "pq"
    codec_params: dict[str, Any] = Field(default_factory=dict)
    error_bound: float = Field(gt=0)
    output: str


class CompressResponse(_Model):
    codec: str
    error_bound: float
    bytes: int
    ratio: float


class DecompressRequest(_Model):
    input: str
    output: str


class DecompressResponse(_Model):
    codec: str
    shape: list[int]
    dtype: str


class CodecsResponse(_Model):
    codecs: list[str]


class HealthResponse(_Model):
    status: str
    version: str
