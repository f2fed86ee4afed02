"""End-to-end operations shared by the command line and the HTTP service.

Each function takes plain values, runs the core package and returns plain
values; neither front end adds behaviour of its own.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .compressor import CompressedBuffer, CompressorHandle, make_compressor
from .io import (
    ReportRow,
    RunConfig,
    discover_series,
    element_kind,
    load_raw,
    save_raw,
)
from .metrics import QualityReport, quality_report
from .model import ABSOLUTE, ContractError, Dataset, FieldSeries, TargetSpec, TuneResult
from .orchestrator import oracle_sweep, run_all_fields

ENVELOPE_MAGIC = b"RTCF"


@dataclass(frozen=True)
class TuneOutcome:
    rows: tuple[ReportRow, ...]
    traces: Optional[dict[str, list[dict]]]
    max_bound: float

    @property
    def all_feasible(self) -> bool:
        return all(r.feasible for r in self.rows)


def value_range(series: Sequence[FieldSeries]) -> float:
    lo = min(float(d.values.min()) for s in series for d in s.steps)
    hi = max(float(d.values.max()) for s in series for d in s.steps)
    return hi - lo


def tune(cfg: RunConfig) -> TuneOutcome:
    """Discover the input series, tune every field and step, and score the results."""
    series = discover_series(cfg.input, cfg.shape, cfg.dtype)
    codec = make_compressor(cfg.codec, **cfg.codec_params)
    upper = cfg.max_bound if cfg.max_bound is not None else value_range(series)
    if not upper > 0:
        raise ContractError("input is constant; pass --max-bound explicitly")
    spec = TargetSpec(cfg.target, cfg.epsilon, upper, cfg.max_iters, cfg.regions, cfg.overlap)
    results = run_all_fields(spec, series, codec, cfg.pool, cfg.seed)
    rows: list[ReportRow] = []
    traces: dict[str, list[dict]] = {}
    for s in series:
        res = results[s.field_name]
        for d, row, tr in _rows_for(s, res, codec, cfg.deterministic):
            rows.append(row)
            traces[f"{s.field_name}/{d.time_step}"] = tr
    return TuneOutcome(tuple(rows), traces if cfg.trace else None, upper)


def _rows_for(series: FieldSeries, res: TuneResult, codec: CompressorHandle, deterministic: bool):
    steps = {d.time_step: d for d in series.steps}
    if not res.per_step_log:  # the whole field failed before any step ran
        for d in series.steps:
            yield d, ReportRow(series.field_name, d.time_step, math.nan, math.nan, False, True, 0,
                               None, None, None, None, 0.0, res.error), []
        return
    for rec in res.per_step_log:
        d = steps[rec.time_step]
        q = _score(codec, d, rec.error_bound) if math.isfinite(rec.error_bound) else None
        row = ReportRow(
            field=series.field_name,
            time_step=rec.time_step,
            error_bound=rec.error_bound,
            rho_achieved=rec.rho_achieved,
            feasible=rec.feasible,
            retrained=rec.retrained,
            compressor_calls=rec.compressor_calls,
            psnr=None if q is None else q.psnr,
            ssim=None if q is None else q.ssim,
            max_abs_error=None if q is None else q.max_abs_error,
            acf=None if q is None else q.acf_error_lag1,
            elapsed=0.0 if deterministic else rec.elapsed,
            error=rec.error,
        )
        yield d, row, [t.to_dict() for t in rec.traces]


def _score(codec: CompressorHandle, d: Dataset, bound: float) -> QualityReport:
    buf = codec.compress(d, bound, ABSOLUTE)
    return quality_report(d, codec.decompress(buf, like=d), d.nbytes / len(buf))


def sweep(path: str, shape: Sequence[int], dtype: str, codec: str, params: dict[str, Any],
          lower: Optional[float] = None, upper: Optional[float] = None, points: int = 1000,
          log: bool = True) -> list[tuple[float, float]]:
    """Ratio at ``points`` bounds between ``lower`` and ``upper``.

    ``lower`` defaults to the codec's smallest usable bound and ``upper`` to
    the value range of the data.
    """
    if points < 1:
        raise ContractError("points must be positive")
    d = load_raw(path, shape, dtype)
    c = make_compressor(codec, **params)
    if lower is None:
        lower = c.capabilities.min_bound_for(d.element_kind)
    if upper is None:
        upper = float(d.values.max()) - float(d.values.min())
    if not 0 < lower <= upper:
        raise ContractError(f"need 0 < lower <= upper, got {lower}, {upper}")
    grid = np.geomspace(lower, upper, points) if log else np.linspace(lower, upper, points)
    return oracle_sweep(d, c, grid)


def compare(original: str, reconstructed: str, shape: Sequence[int], dtype: str) -> QualityReport:
    a = load_raw(original, shape, dtype)
    b = load_raw(reconstructed, shape, dtype)
    return quality_report(a, b)


def compress_file(path: str, shape: Sequence[int], dtype: str, codec: str, params: dict[str, Any],
                  bound: float, output: str) -> dict[str, Any]:
    d = load_raw(path, shape, dtype)
    c = make_compressor(codec, **params)
    buf = c.compress(d, bound, ABSOLUTE)
    write_envelope(output, buf, codec, params)
    return {"codec": codec, "error_bound": float(bound), "bytes": len(buf), "ratio": d.nbytes / len(buf)}


def decompress_file(path: str, output: str) -> dict[str, Any]:
    buf, codec, params = read_envelope(path)
    out = make_compressor(codec, **params).decompress(buf)
    save_raw(output, out.values)
    return {"codec": codec, "shape": list(out.shape), "dtype": out.element_kind}


# -- compressed file envelope ---------------------------------------------------
# magic, uint32 header length, UTF-8 JSON header, codec bytes


def write_envelope(path: str | Path, buf: CompressedBuffer, codec: str, params: dict[str, Any]) -> None:
    header = json.dumps(
        {
            "codec": codec,
            "params": params,
            "shape": list(buf.original_shape),
            "kind": buf.original_element_kind,
            "bound": buf.error_bound_used,
        },
        sort_keys=True,
    ).encode()
    Path(path).write_bytes(ENVELOPE_MAGIC + struct.pack("<I", len(header)) + header + buf.data)


def read_envelope(path: str | Path) -> tuple[CompressedBuffer, str, dict[str, Any]]:
    raw = Path(path).read_bytes()
    if raw[:4] != ENVELOPE_MAGIC or len(raw) < 8:
        raise ContractError(f"{path}: not a compressed file written by this tool")
    (n,) = struct.unpack_from("<I", raw, 4)
    try:
        h = json.loads(raw[8 : 8 + n])
        codec = h["codec"]
        handle = make_compressor(codec, **h["params"])
        buf = CompressedBuffer(raw[8 + n :], tuple(h["shape"]), element_kind(h["kind"]), handle.name, float(h["bound"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise ContractError(f"{path}: damaged header ({exc})") from None
    return buf, codec, h["params"]

