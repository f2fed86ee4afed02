"""Raw-binary ingestion, series discovery, run configuration and reports.

Input files are headerless little-endian arrays in row-major order, one
field at one time step per file.  Reports hold one row per (field, step);
reals are written with 17 significant digits so they parse back exactly.
"""

from __future__ import annotations

import csv
import glob
import json
import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, TextIO

import numpy as np

from .model import ELEMENT_KINDS, ContractError, Dataset, FieldSeries

DTYPE_ALIASES = {"f32": "float32", "float32": "float32", "f64": "float64", "float64": "float64"}
STEP = "{step}"
FIELD = "{field}"
DEFAULT_FIELD = "data"

REPORT_COLUMNS = (
    "field",
    "time_step",
    "error_bound",
    "rho_achieved",
    "feasible",
    "retrained",
    "compressor_calls",
    "psnr",
    "ssim",
    "max_abs_error",
    "acf",
    "elapsed",
    "error",
)
_INT_COLUMNS = {"time_step", "compressor_calls"}
_BOOL_COLUMNS = {"feasible", "retrained"}
_TEXT_COLUMNS = {"field", "error"}


class InputError(ContractError):
    """A data file or pattern could not be turned into datasets."""


class ReportError(OSError):
    """The report could not be written or read back."""


def element_kind(name: str) -> str:
    try:
        return DTYPE_ALIASES[name.lower()]
    except KeyError:
        raise ContractError(f"unknown element type {name!r}; use f32 or f64") from None


def parse_shape(text: str | Sequence[int]) -> tuple[int, ...]:
    if isinstance(text, str):
        try:
            dims = tuple(int(p) for p in text.replace("x", ",").split(",") if p.strip())
        except ValueError:
            raise ContractError(f"bad shape {text!r}; expected d1,d2,...") from None
    else:
        dims = tuple(int(p) for p in text)
    if not dims or any(d < 1 for d in dims):
        raise ContractError(f"shape must list positive extents, got {text!r}")
    return dims


# -- ingestion ----------------------------------------------------------------


def load_raw(path: str | Path, shape: Sequence[int], kind: str = "float32", field_name: str = DEFAULT_FIELD,
             time_step: int = 0) -> Dataset:
    """Read a headerless little-endian array; rejects size mismatches and non-finite values."""
    kind = element_kind(kind)
    shape = parse_shape(shape)
    dtype = ELEMENT_KINDS[kind]
    expected = int(np.prod(shape)) * dtype.itemsize
    path = Path(path)
    actual = path.stat().st_size
    if actual != expected:
        raise InputError(f"{path}: expected {expected} bytes for shape {shape} {kind}, found {actual}")
    values = np.fromfile(path, dtype=dtype).reshape(shape)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise InputError(f"{path}: non-finite value {values.ravel()[idx]} at flat index {idx}")
    return Dataset(values, field_name, time_step)


def save_raw(path: str | Path, values: np.ndarray) -> None:
    arr = np.asarray(values)
    arr.astype(arr.dtype.newbyteorder("<")).tofile(path)


def _pattern_regex(pattern: str) -> re.Pattern:
    out = []
    for part in re.split(r"(\{step\}|\{field\})", pattern):
        if part == STEP:
            out.append(r"(?P<step>\d+)")
        elif part == FIELD:
            out.append(r"(?P<field>[^/\\]+?)")
        else:
            out.append(re.escape(part))
    return re.compile("".join(out))


def discover_files(pattern: str) -> dict[str, list[tuple[int, str]]]:
    """Group files matching ``pattern`` by field token, sorted by numeric step.

    ``{step}`` stands for a run of digits (zero padding allowed) and is
    required.  ``{field}`` is optional; without it the field name is the file
    name with the step (and any separator left dangling) removed.
    """
    if STEP not in pattern:
        raise InputError(f"pattern {pattern!r} has no {STEP} placeholder")
    if pattern.count(STEP) > 1 or pattern.count(FIELD) > 1:
        raise InputError("each placeholder may appear at most once")
    rx = _pattern_regex(pattern)
    wildcard = glob.escape(pattern).replace(glob.escape(STEP), "*").replace(glob.escape(FIELD), "*")
    groups: dict[str, list[tuple[int, str]]] = {}
    for path in glob.glob(wildcard):
        m = rx.fullmatch(path)
        if m is None:
            continue
        step = int(m.group("step"))
        if FIELD in pattern:
            name = m.group("field")
        else:
            name = Path(pattern.replace(STEP, "")).stem.rstrip("_-.") or DEFAULT_FIELD
        groups.setdefault(name, []).append((step, path))
    if not groups:
        raise InputError(f"no files match {pattern!r}")
    for name, items in groups.items():
        items.sort()
        steps = [s for s, _ in items]
        if len(set(steps)) != len(steps):
            raise InputError(f"field {name!r}: several files share one step number")
    return dict(sorted(groups.items()))


def discover_series(pattern: str, shape: Sequence[int], kind: str = "float32") -> list[FieldSeries]:
    out = []
    for name, items in discover_files(pattern).items():
        steps = tuple(load_raw(p, shape, kind, name, step) for step, p in items)
        out.append(FieldSeries(name, steps))
    return out


# -- configuration ------------------------------------------------------------


@dataclass
class RunConfig:
    input: str
    shape: tuple[int, ...]
    dtype: str = "f32"
    codec: str = "pq"
    codec_params: dict[str, Any] = field(default_factory=dict)
    target: float = 10.0
    epsilon: float = 0.1
    max_bound: Optional[float] = None
    regions: int = 12
    overlap: float = 0.1
    max_iters: int = 100
    seed: int = 0
    pool: int = 1
    report: Optional[str] = None
    format: str = "csv"
    trace: bool = False
    deterministic: bool = False

    def __post_init__(self):
        self.shape = parse_shape(self.shape)
        element_kind(self.dtype)
        if self.format not in ("csv", "json"):
            raise ContractError(f"report format must be csv or json, got {self.format!r}")
        if self.pool < 1:
            raise ContractError("pool size must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CONFIG_ALIASES = {"param": "codec_params"}


def _coerce(key: str, value: str) -> Any:
    kind = _CONFIG_TYPES[key]
    if key == "shape":
        return parse_shape(value)
    if key == "codec_params":
        return dict(parse_param(p) for p in value.split(";") if p.strip())
    if kind == "bool":
        low = value.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
            raise ContractError(f"{key}: expected a boolean, got {value!r}")
        return low in ("true", "1", "yes", "on")
    if kind == "int":
        return int(value)
    if kind in ("float", "Optional[float]"):
        return float(value)
    return value.strip()


def parse_param(text: str) -> tuple[str, Any]:
    """``name=value`` codec parameter; numbers and booleans are converted."""
    if "=" not in text:
        raise ContractError(f"codec parameter {text!r} must look like name=value")
    name, raw = (s.strip() for s in text.split("=", 1))
    for conv in (int, float):
        try:
            return name, conv(raw)
        except ValueError:
            pass
    if raw.lower() in ("true", "false"):
        return name, raw.lower() == "true"
    return name, raw


def read_config_file(path: str | Path) -> dict[str, Any]:
    """``key = value`` per line; ``#`` starts a comment; dashes in keys become underscores."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        key = _CONFIG_ALIASES.get(key, key)
        if key not in _CONFIG_TYPES:
            raise ContractError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, value)
        except ValueError as exc:
            raise ContractError(f"{path}:{lineno}: {exc}") from None
    return out


def merge_config(file_values: Mapping[str, Any], flag_values: Mapping[str, Any]) -> RunConfig:
    """Flags win over the config file; ``None`` flags are treated as unset."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    missing = [k for k in ("input", "shape") if k not in merged]
    if missing:
        raise ContractError(f"missing required settings: {', '.join(missing)}")
    return RunConfig(**merged)


# -- reports ------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
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

    def to_dict(self) -> dict:
        return asdict(self)


def format_real(x: Optional[float]) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _json_real(x: Any) -> Any:
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)  # 'inf', '-inf', 'nan'
    return x


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return _json_real(obj)


def write_report(rows: Iterable[ReportRow], fh: TextIO, fmt: str = "csv",
                 traces: Optional[Mapping[str, Any]] = None) -> None:
    """Write rows to an open text stream as CSV or JSON; ``traces`` go into JSON only."""
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([_csv_cell(name, getattr(r, name)) for name in REPORT_COLUMNS])
    elif fmt == "json":
        doc: dict[str, Any] = {"columns": list(REPORT_COLUMNS), "rows": [r.to_dict() for r in rows]}
        if traces is not None:
            doc["traces"] = dict(traces)
        fh.write(json.dumps(_jsonable(doc), indent=1) + "\n")
    else:
        raise ContractError(f"unknown report format {fmt!r}")


def emit_report(rows: Iterable[ReportRow], path: str | Path, fmt: str = "csv",
                traces: Optional[Mapping[str, Any]] = None) -> Path:
    """Write a report file; ``traces`` maps "field/step" to that step's search traces."""
    if fmt not in ("csv", "json"):
        raise ContractError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            write_report(rows, fh, fmt, traces)
    except OSError as exc:
        raise ReportError(f"cannot write report {path}: {exc.strerror or exc}") from exc
    return path


def _csv_cell(name: str, value: Any) -> str:
    if value is None:
        return ""
    if name in _BOOL_COLUMNS:
        return "true" if value else "false"
    if name in _INT_COLUMNS or name in _TEXT_COLUMNS:
        return str(value)
    return format_real(value)


def _parse_cell(name: str, value: Any) -> Any:
    if value is None or value == "":
        return None if name not in _TEXT_COLUMNS or name == "error" else ""
    if name in _BOOL_COLUMNS:
        return value if isinstance(value, bool) else value == "true"
    if name in _INT_COLUMNS:
        return int(value)
    if name in _TEXT_COLUMNS:
        return str(value)
    return float(value)


def parse_report(path: str | Path) -> tuple[list[ReportRow], Optional[dict]]:
    """Read a report written by :func:`emit_report`; returns (rows, traces or None)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ReportError(f"cannot read report {path}: {exc.strerror or exc}") from exc
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        doc = json.loads(text)
        rows = [ReportRow(**{k: _parse_cell(k, v) for k, v in r.items()}) for r in doc["rows"]]
        return rows, doc.get("traces")
    reader = csv.DictReader(text.splitlines())
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise ReportError(f"{path}: unexpected columns {reader.fieldnames}")
    return [ReportRow(**{k: _parse_cell(k, v) for k, v in r.items()}) for r in reader], None


def emit_sweep(points: Iterable[tuple[float, float]], path: str | Path) -> Path:
    """Bound-versus-ratio curve as a two-column CSV."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("error_bound", "ratio"))
            for b, r in points:
                w.writerow((format_real(b), format_real(r)))
    except OSError as exc:
        raise ReportError(f"cannot write sweep {path}: {exc.strerror or exc}") from exc
    return path
