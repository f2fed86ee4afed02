"""Shared data model: datasets, tuning targets, error controls and results.

Nothing in here runs a compressor; these are plain immutable values that
every other module passes around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

ELEMENT_KINDS = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}

ABSOLUTE = "absolute_max_error"
MSE = "mean_squared_error"
ERROR_KINDS = (ABSOLUTE, MSE)


class ContractError(ValueError):
    """An argument violated a documented precondition."""


def element_kind_of(dtype) -> str:
    dtype = np.dtype(dtype)
    for kind, dt in ELEMENT_KINDS.items():
        if dtype.kind == "f" and dtype.itemsize == dt.itemsize:
            return kind
    raise ContractError(f"unsupported element type {dtype}; expected float32 or float64")


@dataclass(frozen=True, eq=False)
class Dataset:
    """One field at one time step: an N-dimensional float array.

    The array is copied into a read-only, C-ordered buffer so that a Dataset
    can be shared freely between threads.
    """

    values: np.ndarray
    field_name: str = "data"
    time_step: int = 0

    def __post_init__(self):
        arr = np.asarray(self.values)
        kind = element_kind_of(arr.dtype)
        if arr.ndim < 1 or arr.size < 1:
            raise ContractError("dataset must have at least one dimension and one sample")
        if self.time_step < 0:
            raise ContractError(f"time_step must be >= 0, got {self.time_step}")
        arr = np.array(arr, dtype=ELEMENT_KINDS[kind], order="C", copy=True)
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.flatnonzero(bad.ravel())[0])
            raise ContractError(f"non-finite value at flat index {idx}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(s) for s in self.values.shape)

    @property
    def element_kind(self) -> str:
        return element_kind_of(self.values.dtype)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def nbytes(self) -> int:
        return int(self.values.nbytes)

    def with_values(self, values: np.ndarray) -> "Dataset":
        return Dataset(values, field_name=self.field_name, time_step=self.time_step)


@dataclass(frozen=True)
class FieldSeries:
    field_name: str
    steps: tuple[Dataset, ...]

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        if not steps:
            return
        first = steps[0]
        for d in steps:
            if d.field_name != self.field_name:
                raise ContractError(f"step {d.time_step} belongs to field {d.field_name!r}, not {self.field_name!r}")
            if d.shape != first.shape or d.element_kind != first.element_kind:
                raise ContractError("all steps of a series must share shape and element kind")
        ts = [d.time_step for d in steps]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ContractError(f"time steps must be strictly increasing, got {ts}")

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class ErrorControl:
    kind: str
    ceiling: float

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise ContractError(f"unknown error control kind {self.kind!r}")
        if not self.ceiling > 0:
            raise ContractError(f"error ceiling must be positive, got {self.ceiling}")


def error_within(control: ErrorControl, original: Dataset, decoded: Dataset) -> bool:
    """True when the reconstruction error stays at or under the ceiling.

    The mean-squared kind divides the squared-error sum by n so the ceiling
    does not depend on the dataset size.
    """
    if original.shape != decoded.shape:
        raise ContractError(f"shape mismatch: {original.shape} vs {decoded.shape}")
    diff = original.values.astype(np.float64) - decoded.values.astype(np.float64)
    if control.kind == ABSOLUTE:
        err = float(np.max(np.abs(diff)))
    else:
        err = float(np.mean(diff * diff))
    return err <= control.ceiling


@dataclass(frozen=True)
class TargetSpec:
    """What the user asked for: a ratio, a tolerance and an error-bound ceiling."""

    rho_target: float
    epsilon: float
    max_error_bound: float
    max_iterations_per_region: int = 100
    regions: int = 12
    overlap: float = 0.1
    error_kind: str = ABSOLUTE

    def __post_init__(self):
        if not (math.isfinite(self.rho_target) and self.rho_target >= 1):
            raise ContractError(f"target ratio must be >= 1, got {self.rho_target}")
        if not 0 < self.epsilon < 1:
            raise ContractError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not (math.isfinite(self.max_error_bound) and self.max_error_bound > 0):
            raise ContractError(f"max error bound must be positive, got {self.max_error_bound}")
        if self.max_iterations_per_region < 1:
            raise ContractError("max_iterations_per_region must be positive")
        if self.regions < 1:
            raise ContractError("regions must be positive")
        if not 0 <= self.overlap < 0.5:
            raise ContractError(f"overlap must lie in [0, 0.5), got {self.overlap}")
        if self.error_kind not in ERROR_KINDS:
            raise ContractError(f"unknown error kind {self.error_kind!r}")

    @property
    def interval(self) -> tuple[float, float]:
        return acceptance_interval(self)

    def accepts(self, rho: float) -> bool:
        lo, hi = acceptance_interval(self)
        return lo <= rho <= hi

    def error_control(self) -> ErrorControl:
        return ErrorControl(self.error_kind, self.max_error_bound)


def acceptance_interval(spec: TargetSpec) -> tuple[float, float]:
    return ((1 - spec.epsilon) * spec.rho_target, (1 + spec.epsilon) * spec.rho_target)


@dataclass(frozen=True)
class Region:
    index: int
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ContractError(f"region {self.index}: lower {self.lower} must be < upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class StepRecord:
    """Outcome for one time step of a field series."""

    time_step: int
    error_bound: float
    rho_achieved: float
    retrained: bool
    feasible: bool
    compressor_calls: int
    elapsed: float
    traces: tuple = ()
    error: Optional[str] = None


@dataclass(frozen=True)
class TuneResult:
    """Recommended bound plus telemetry.

    For a multi-step series the top-level values describe the final step and
    ``per_step_log`` holds every step; ``compressor_calls`` is the total.
    """

    error_bound: float
    rho_achieved: float
    feasible: bool
    compressor_calls: int
    elapsed: float
    field_name: str = "data"
    per_step_log: tuple[StepRecord, ...] = ()
    traces: tuple = ()
    error: Optional[str] = None

    @property
    def all_feasible(self) -> bool:
        if self.per_step_log:
            return all(s.feasible for s in self.per_step_log)
        return self.feasible

    @property
    def retrain_steps(self) -> list[int]:
        return [s.time_step for s in self.per_step_log if s.retrained]


__all__ = [
    "ABSOLUTE",
    "MSE",
    "ContractError",
    "Dataset",
    "ErrorControl",
    "FieldSeries",
    "Region",
    "StepRecord",
    "TargetSpec",
    "TuneResult",
    "acceptance_interval",
    "element_kind_of",
    "error_within",
]
