"""Region-parallel tuning of a compressor's error bound.

The bound range [0, U] is cut into K slightly overlapping regions and each
region gets its own seeded search.  Searches advance in lockstep rounds:
every round asks each live search for one bound, evaluates the batch on the
worker pool and feeds the ratios back in region order.  The first round
that produces an in-tolerance ratio ends training; the lowest-index region
among that round's hits wins and every other search is cancelled.  Because
the winner is picked by (round, region) rather than by wall-clock arrival,
results and call counts do not depend on the pool size.
"""

from __future__ import annotations

import time
import zlib
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .compressor import BoundUnsupported, CompressorError, CompressorHandle
from .model import (
    ContractError,
    Dataset,
    ErrorControl,
    FieldSeries,
    Region,
    StepRecord,
    TargetSpec,
    TuneResult,
    error_within,
)
from .optimizer import (
    BUDGET,
    CANCELLED,
    CUTOFF,
    Evaluation,
    GlobalMinimizer,
    LossSpec,
    SearchTrace,
    clamped_loss,
    cutoff_threshold,
    derive_seed,
)

FAILED = "error"
ORACLE_POINTS = 10_000


class RegionError(CompressorError):
    """A compressor call failed inside one region's search."""

    def __init__(self, region: Optional[int], bound: float, cause: CompressorError):
        CompressorError.__init__(self, cause.codec, f"region {region} at bound {bound!r}: {cause}")
        self.region = region
        self.bound = bound
        self.cause = cause


class TuneError(RuntimeError):
    """Every region failed; ``errors`` holds one RegionError per region."""

    def __init__(self, errors: Sequence[RegionError]):
        detail = "; ".join(str(e) for e in errors)
        super().__init__(f"all {len(errors)} regions failed: {detail}")
        self.errors = list(errors)


@dataclass(frozen=True)
class WorkerOutcome:
    region: Optional[int]
    rho_achieved: Optional[float]
    error_bound: Optional[float]
    hit: bool
    trace: SearchTrace
    calls: int


@dataclass
class Schedule:
    regions: list
    tasks_per_dataset: int
    retrain_log: dict = field(default_factory=dict)

    @classmethod
    def for_spec(cls, spec: TargetSpec) -> "Schedule":
        regions = make_error_bounds(spec.max_error_bound, spec.regions, spec.overlap)
        return cls(regions, len(regions))


def make_error_bounds(U: float, K: int, alpha: float) -> list[Region]:
    """Split [0, U] into K regions widened by ``alpha`` of the base width on each side."""
    if not U > 0:
        raise ContractError(f"U must be positive, got {U}")
    if K < 1:
        raise ContractError(f"K must be at least 1, got {K}")
    if not 0 <= alpha < 0.5:
        raise ContractError(f"alpha must lie in [0, 0.5), got {alpha}")
    w = U / K
    regions = []
    for i in range(K):
        lo = max(0.0, i * w - alpha * w)
        hi = U if i == K - 1 else min(U, (i + 1) * w + alpha * w)
        regions.append(Region(i, lo, hi))
    return regions


def field_seed(seed: int, field_name: str, time_step: int, region: int) -> int:
    return derive_seed(seed, zlib.crc32(field_name.encode()), time_step, region)


# -- evaluation ------------------------------------------------------------------

Evaluator = Callable[[Sequence[float]], list]


def make_evaluator(c: CompressorHandle, d: Dataset, kind: str, pool: Optional[Executor] = None) -> Evaluator:
    """Batch ratio evaluation; each slot holds a ratio or the CompressorError raised."""

    def one(bound: float):
        try:
            return c.eval_ratio(d, bound, kind)
        except CompressorError as exc:
            return exc

    def run(bounds: Sequence[float]) -> list:
        if pool is None or len(bounds) == 1:
            return [one(b) for b in bounds]
        return list(pool.map(one, bounds))

    return run


class RegionSearch:
    """One region's search, driven one evaluation at a time."""

    def __init__(self, spec: TargetSpec, region: Region, lower: float, seed: int, loss: LossSpec):
        self.spec = spec
        self.region = region
        self.loss = loss
        self.minimizer = GlobalMinimizer(
            lower,
            region.upper,
            cutoff_threshold(loss, spec.epsilon),
            spec.max_iterations_per_region,
            seed,
            target=loss.rho_target,
        )
        self.trace.region = region.index
        self.error: Optional[RegionError] = None
        self.hit = False

    @property
    def trace(self) -> SearchTrace:
        return self.minimizer.trace

    @property
    def done(self) -> bool:
        return self.minimizer.done

    def ask(self) -> Optional[float]:
        return self.minimizer.ask()

    def tell(self, bound: float, result) -> None:
        if isinstance(result, BoundUnsupported):
            self.minimizer.tell(bound, self.loss.gamma, None)
        elif isinstance(result, CompressorError):
            self.error = RegionError(self.region.index, bound, result)
            self.minimizer.stop(FAILED)
        else:
            self.minimizer.tell(bound, clamped_loss(result, self.loss), result)
            if self.spec.accepts(result):
                self.hit = True
                self.minimizer.stop(CUTOFF)

    def outcome(self, calls: int) -> WorkerOutcome:
        if self.hit:
            ev = self.trace.evaluations[-1]
        else:
            ev = closest_evaluation([self.trace], self.spec.rho_target)
        return WorkerOutcome(
            self.region.index,
            None if ev is None else ev.ratio,
            None if ev is None else ev.x,
            self.hit,
            self.trace,
            calls,
        )


def run_rounds(searches: Sequence[RegionSearch], evaluate: Evaluator) -> tuple[Optional[RegionSearch], int]:
    """Advance all searches in lockstep until one hits or all finish."""
    calls = 0
    while True:
        batch = [(s, x) for s in searches if (x := s.ask()) is not None]
        if not batch:
            return None, calls
        results = evaluate([x for _, x in batch])
        calls += len(batch)
        winner = None
        for (s, x), r in zip(batch, results):
            s.tell(x, r)
            if s.hit and winner is None:
                winner = s
        if winner is not None:
            for s in searches:
                if s is not winner:
                    s.minimizer.stop(CANCELLED)
            return winner, calls


def closest_evaluation(traces: Iterable[SearchTrace], rho_target: float) -> Optional[Evaluation]:
    """First evaluation (region order, then call order) minimising (rho_t - rho)^2."""
    best = None
    for trace in traces:
        for ev in trace.evaluations:
            if ev.ratio is None:
                continue
            if best is None or (rho_target - ev.ratio) ** 2 < (rho_target - best.ratio) ** 2:
                best = ev
    return best


def _search_lower(region: Region, c: CompressorHandle, d: Dataset, kind: str) -> float:
    return max(region.lower, c.capabilities.min_bound_for(d.element_kind))


def try_prediction(spec: TargetSpec, d: Dataset, c: CompressorHandle, prediction: float) -> WorkerOutcome:
    """Evaluate a carried-over bound once."""
    try:
        rho = c.eval_ratio(d, prediction, spec.error_kind)
    except BoundUnsupported:
        rho = None
    except CompressorError as exc:
        raise RegionError(None, prediction, exc) from exc
    loss = LossSpec(spec.rho_target)
    hit = rho is not None and spec.accepts(rho)
    trace = SearchTrace(
        [Evaluation(prediction, rho, loss.gamma if rho is None else clamped_loss(rho, loss))],
        CUTOFF if hit else BUDGET,
    )
    return WorkerOutcome(None, rho, prediction, hit, trace, 1)


def worker_task(
    spec: TargetSpec,
    d: Dataset,
    c: CompressorHandle,
    prediction: Optional[float],
    region: Region,
    seed: int = 0,
    absolute_loss: bool = False,
) -> WorkerOutcome:
    """Search one region, trying ``prediction`` first when one is given."""
    calls = 0
    head: list = []
    if prediction is not None:
        pred = try_prediction(spec, d, c, prediction)
        if pred.hit:
            return pred
        calls, head = 1, pred.trace.evaluations
    loss = LossSpec(spec.rho_target, absolute=absolute_loss)
    search = RegionSearch(spec, region, _search_lower(region, c, d, spec.error_kind), seed, loss)
    _, n = run_rounds([search], make_evaluator(c, d, spec.error_kind))
    if search.error is not None:
        raise search.error
    search.trace.evaluations[:0] = head
    out = search.outcome(calls + n)
    if not out.hit and head:
        best = closest_evaluation([search.trace], spec.rho_target)
        out = WorkerOutcome(region.index, best.ratio, best.x, False, search.trace, calls + n)
    return out


def train_region_parallel(
    spec: TargetSpec,
    d: Dataset,
    c: CompressorHandle,
    seed: int = 0,
    pool: Optional[Executor] = None,
    absolute_loss: bool = False,
) -> TuneResult:
    """Search all regions concurrently and return the winning or closest bound."""
    start = time.perf_counter()
    loss = LossSpec(spec.rho_target, absolute=absolute_loss)
    searches = []
    for region in make_error_bounds(spec.max_error_bound, spec.regions, spec.overlap):
        lower = _search_lower(region, c, d, spec.error_kind)
        if lower >= region.upper:
            continue
        searches.append(RegionSearch(spec, region, lower, field_seed(seed, d.field_name, d.time_step, region.index), loss))
    if not searches:
        raise ContractError(f"{c.name} accepts no bound in [0, {spec.max_error_bound}]")

    winner, calls = run_rounds(searches, make_evaluator(c, d, spec.error_kind, pool))
    traces = tuple(s.trace for s in searches)
    elapsed = time.perf_counter() - start
    if winner is not None:
        ev = winner.trace.evaluations[-1]
        return TuneResult(ev.x, ev.ratio, True, calls, elapsed, d.field_name, traces=traces)

    errors = [s.error for s in searches if s.error is not None]
    best = closest_evaluation(traces, spec.rho_target)
    if best is None:
        if errors:
            raise TuneError(errors)
        raise ContractError(f"{c.name} rejected every bound tried")
    note = f"{len(errors)} region(s) failed" if errors else None
    return TuneResult(best.x, best.ratio, False, calls, elapsed, d.field_name, traces=traces, error=note)


def run_field_series(
    spec: TargetSpec,
    series: FieldSeries,
    c: CompressorHandle,
    seed: int = 0,
    pool: Optional[Executor] = None,
    absolute_loss: bool = False,
) -> TuneResult:
    """Tune every step, reusing the last feasible bound until it stops fitting.

    A failing step is logged with its error and the series moves on.
    """
    if not series.steps:
        raise ContractError(f"series {series.field_name!r} has no steps")
    start = time.perf_counter()
    prediction: Optional[float] = None
    records = []
    for d in series.steps:
        t0 = time.perf_counter()
        calls = 0
        traces: tuple = ()
        try:
            if prediction is not None:
                pred = try_prediction(spec, d, c, prediction)
                calls = 1
                traces = (pred.trace,)
                if pred.hit:
                    records.append(StepRecord(d.time_step, pred.error_bound, pred.rho_achieved, False, True, 1,
                                              time.perf_counter() - t0, traces))
                    continue
            res = train_region_parallel(spec, d, c, seed, pool, absolute_loss)
            calls += res.compressor_calls
            prediction = res.error_bound if res.feasible else None
            records.append(StepRecord(d.time_step, res.error_bound, res.rho_achieved, True, res.feasible, calls,
                                      time.perf_counter() - t0, traces + res.traces, res.error))
        except (CompressorError, TuneError, ContractError) as exc:
            prediction = None
            records.append(StepRecord(d.time_step, float("nan"), float("nan"), True, False, calls,
                                      time.perf_counter() - t0, traces, str(exc)))
    last = records[-1]
    return TuneResult(
        last.error_bound,
        last.rho_achieved,
        last.feasible,
        sum(r.compressor_calls for r in records),
        time.perf_counter() - start,
        series.field_name,
        per_step_log=tuple(records),
        error=last.error,
    )


def run_all_fields(
    spec: TargetSpec,
    fields: Sequence[FieldSeries],
    c: CompressorHandle,
    worker_pool_size: int = 1,
    seed: int = 0,
    absolute_loss: bool = False,
) -> dict[str, TuneResult]:
    """Tune several field series at once.

    Fields run on their own threads; compressor calls from all fields share
    one pool of ``worker_pool_size`` workers.  A field that raises gets an
    error result and does not affect the others.
    """
    if worker_pool_size < 1:
        raise ContractError("pool size must be at least 1")
    names = [f.field_name for f in fields]
    if len(set(names)) != len(names):
        raise ContractError(f"duplicate field names: {names}")

    def one(series: FieldSeries, pool: Optional[Executor]) -> TuneResult:
        try:
            return run_field_series(spec, series, c, seed, pool, absolute_loss)
        except Exception as exc:  # isolate the field
            return TuneResult(float("nan"), float("nan"), False, 0, 0.0, series.field_name, error=str(exc))

    if worker_pool_size == 1:
        return {f.field_name: one(f, None) for f in fields}
    with ThreadPoolExecutor(worker_pool_size, thread_name_prefix="eval") as evals, \
            ThreadPoolExecutor(worker_pool_size, thread_name_prefix="field") as fpool:
        futures = [fpool.submit(one, f, evals) for f in fields]
        return {f.field_name: fut.result() for f, fut in zip(fields, futures)}


def oracle_grid(upper: float, lower: float, points: int = ORACLE_POINTS) -> np.ndarray:
    """Log-spaced bounds from ``lower`` to ``upper`` inclusive."""
    if not 0 < lower < upper:
        raise ContractError(f"need 0 < lower < upper, got {lower}, {upper}")
    return np.geomspace(lower, upper, points)


def oracle_sweep(d: Dataset, c: CompressorHandle, grid: Sequence[float], kind: Optional[str] = None) -> list[tuple[float, float]]:
    """Ratio at every grid bound.

    Bounds the codec maps to the same effective bound share one evaluation.
    """
    if len(grid) == 0:
        raise ContractError("grid must not be empty")
    if any(b > a for a, b in zip(grid[1:], grid)):
        raise ContractError("grid must be sorted ascending")
    args = () if kind is None else (kind,)
    seen: dict[float, float] = {}
    out = []
    for bound in grid:
        key = c.effective_bound(bound)
        if key not in seen:
            seen[key] = c.eval_ratio(d, bound, *args)
        out.append((float(bound), seen[key]))
    return out


def bound_respects(control: ErrorControl, d: Dataset, c: CompressorHandle, bound: float) -> bool:
    """Round-trip ``d`` at ``bound`` and check the error ceiling and the bound itself."""
    if bound > control.ceiling:
        return False
    decoded = c.decompress(c.compress(d, bound, control.kind), like=d)
    return error_within(control, d, decoded) and error_within(ErrorControl(control.kind, bound), d, decoded)


def traces_of(result: TuneResult) -> list[SearchTrace]:
    if result.per_step_log:
        return [t for s in result.per_step_log for t in s.traces]
    return list(result.traces)


def summarize(results: Mapping[str, TuneResult]) -> bool:
    """True when every step of every field landed in tolerance."""
    return all(r.all_feasible and r.error is None for r in results.values())
