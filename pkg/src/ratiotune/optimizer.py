"""Derivative-free scalar global minimisation with an early-exit cutoff.

The search starts from a seeded random point and then alternates two
proposal rules:

* a Lipschitz lower-bound step: with ``k`` the largest observed slope
  between any two evaluations (inflated by 1.1), the lower bound
  ``LB(x) = max_i f_i - k |x - x_i|`` is evaluated on a fixed grid of 4096
  points and its minimiser is proposed (ties go to the grid point farthest
  from every evaluated point, which turns flat models into space filling);
* a local refinement.  When the caller supplies the target ratio and two
  neighbouring evaluations straddle it, the crossing is interpolated on
  log(ratio) inside that bracket (bisecting when the bracket stops
  shrinking fast).  Otherwise a parabola is fitted through the best point
  and the edges of its valley, and its vertex is proposed if it is convex
  and does not creep; failing that, the gap next to the best point (or at
  the end of the flat run it sits on) is bisected, in log space when it
  spans more than a factor of four.

If a rule has nothing new to offer the other one is used; if neither does,
a seeded random point is drawn.  The search stops as soon as a value at or
below ``cutoff`` is seen, or after ``max_iters`` evaluations.

:class:`GlobalMinimizer` exposes the search as ask/tell so callers can run
many searches in lockstep; :func:`find_min_global_with_cutoff` is the plain
loop around it.

Random numbers come from SplitMix64 (``state += 0x9E3779B97F4A7C15``, then
two xor-shift-multiply rounds with ``0xBF58476D1CE4E5B9`` and
``0x94D049BB133111EB``; doubles take the top 53 bits), so a given seed gives
the same trace in any language.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA_DEFAULT = 0.8 * sys.float_info.max
GRID_POINTS = 4096
LIPSCHITZ_INFLATION = 1.1
DEDUP_REL_TOL = 1e-12
REFINE_REL_GAP = 1e-6
GEOMETRIC_SPAN = 4.0

CUTOFF = "cutoff"
BUDGET = "budget"
MODEL_CONVERGENCE = "model_convergence"
CANCELLED = "cancelled"


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def derive_seed(base: int, *keys: int) -> int:
    """Deterministically mix integer keys into a base seed."""
    state = base & MASK64
    for key in keys:
        state = SplitMix64(state ^ ((key * 0x9E3779B97F4A7C15) & MASK64)).next_u64()
    return state


@dataclass(frozen=True)
class LossSpec:
    rho_target: float
    gamma: float = GAMMA_DEFAULT
    absolute: bool = False

    def __post_init__(self):
        if not self.rho_target > 0:
            raise ValueError("rho_target must be positive")
        if not self.gamma > self.rho_target**2:
            raise ValueError("gamma must exceed rho_target squared")


def clamped_loss(rho_r: float, spec: LossSpec) -> float:
    """min((rho_r - rho_t)^2, gamma); min(|rho_r - rho_t|, gamma) with ``absolute``."""
    gap = rho_r - spec.rho_target
    raw = abs(gap) if spec.absolute else gap * gap
    if math.isnan(raw):
        return spec.gamma
    return min(raw, spec.gamma)


def cutoff_threshold(spec: LossSpec, epsilon: float) -> float:
    """Loss level that means "inside the tolerance": (eps * rho_t)^2."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if spec.absolute:
        return epsilon * spec.rho_target
    return epsilon * epsilon * spec.rho_target * spec.rho_target


@dataclass(frozen=True)
class Evaluation:
    x: float
    ratio: Optional[float]
    loss: float


@dataclass
class SearchTrace:
    evaluations: list = field(default_factory=list)
    terminated_by: Optional[str] = None
    region: Optional[int] = None

    @property
    def best(self) -> int:
        losses = [e.loss for e in self.evaluations]
        return int(np.argmin(losses)) if losses else -1

    @property
    def best_evaluation(self) -> Evaluation:
        return self.evaluations[self.best]

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "terminated_by": self.terminated_by,
            "best": self.best,
            "evaluations": [[e.x, e.ratio, e.loss] for e in self.evaluations],
        }


class EvaluationError(RuntimeError):
    """The objective raised; ``x`` is the point it was called with."""

    def __init__(self, x: float, cause: BaseException):
        super().__init__(f"objective failed at x={x!r}: {cause}")
        self.x = x


class GlobalMinimizer:
    """Ask/tell form of the search; see the module docstring."""

    def __init__(
        self,
        lower: float,
        upper: float,
        cutoff: float = 0.0,
        max_iters: int = 100,
        seed: int = 0,
        target: Optional[float] = None,
    ):
        if not lower < upper:
            raise ValueError(f"need lower < upper, got [{lower}, {upper}]")
        if max_iters < 1:
            raise ValueError("max_iters must be positive")
        self.lower, self.upper = float(lower), float(upper)
        self.cutoff = cutoff
        self.max_iters = max_iters
        self.rng = SplitMix64(seed)
        self.trace = SearchTrace()
        self.xs: list[float] = []
        self.fs: list[float] = []
        self.k = 0.0
        self._tol = DEDUP_REL_TOL * (self.upper - self.lower)
        self._grid = np.linspace(self.lower, self.upper, GRID_POINTS)
        self._mind = np.full(GRID_POINTS, np.inf)
        self._lb = np.full(GRID_POINTS, -np.inf)
        self._lb_k = None
        self._quad_next = False
        self._moves: list[float] = []
        self.target = target
        self.rs: list[Optional[float]] = []
        self._widths: list[float] = []
        self._pending: Optional[float] = None

    @property
    def done(self) -> bool:
        return self.trace.terminated_by is not None

    def stop(self, reason: str = CANCELLED):
        if not self.done:
            self.trace.terminated_by = reason

    def ask(self) -> Optional[float]:
        if self.done:
            return None
        if self._pending is None:
            self._pending = self._propose()
            if self._pending is None:
                self.trace.terminated_by = MODEL_CONVERGENCE
        return self._pending

    def tell(self, x: float, value: float, ratio: Optional[float] = None):
        if self.done:
            raise RuntimeError("search already finished")
        if math.isnan(value):
            raise ValueError(f"objective returned NaN at x={x!r}")
        self._pending = None
        for xi, fi in zip(self.xs, self.fs):
            dx = abs(x - xi)
            if dx > 0:
                with np.errstate(over="ignore"):
                    slope = abs(value - fi) / dx
                if slope > self.k:
                    self.k = slope
        self.xs.append(float(x))
        self.fs.append(float(value))
        self.rs.append(None if ratio is None else float(ratio))
        self._mind = np.minimum(self._mind, np.abs(self._grid - x))
        if self._lb_k is not None:
            self._fold_lb(x, value)
        self.trace.evaluations.append(Evaluation(float(x), ratio, float(value)))
        if value <= self.cutoff:
            self.trace.terminated_by = CUTOFF
        elif len(self.xs) >= self.max_iters:
            self.trace.terminated_by = BUDGET

    # -- proposals -----------------------------------------------------------

    def _propose(self) -> Optional[float]:
        if not self.xs:
            return self.lower + self.rng.uniform() * (self.upper - self.lower)
        rules = (self._refine, self._lipschitz) if self._quad_next else (self._lipschitz, self._refine)
        for rule in rules:
            x = rule()
            if x is not None:
                self._quad_next = rule == self._lipschitz
                return x
        for _ in range(64):
            x = self.lower + self.rng.uniform() * (self.upper - self.lower)
            if not self._is_duplicate(x):
                return x
        return None

    def _is_duplicate(self, x: float) -> bool:
        # relative, so bounds spread over many decades near zero stay distinct
        return any(abs(x - xi) <= max(DEDUP_REL_TOL * max(abs(x), abs(xi)), sys.float_info.min) for xi in self.xs)

    def _fold_lb(self, x, value):
        with np.errstate(over="ignore", invalid="ignore"):
            self._lb = np.fmax(self._lb, value - self._lb_k * np.abs(self._grid - x))

    def _lipschitz(self) -> Optional[float]:
        k = LIPSCHITZ_INFLATION * self.k
        if self._lb_k != k:
            self._lb_k = k
            self._lb = np.full(GRID_POINTS, -np.inf)
            for xi, fi in zip(self.xs, self.fs):
                self._fold_lb(xi, fi)
        free = self._mind > self._tol
        # between two neighbouring evaluations the bound bottoms out where
        # their cones meet; adding those points makes the 1-D model exact
        order = np.argsort(self.xs)
        xs = np.asarray(self.xs)[order]
        fs = np.asarray(self.fs)[order]
        gap = np.diff(xs)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            shift = np.nan_to_num((fs[:-1] - fs[1:]) / (2.0 * k)) if k > 0 else np.zeros_like(gap)
            mid = np.clip(0.5 * (xs[:-1] + xs[1:]) + shift, xs[:-1], xs[1:])
            mid_lb = np.fmax(fs[:-1] - k * (mid - xs[:-1]), fs[1:] - k * (xs[1:] - mid))
        mid_d = np.minimum(mid - xs[:-1], xs[1:] - mid)
        keep = mid_d > self._tol
        cand = np.concatenate([self._grid[free], mid[keep]])
        if cand.size == 0:
            return None
        lb = np.concatenate([self._lb[free], mid_lb[keep]])
        dist = np.concatenate([self._mind[free], mid_d[keep]])
        best = np.nanmin(lb)
        ties = np.flatnonzero(lb == best)
        if ties.size == 0:
            ties = np.arange(cand.size)
        pick = ties[np.argmax(dist[ties])]
        return float(cand[pick])

    def _refine(self) -> Optional[float]:
        if self.target is not None:
            x = self._crossing()
            if x is not None:
                return x
        return self._quadratic()

    def _crossing(self) -> Optional[float]:
        """Interpolate the crossing of the target inside a sign bracket.

        Among neighbouring evaluations whose ratios straddle the target, the
        pair holding the lowest loss is used.  The crossing is interpolated
        on log(ratio) and kept away from the ends of the bracket; when the
        bracket failed to halve since the last crossing step, it is bisected.
        """
        pts = sorted((x, r, f) for x, r, f in zip(self.xs, self.rs, self.fs) if r is not None and math.isfinite(r))
        best = None
        for (xa, ra, fa), (xb, rb, fb) in zip(pts, pts[1:]):
            if (ra - self.target) * (rb - self.target) < 0 and xb - xa > 2 * self._tol:
                score = min(fa, fb)
                if best is None or score < best[0]:
                    best = (score, xa, ra, xb, rb)
        if best is None:
            return None
        _, xa, ra, xb, rb = best
        width = xb - xa
        if self._widths and width > 0.5 * self._widths[-1]:
            x = 0.5 * (xa + xb)
        else:
            t, ra_, rb_ = self.target, ra, rb
            if min(ra, rb, t) > 0:
                t, ra_, rb_ = math.log(t), math.log(ra), math.log(rb)
            frac = min(max((t - ra_) / (rb_ - ra_), 0.05), 0.95)
            x = xa + frac * width
        self._widths.append(width)
        return None if self._is_duplicate(x) else float(x)

    def _quadratic(self) -> Optional[float]:
        """Parabola through the best point and the edges of its valley.

        The valley is the run of neighbours within twice the best value; its
        edges are the first clearly worse point on each side.  Fitting to the
        edges rather than to the closest points follows the coarse shape of
        the basin and ignores flat floors and fine-scale jitter.  When the
        vertex is unusable, or creeps (moves at least half as far as the
        step before last), the gap between the best point and its neighbour
        on the side the fit points to is bisected instead; if the best point
        sits on a flat run, the gap at the end of that run is used.
        """
        n = len(self.xs)
        if n < 3:
            return None
        order = np.argsort(self.xs, kind="stable")
        xs = np.asarray(self.xs)[order]
        fs = np.asarray(self.fs)[order]
        b = int(np.argmin(fs))
        level = fs[b] + abs(fs[b])
        lo = b
        while lo > 0 and fs[lo - 1] <= level:
            lo -= 1
        hi = b
        while hi < n - 1 and fs[hi + 1] <= level:
            hi += 1
        left, right = max(lo - 1, 0), min(hi + 1, n - 1)
        pick = sorted({left, b, right})
        for i in sorted(range(n), key=lambda i: abs(i - b)):
            if len(pick) == 3:
                break
            if i not in pick:
                pick = sorted(pick + [i])

        vertex = None
        if all(fs[i] != fs[b] for i in pick if i != b):
            vertex = _parabola_vertex(xs[pick], fs[pick])
        if vertex is not None:
            vertex = float(min(max(vertex, self.lower), self.upper))
            move = abs(vertex - xs[b])
            creeping = len(self._moves) >= 2 and move >= 0.5 * self._moves[-2]
            if not creeping and not self._is_duplicate(vertex):
                self._moves.append(move)
                return vertex

        if vertex is not None and vertex != xs[b]:
            sides = [1, -1] if vertex > xs[b] else [-1, 1]
        else:
            sides = [1, -1] if xs[right] - xs[b] >= xs[b] - xs[left] else [-1, 1]
        for side in sides:
            # step over a flat floor: its edge is where the structure is
            j = b
            while 0 <= j + side < n and fs[j + side] == fs[b]:
                j += side
            nb = j + side
            if not 0 <= nb < n:
                continue
            lo_x, hi_x = sorted((float(xs[j]), float(xs[nb])))
            if hi_x - lo_x <= REFINE_REL_GAP * max(abs(lo_x), abs(hi_x)):
                continue
            mid = _midpoint(lo_x, hi_x)
            if self._is_duplicate(mid):
                continue
            self._moves.append(abs(mid - xs[b]))
            return mid
        return None

    def result(self) -> tuple[float, float, SearchTrace]:
        best = self.trace.best_evaluation
        return best.x, best.loss, self.trace


def _midpoint(lo: float, hi: float) -> float:
    """Arithmetic midpoint, or the geometric one across a wide positive span.

    Near zero the interesting bounds are spread over orders of magnitude, so
    halving in log space reaches them in far fewer steps.
    """
    if lo > 0 and hi > GEOMETRIC_SPAN * lo:
        return math.sqrt(lo) * math.sqrt(hi)
    return 0.5 * (lo + hi)


def _parabola_vertex(x: np.ndarray, f: np.ndarray) -> Optional[float]:
    """Vertex of the parabola through three points, or None unless it opens upward."""
    x0, x1, x2 = x
    f0, f1, f2 = f
    if x0 == x1 or x0 == x2 or x1 == x2:
        return None
    with np.errstate(all="ignore"):
        d01 = (f1 - f0) / (x1 - x0)
        d02 = (f2 - f0) / (x2 - x0)
        curv = (d02 - d01) / (x2 - x1)
        if not (np.isfinite(curv) and curv > 0):
            return None
        vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curv)
    return float(vertex) if np.isfinite(vertex) else None


def find_min_global_with_cutoff(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    cutoff: float = 0.0,
    max_iters: int = 100,
    seed: int = 0,
) -> tuple[float, float, SearchTrace]:
    """Minimise ``f`` on [lower, upper]; returns (x*, f(x*), trace)."""
    opt = GlobalMinimizer(lower, upper, cutoff, max_iters, seed)
    while (x := opt.ask()) is not None:
        try:
            value = f(x)
        except Exception as exc:
            raise EvaluationError(x, exc) from exc
        opt.tell(x, value)
    return opt.result()


def climbing_bisection(
    ratio: Callable[[float], float],
    lo_target: float,
    hi_target: float,
    upper: float,
    lower: float = sys.float_info.min,
    max_evals: int = 200,
) -> tuple[Optional[float], int]:
    """Binary search baseline that climbs from the smallest positive bound.

    Bisects the ordered set of IEEE-754 doubles between ``lower`` and
    ``upper`` assuming the ratio grows with the bound, and stops once the
    ratio lands in [lo_target, hi_target].  Returns (bound or None, evaluations).
    """
    lo = _bits(lower)
    hi = _bits(upper)
    evals = 0
    while lo <= hi and evals < max_evals:
        mid = (lo + hi) // 2
        x = _from_bits(mid)
        r = ratio(x)
        evals += 1
        if lo_target <= r <= hi_target:
            return x, evals
        if r < lo_target:
            lo = mid + 1
        else:
            hi = mid - 1
    return None, evals


def _bits(x: float) -> int:
    return int(np.array(x, dtype="<f8").view("<i8"))


def _from_bits(b: int) -> float:
    return float(np.array(b, dtype="<i8").view("<f8"))
