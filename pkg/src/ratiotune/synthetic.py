"""Seeded synthetic data for tests, demos and benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Dataset, FieldSeries


def smooth_field(shape: Sequence[int], seed: int, modes: int = 6, noise: float = 1e-3, dtype=np.float32) -> np.ndarray:
    """Sum of random low-frequency cosines plus a little white noise."""
    rng = np.random.default_rng(seed)
    axes = np.meshgrid(*[np.linspace(0.0, 1.0, s, endpoint=False) for s in shape], indexing="ij")
    out = np.zeros(tuple(shape))
    for _ in range(modes):
        freq = rng.uniform(0.5, 6.0, size=len(shape))
        phase = rng.uniform(0, 2 * math.pi)
        amp = rng.uniform(0.2, 1.0)
        out += amp * np.cos(2 * math.pi * sum(f * a for f, a in zip(freq, axes)) + phase)
    out += noise * rng.standard_normal(out.shape)
    return out.astype(dtype)


def random_walk(n: int, seed: int, dtype=np.float32) -> np.ndarray:
    return np.cumsum(np.random.default_rng(seed).standard_normal(n)).astype(dtype)


def corpus(seed: int = 0) -> list[Dataset]:
    """Ten mixed-dimension datasets: 1-D 65536, 2-D 256x256, 3-D 64^3."""
    shapes = [(65536,)] * 4 + [(256, 256)] * 3 + [(64, 64, 64)] * 3
    out = []
    for i, shape in enumerate(shapes):
        s = seed * 1000 + i
        values = random_walk(shape[0], s) if i % 2 and len(shape) == 1 else smooth_field(shape, s)
        out.append(Dataset(values, field_name=f"syn{i}"))
    return out


def non_monotone(n: int = 4096, seed: int = 7, period: int = 64, levels: int = 8, jitter: float = 0.02) -> Dataset:
    """A tiled pattern of integer levels plus small jitter.

    When the quantization step divides the level spacing cleanly the codes
    repeat with the tile and the dictionary stage collapses them; a slightly
    larger bound can break that alignment, so the PQ ratio rises and falls
    as the bound grows.
    """
    rng = np.random.default_rng(seed)
    pattern = rng.integers(0, levels, size=period).astype(np.float64)
    x = np.tile(pattern, -(-n // period))[:n] + rng.uniform(-jitter, jitter, size=n)
    return Dataset(x.astype(np.float32), field_name="nonmono")


def stationary_series(base: np.ndarray, steps: int, field_name: str = "stationary") -> FieldSeries:
    return FieldSeries(field_name, tuple(Dataset(base, field_name, t) for t in range(steps)))


def drift_series(shape: Sequence[int], steps: int, seed: int, rate: float = 0.01, field_name: str = "drift") -> FieldSeries:
    """Amplitude grows by ``rate`` per step, so the ratio at a fixed bound creeps down."""
    base = smooth_field(shape, seed).astype(np.float64)
    return FieldSeries(
        field_name,
        tuple(Dataset((base * (1 + rate * t)).astype(np.float32), field_name, t) for t in range(steps)),
    )


def regime_series(shape: Sequence[int], steps: int, change_at: int, seed: int, field_name: str = "regime") -> FieldSeries:
    """Stationary until ``change_at``, then a much rougher field for the rest."""
    calm = smooth_field(shape, seed)
    rough = smooth_field(shape, seed + 1, modes=12, noise=0.3) * 8
    return FieldSeries(
        field_name,
        tuple(Dataset(calm if t < change_at else rough, field_name, t) for t in range(steps)),
    )


@dataclass(frozen=True)
class StepCurve:
    """Monotone increasing ratio as a function of the bound on [0, upper].

    Each plateau rises by ``tilt`` (relative) from its left to its right
    end, the shape of a typical bound-to-ratio curve: steps with a slight
    upward slope.
    """

    breaks: np.ndarray
    levels: np.ndarray
    upper: float
    tilt: float = 0.0

    def __call__(self, bound: float) -> float:
        i = int(np.searchsorted(self.breaks, bound, side="right"))
        lo, hi = self.plateau(i)
        return float(self.levels[i] * (1.0 + self.tilt * (bound - lo) / (hi - lo)))

    def plateau(self, index: int) -> tuple[float, float]:
        lo = 0.0 if index == 0 else float(self.breaks[index - 1])
        hi = self.upper if index == len(self.breaks) else float(self.breaks[index])
        return lo, hi


def step_curve(seed: int, plateaus: int = 12, upper: float = 1.0, tilt: float = 0.05) -> StepCurve:
    """Random breakpoints on [0, upper] with geometrically rising ratio levels."""
    rng = np.random.default_rng(seed)
    breaks = np.sort(rng.uniform(0, upper, size=plateaus - 1))
    levels = np.cumprod(np.concatenate([[1.5], rng.uniform(1.3, 2.0, size=plateaus - 1)]))
    return StepCurve(breaks, levels, upper, tilt)
