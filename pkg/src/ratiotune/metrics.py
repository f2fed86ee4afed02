"""Reconstruction-quality metrics: PSNR, RMSE, max error, SSIM and the
lag autocorrelation of the error series."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import ContractError, Dataset

SSIM_WINDOW = 8
K1, K2 = 0.01, 0.03


class MetricError(ValueError):
    pass


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = a.values if isinstance(a, Dataset) else np.asarray(a)
    b = b.values if isinstance(b, Dataset) else np.asarray(b)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def rmse(d, d2) -> float:
    a, b = _pair(d, d2)
    diff = a - b
    return math.sqrt(float(np.mean(diff * diff)))


def max_abs_error(d, d2) -> float:
    a, b = _pair(d, d2)
    return float(np.max(np.abs(a - b)))


def psnr(d, d2) -> float:
    """20*log10(range / rmse), with the range taken from the original ``d``."""
    a, _ = _pair(d, d2)
    err = rmse(d, d2)
    if err == 0:
        return math.inf
    value_range = float(a.max() - a.min())
    if value_range == 0:
        raise MetricError("PSNR undefined: original data is constant but the reconstruction differs")
    return 20.0 * math.log10(value_range / err)


def ssim(a, b) -> float:
    """Mean SSIM over all 8x8 windows (stride 1) of two 2-D slices.

    Uses population statistics inside each window and
    C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L the value range of ``a``
    (L = 1 when ``a`` is constant, which keeps the constants nonzero).
    """
    x, y = _pair(a, b)
    if x.ndim != 2:
        raise ContractError(f"ssim needs 2-D slices, got {x.ndim}-D")
    if min(x.shape) < SSIM_WINDOW:
        raise MetricError(f"slice {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    L = float(x.max() - x.min()) or 1.0
    c1, c2 = (K1 * L) ** 2, (K2 * L) ** 2
    wx = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
    wy = sliding_window_view(y, (SSIM_WINDOW, SSIM_WINDOW))
    mx = wx.mean(axis=(-2, -1))
    my = wy.mean(axis=(-2, -1))
    dx = wx - mx[..., None, None]
    dy = wy - my[..., None, None]
    vx = (dx * dx).mean(axis=(-2, -1))
    vy = (dy * dy).mean(axis=(-2, -1))
    cxy = (dx * dy).mean(axis=(-2, -1))
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def slice_2d(arr: np.ndarray, axis: int = 0, index: Optional[int] = None) -> Optional[np.ndarray]:
    """The 2-D view SSIM is computed on; None for 1-D data."""
    if arr.ndim == 1:
        return None
    if arr.ndim == 2:
        return arr
    idx = arr.shape[axis] // 2 if index is None else index
    out = np.take(arr, idx, axis=axis)
    while out.ndim > 2:
        out = np.take(out, out.shape[0] // 2, axis=0)
    return out


def acf_error(d, d2, lag: int = 1) -> float:
    """Lag autocorrelation of the flattened error series ``d - d2``.

    Computed as the Pearson correlation between the series and its
    ``lag``-shifted copy, so a perfectly alternating error gives exactly -1.
    Returns 0 when either segment has no variance.
    """
    a, b = _pair(d, d2)
    x = (a - b).ravel()
    if not 1 <= lag < len(x):
        raise ContractError(f"lag must satisfy 1 <= lag < n, got lag={lag}, n={len(x)}")
    head = x[:-lag] - x[:-lag].mean()
    tail = x[lag:] - x[lag:].mean()
    denom = math.sqrt(float(np.dot(head, head)) * float(np.dot(tail, tail)))
    if denom == 0:
        return 0.0
    return float(np.dot(head, tail)) / denom


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    rmse: float
    max_abs_error: float
    ssim: Optional[float]
    acf_error_lag1: float
    ratio: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def quality_report(original: Dataset, decoded: Dataset, ratio: Optional[float] = None, axis: int = 0, index: Optional[int] = None) -> QualityReport:
    a = slice_2d(original.values, axis, index)
    b = slice_2d(decoded.values, axis, index)
    s = None
    if a is not None and min(a.shape) >= SSIM_WINDOW:
        s = ssim(a, b)
    try:
        p = psnr(original, decoded)
    except MetricError:
        p = math.nan
    return QualityReport(
        psnr=p,
        rmse=rmse(original, decoded),
        max_abs_error=max_abs_error(original, decoded),
        ssim=s,
        acf_error_lag1=acf_error(original, decoded, 1) if original.n > 1 else 0.0,
        ratio=ratio,
    )
