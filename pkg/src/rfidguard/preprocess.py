"""Smoothing and uniform-grid resampling of reader streams."""
from __future__ import annotations

import numpy as np

__all__ = [
    "FILTER_WINDOW",
    "PreprocessError",
    "Series",
    "moving_average",
    "pchip_slopes",
    "pchip_eval",
    "pchip_resample",
    "preprocess",
]


# Moving-average width in samples.  Per-tag streams arrive at agg_rate /
# tag_count (6 Hz by default), so three samples already span half a second.
FILTER_WINDOW = 3


class PreprocessError(ValueError):
    pass


class Series:
    """Timestamped samples with strictly increasing, finite timestamps."""

    __slots__ = ("t", "y")

    def __init__(self, t, y):
        t = np.array(t, dtype=float)
        y = np.array(y, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise PreprocessError("t and y must be 1-D and the same length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise PreprocessError("series values must be finite")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise PreprocessError("timestamps must be strictly increasing")
        t.flags.writeable = False
        y.flags.writeable = False
        self.t = t
        self.y = y

    def __len__(self):
        return self.t.size

    def __repr__(self):
        return f"Series(n={len(self)}, t=[{self.t[:1]}..{self.t[-1:]}])"

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return np.array_equal(self.t, other.t) and np.array_equal(self.y, other.y)

    def window(self, t0: float, t1: float) -> "Series":
        """Samples with ``t0 <= t <= t1``."""
        lo = np.searchsorted(self.t, t0, side="left")
        hi = np.searchsorted(self.t, t1, side="right")
        return Series(self.t[lo:hi], self.y[lo:hi])


def moving_average(s: Series, w: int) -> Series:
    """Centred moving average over ``w`` samples (``w`` odd).

    Near the ends the window shrinks symmetrically to the widest odd width
    that fits, so the first and last samples pass through unchanged.
    """
    n = len(s)
    if int(w) != w or w < 1 or w % 2 == 0:
        raise PreprocessError("window must be a positive odd integer")
    if w > n:
        raise PreprocessError("window longer than series")
    half = np.minimum.reduce([np.full(n, (w - 1) // 2), np.arange(n), np.arange(n)[::-1]])
    csum = np.concatenate(([0.0], np.cumsum(s.y)))
    idx = np.arange(n)
    out = (csum[idx + half + 1] - csum[idx - half]) / (2 * half + 1)
    return Series(s.t, out)


def pchip_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Knot derivatives of the monotone piecewise cubic Hermite interpolant.

    Interior slopes use the weighted harmonic mean of the adjacent secants
    (zero at local extrema); end slopes use the one-sided three-point
    formula, limited so the end intervals stay monotone.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h = np.diff(x)
    delta = np.diff(y) / h
    n = x.size
    d = np.zeros(n)
    if n == 2:
        d[:] = delta[0]
        return d

    h0, h1 = h[:-1], h[1:]
    s0, s1 = delta[:-1], delta[1:]
    w1 = 2 * h1 + h0
    w2 = h1 + 2 * h0
    same = (np.sign(s0) * np.sign(s1)) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = (w1 / s0 + w2 / s1) / (w1 + w2)
        d[1:-1] = np.where(same, 1.0 / inv, 0.0)

    d[0] = _end_slope(h[0], h[1], delta[0], delta[1])
    d[-1] = _end_slope(h[-1], h[-2], delta[-1], delta[-2])
    return d


def _end_slope(h0, h1, m0, m1):
    d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > abs(3 * m0):
        return 3 * m0
    return d


def pchip_eval(x, y, d, xq) -> np.ndarray:
    """Evaluate the cubic Hermite interpolant with knot slopes ``d`` at ``xq``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xq = np.asarray(xq, dtype=float)
    k = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, x.size - 2)
    h = x[k + 1] - x[k]
    s = (xq - x[k]) / h
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1]


def uniform_grid(t0: float, t1: float, rate: float) -> np.ndarray:
    m = int(np.floor((t1 - t0) * rate + 1e-9)) + 1
    return t0 + np.arange(m) / rate


def pchip_resample(s: Series, grid_rate: float) -> Series:
    """Resample onto ``t[0], t[0] + 1/grid_rate, ...`` up to ``t[-1]``."""
    if len(s) < 2:
        raise PreprocessError("need at least two samples to interpolate")
    if not grid_rate > 0:
        raise PreprocessError("grid_rate must be positive")
    grid = uniform_grid(s.t[0], s.t[-1], grid_rate)
    d = pchip_slopes(s.t, s.y)
    return Series(grid, pchip_eval(s.t, s.y, d, grid))


def preprocess(s: Series, window: int = FILTER_WINDOW, grid_rate: float = 100.0, order: str = "filter-first") -> Series:
    """Moving-average filter and PCHIP resampling, in the given order.

    ``order`` is ``"filter-first"`` (default) or ``"resample-first"``; in the
    latter case the window is applied on the resampled grid.  The window is
    capped at the largest odd width the series allows.
    """
    if order == "filter-first":
        return pchip_resample(moving_average(s, _fit_window(window, len(s))), grid_rate)
    if order == "resample-first":
        r = pchip_resample(s, grid_rate)
        return moving_average(r, _fit_window(window, len(r)))
    raise PreprocessError(f"unknown order {order!r}")


def _fit_window(w: int, n: int) -> int:
    w = min(w, n)
    return w if w % 2 else w - 1
