"""Estimators: log-binned PDFs, averaged periodograms, power-law slopes,
burst and threshold-interval extraction.

Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.stats

from .sde import SampledSeries


@dataclass(frozen=True)
class LogHistogram:
    bin_edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        """Geometric bin centres."""
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def nonempty(self):
        m = self.counts > 0
        return self.centers[m], self.density[m]


@dataclass(frozen=True)
class PsdEstimate:
    freq: np.ndarray
    power: np.ndarray
    n_segments: int
    log_binned: bool


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    fit_range: tuple
    n_points: int

    def __str__(self):
        return f"{self.slope:+.3f} +/- {self.stderr:.3f} on {self.fit_range} (n={self.n_points})"


@dataclass(frozen=True)
class IntervalSet:
    """Burst statistics, stored as whole numbers of samples.

    ``tau`` = tau2 - tau1 (duration), ``theta`` = tau3 - tau2 (inter-burst
    time), ``T`` = tau3 - tau1 (return interval); ``tau + theta == T`` holds
    exactly.
    """

    n_tau: np.ndarray
    n_theta: np.ndarray
    dt: float = 1.0

    @property
    def n_T(self) -> np.ndarray:
        return self.n_tau + self.n_theta

    @property
    def tau(self) -> np.ndarray:
        return self.n_tau * self.dt

    @property
    def theta(self) -> np.ndarray:
        return self.n_theta * self.dt

    @property
    def T(self) -> np.ndarray:
        return self.tau + self.theta

    def __len__(self):
        return self.n_tau.shape[0]


@dataclass(frozen=True)
class ThresholdIntervals:
    q: float
    intervals: np.ndarray
    mean_T: float

    def scaled(self) -> np.ndarray:
        return scale_by_mean(self.intervals)

    def __len__(self):
        return self.intervals.shape[0]


# --------------------------------------------------------------------------
# densities and slopes
# --------------------------------------------------------------------------


def log_binned_pdf(values, bins_per_decade: int = 10,
                   edges: Optional[np.ndarray] = None) -> LogHistogram:
    """Histogram on geometric bins, normalised so sum(density * width) == 1.

    Bin edges are anchored at powers of ten unless explicit ``edges`` are
    given; in that case all values must fall inside them.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no values to histogram")
    if bins_per_decade < 2:
        raise ValueError("bins_per_decade must be >= 2")
    if np.any(~(v > 0)):
        raise ValueError("log binning needs strictly positive values; take |x| first")
    if edges is None:
        lo = math.floor(math.log10(v.min()))
        hi = math.ceil(math.log10(v.max()))
        if hi == lo:
            hi += 1
        n_bins = (hi - lo) * bins_per_decade
        edges = np.logspace(lo, hi, n_bins + 1)
    else:
        edges = np.asarray(edges, dtype=float)
        if v.min() < edges[0] or v.max() > edges[-1]:
            raise ValueError("values fall outside the given bin edges")
    counts, _ = np.histogram(v, bins=edges)
    density = counts / (v.size * np.diff(edges))
    return LogHistogram(edges, density, counts)


def fit_power_law_slope(xs, ys, fit_range=(0.0, math.inf), min_points: int = 5) -> SlopeFit:
    """Least-squares line through (log10 x, log10 y) for x inside ``fit_range``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    lo, hi = fit_range
    m = (x >= lo) & (x <= hi) & (x > 0) & (y > 0) & np.isfinite(y)
    n = int(m.sum())
    if n < min_points:
        raise ValueError(f"only {n} usable points in {fit_range}, need {min_points}")
    lx = np.log10(x[m])
    ly = np.log10(y[m])
    A = np.column_stack([lx, np.ones(n)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = n - 2
    sxx = np.sum((lx - lx.mean()) ** 2)
    stderr = math.sqrt(np.sum(resid ** 2) / dof / sxx) if dof > 0 and sxx > 0 else 0.0
    return SlopeFit(float(coef[0]), float(coef[1]), stderr, (lo, hi), n)


def histogram_slope(values, fit_range, bins_per_decade: int = 10) -> SlopeFit:
    """Slope of the log-binned PDF of ``values`` over ``fit_range``."""
    h = log_binned_pdf(values, bins_per_decade)
    return fit_power_law_slope(*h.nonempty(), fit_range=fit_range)


# --------------------------------------------------------------------------
# spectra
# --------------------------------------------------------------------------


def _as_uniform(series, dt=None, t=None):
    if isinstance(series, SampledSeries):
        return series.values, series.dt
    values = np.asarray(series, dtype=float)
    if t is not None:
        t = np.asarray(t, dtype=float)
        steps = np.diff(t)
        if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("series is not uniformly sampled")
        return values, float(steps[0])
    if dt is None:
        dt = 1.0
    return values, float(dt)


def periodogram(values, dt: float, n_segments: int = 1):
    """Segment-averaged one-sided periodogram with per-segment mean removal.

    Scaled so that ``sum(power) * df`` equals the mean within-segment variance.
    """
    v = np.asarray(values, dtype=float)
    M = v.size // n_segments
    segs = v[: M * n_segments].reshape(n_segments, M)
    segs = segs - segs.mean(axis=1, keepdims=True)
    power = np.zeros(M // 2 + 1)
    for s in segs:
        power += np.abs(np.fft.rfft(s)) ** 2
    power *= dt / (M * n_segments)
    power[1:] *= 2.0
    if M % 2 == 0:
        power[-1] /= 2.0
    freq = np.fft.rfftfreq(M, d=dt)
    return freq[1:], power[1:]


def log_bin_spectrum(freq, power, bins_per_decade: int):
    """Average ``power`` on geometric frequency bins; empty bins are dropped."""
    lf = np.log10(freq)
    lo = math.floor(lf[0] * bins_per_decade) / bins_per_decade
    idx = np.floor((lf - lo) * bins_per_decade + 1e-12).astype(np.int64)
    counts = np.bincount(idx)
    keep = counts > 0
    p = np.bincount(idx, weights=power)[keep] / counts[keep]
    f = 10.0 ** (np.bincount(idx, weights=lf)[keep] / counts[keep])
    return f, p


def estimate_psd(series, n_segments: int = 1, log_bins_per_decade: int = 0,
                 dt: Optional[float] = None, t=None) -> PsdEstimate:
    """PSD of a uniformly sampled series; frequencies in cycles per time unit.

    ``series`` is a :class:`SampledSeries` or an array together with ``dt``
    (or an explicit time axis ``t``, which must be uniform).
    """
    values, step = _as_uniform(series, dt=dt, t=t)
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    if values.size < 2 * n_segments:
        raise ValueError("series too short for the requested number of segments")
    f, p = periodogram(values, step, n_segments)
    if log_bins_per_decade:
        f, p = log_bin_spectrum(f, p, log_bins_per_decade)
    return PsdEstimate(f, p, n_segments, bool(log_bins_per_decade))


def psd_slope(psd: PsdEstimate, fit_range) -> SlopeFit:
    return fit_power_law_slope(psd.freq, psd.power, fit_range)


@dataclass(frozen=True)
class BrokenPowerLaw:
    """Two log-linear pieces joined continuously at ``f_break``.

    ``beta_low``/``beta_high`` are the PSD exponents (negated slopes).
    """

    beta_low: float
    beta_high: float
    f_break: float
    rss: float


def fit_broken_power_law(freq, power, fit_range, n_grid: int = 200) -> BrokenPowerLaw:
    """Continuous two-segment fit in log-log coordinates, break by grid search."""
    f = np.asarray(freq, dtype=float)
    p = np.asarray(power, dtype=float)
    m = (f >= fit_range[0]) & (f <= fit_range[1]) & (p > 0)
    lx, ly = np.log10(f[m]), np.log10(p[m])
    if lx.size < 8:
        raise ValueError("need at least 8 points for a broken power-law fit")
    best = None
    for b in np.linspace(lx[3], lx[-4], n_grid):
        A = np.column_stack([np.ones_like(lx), lx - b, np.maximum(lx - b, 0.0)])
        coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
        rss = float(np.sum((ly - A @ coef) ** 2))
        if best is None or rss < best[0]:
            best = (rss, b, coef)
    rss, b, coef = best
    return BrokenPowerLaw(-float(coef[1]), -float(coef[1] + coef[2]), float(10 ** b), rss)


# --------------------------------------------------------------------------
# bursts
# --------------------------------------------------------------------------


class BurstTracker:
    """Crossing bookkeeping for a series delivered in consecutive pieces.

    A sample counts as "above" when ``value >= h_x``. Up-crossings are samples
    above whose predecessor is below; down-crossings the reverse.
    """

    def __init__(self, h_x: float, dt: float = 1.0):
        self.h_x = h_x
        self.dt = dt
        self._offset = 0
        self._prev = None
        self._ups = []
        self._downs = []

    def feed(self, values) -> None:
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return
        above = v >= self.h_x
        prev = np.empty_like(above)
        prev[0] = above[0] if self._prev is None else self._prev
        prev[1:] = above[:-1]
        self._ups.append(np.flatnonzero(above & ~prev) + self._offset)
        self._downs.append(np.flatnonzero(~above & prev) + self._offset)
        self._prev = bool(above[-1])
        self._offset += v.size

    def result(self) -> IntervalSet:
        ups = np.concatenate(self._ups) if self._ups else np.zeros(0, np.int64)
        downs = np.concatenate(self._downs) if self._downs else np.zeros(0, np.int64)
        if ups.size:
            downs = downs[downs > ups[0]]
        # crossings alternate: u0 < d0 < u1 < d1 < ...
        n = min(ups.size - 1, downs.size)
        if n <= 0:
            empty = np.zeros(0, np.int64)
            return IntervalSet(empty, empty.copy(), self.dt)
        u = ups[: n + 1]
        d = downs[:n]
        return IntervalSet((d - u[:-1]).astype(np.int64), (u[1:] - d).astype(np.int64),
                           self.dt)


def extract_bursts(series, h_x: float, dt: Optional[float] = None) -> IntervalSet:
    """Burst durations, return intervals and inter-burst times above ``h_x``.

    Only complete (up, down, next up) triples are reported.

    >>> b = extract_bursts(np.array([0, 2, 2, 0, 0, 3, 0.]), 1.0)
    >>> b.tau.tolist(), b.T.tolist(), b.theta.tolist()
    ([2.0], [4.0], [2.0])
    """
    values, step = _as_uniform(series, dt=dt)
    if values.size < 3:
        raise ValueError("need at least 3 samples")
    tr = BurstTracker(h_x, step)
    tr.feed(values)
    return tr.result()


def extract_bursts_stream(pieces: Iterable[SampledSeries], h_x: float) -> IntervalSet:
    tr = None
    for piece in pieces:
        if tr is None:
            tr = BurstTracker(h_x, piece.dt)
        tr.feed(piece.values)
    if tr is None:
        raise ValueError("empty stream")
    return tr.result()


# --------------------------------------------------------------------------
# threshold (return) intervals
# --------------------------------------------------------------------------


def extract_threshold_intervals(abs_returns, q: float, pre_normalized: bool = True,
                                boundaries: Sequence[int] = ()) -> ThresholdIntervals:
    """Gaps, in samples, between consecutive values ``>= q``.

    With ``pre_normalized=False`` the series is first divided by its own
    standard deviation (ddof=0). ``boundaries`` are start indices of joined
    segments; gaps that straddle one are dropped.

    >>> extract_threshold_intervals([0.1, 3, 0.2, 0.5, 3.5, 0.1], 2.0).intervals.tolist()
    [3]
    """
    v = np.asarray(abs_returns, dtype=float)
    if v.size == 0:
        raise ValueError("empty series")
    if not pre_normalized:
        sd = v.std()
        if not sd > 0:
            raise ValueError("zero-variance series cannot be normalised")
        v = v / sd
    idx = np.flatnonzero(v >= q)
    gaps = np.diff(idx)
    if len(boundaries) and gaps.size:
        b = np.asarray(boundaries, dtype=np.int64)
        seg = np.searchsorted(b, idx, side="right")
        gaps = gaps[seg[1:] == seg[:-1]]
    mean = float(gaps.mean()) if gaps.size else math.nan
    return ThresholdIntervals(float(q), gaps.astype(np.int64), mean)


def scale_by_mean(intervals) -> np.ndarray:
    x = np.asarray(intervals, dtype=float)
    return x / x.mean()


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|."""
    return float(scipy.stats.ks_2samp(np.asarray(a, float), np.asarray(b, float)).statistic)


def ks_against_cdf(samples, cdf) -> float:
    """One-sample KS distance of ``samples`` against an analytic ``cdf``."""
    return float(scipy.stats.kstest(np.asarray(samples, float), cdf).statistic)
