"""Moment, trend, and passage-time estimation on simulated batches.

Heavy tails drive every design choice here.  Plain means are reported
with CLT halfwidths but are unstable near the admissible moment boundary,
so the headline estimator switches to median-of-means there, and trend
verdicts are built from statistics that are robust per window yet still
sensitive to genuine divergence: per-time median-of-means for "is the
running sup flat", and per-path window averages (whose own growth is the
signature of a divergent moment) for "does this order grow".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EstimationError
from .rng import RandomStream

MOM_BLOCKS = 32
# MAD-to-sigma factor for the halfwidth of a median of B asymptotically
# normal block means
_MEDIAN_FACTOR = 1.2533
_Z95 = 1.959964

# fraction of the admissible order beyond which the median-of-means value
# becomes the headline estimate
_HEADLINE_SWITCH = 0.75


def _finite_paths(batch):
    keep = ~batch.exploded
    if not keep.any():
        raise EstimationError("every path exploded; nothing to estimate")
    return keep


def _block_count(n):
    if n >= 2 * MOM_BLOCKS:
        return MOM_BLOCKS
    return max(4, n // 8)


def median_of_means(values, n_blocks=None, axis=0):
    """Median of contiguous block means along axis, with a 95% halfwidth.

    Returns (estimate, halfwidth).  Values are used in their given order;
    independent rows make the blocks independent.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    b = n_blocks if n_blocks is not None else _block_count(n)
    if b < 2 or n < b:
        raise EstimationError("too few samples (%d) for %d blocks" % (n, b))
    m = n // b
    sl = [slice(None)] * values.ndim
    sl[axis] = slice(0, b * m)
    trimmed = values[tuple(sl)]
    shape = list(trimmed.shape)
    shape[axis:axis + 1] = [b, m]
    blocks = trimmed.reshape(shape).mean(axis=axis + 1)
    est = np.median(blocks, axis=axis)
    spread = blocks.std(axis=axis, ddof=1)
    hw = _Z95 * _MEDIAN_FACTOR * spread / math.sqrt(b)
    return est, hw


def mean_with_halfwidth(values, axis=0):
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    est = values.mean(axis=axis)
    hw = _Z95 * values.std(axis=axis, ddof=1) / math.sqrt(n)
    return est, hw


@dataclass
class MomentReport:
    """Moment estimates on a time grid for several orders."""

    times: np.ndarray
    orders: tuple
    mean: np.ndarray            # (n_orders, n_times)
    mean_halfwidth: np.ndarray
    robust: np.ndarray
    robust_halfwidth: np.ndarray
    headline: tuple             # per order: "mean" or "median_of_means"
    n_paths: int
    n_exploded: int

    def estimate(self, order):
        i = self.orders.index(order)
        which = self.headline[i]
        if which == "mean":
            return self.mean[i], self.mean_halfwidth[i]
        return self.robust[i], self.robust_halfwidth[i]


def _time_indices(batch, times):
    spacing = _retained_spacing(batch)
    idx = []
    for t in times:
        j = int(np.argmin(np.abs(batch.times - t)))
        if abs(batch.times[j] - t) > 0.51 * spacing:
            raise DomainError("time %g is not on the retained grid" % t)
        idx.append(j)
    return np.array(idx, dtype=int)


def _retained_spacing(batch):
    if batch.times.size < 2:
        return batch.dt
    return float(np.max(np.diff(batch.times)))


def estimate_moments(batch, times, orders, admissible_sup=None):
    """E|X_t|^q on the given times, with CLT and median-of-means intervals.

    Exploded paths are dropped (counted in the report); truncated paths
    stay, frozen at their stopping state, matching the stopped-process
    reading of the bounds.  The headline estimator is the plain mean for
    orders safely inside the admissible range and median-of-means near or
    beyond it (or when no admissible range is supplied).
    """
    keep = _finite_paths(batch)
    idx = _time_indices(batch, times)
    radius = batch.radii()[keep][:, idx]
    orders = tuple(float(q) for q in orders)
    n_eff = int(keep.sum())
    mean = np.empty((len(orders), idx.size))
    mean_hw = np.empty_like(mean)
    robust = np.empty_like(mean)
    robust_hw = np.empty_like(mean)
    headline = []
    for i, q in enumerate(orders):
        vals = radius ** q
        mean[i], mean_hw[i] = mean_with_halfwidth(vals, axis=0)
        robust[i], robust_hw[i] = median_of_means(vals, axis=0)
        if admissible_sup is not None and q <= _HEADLINE_SWITCH * admissible_sup:
            headline.append("mean")
        else:
            headline.append("median_of_means")
    return MomentReport(
        times=np.asarray([batch.times[j] for j in idx]),
        orders=orders,
        mean=mean, mean_halfwidth=mean_hw,
        robust=robust, robust_halfwidth=robust_hw,
        headline=tuple(headline),
        n_paths=n_eff,
        n_exploded=int(batch.exploded.sum()),
    )


@dataclass
class SupMomentEstimate:
    order: float
    window: tuple
    value: float
    halfwidth: float
    argmax_time: float
    estimator: str
    n_paths: int


def estimate_sup_moment(batch, order, window=None):
    """sup over the window of the per-time median-of-means of |X_t|^q.

    The robust per-time curve is what stays flat for bounded orders even
    when pooled extremes would creep upward with the window length.
    """
    keep = _finite_paths(batch)
    t0, t1 = window if window is not None else (0.0, float(batch.times[-1]))
    cols = (batch.times >= t0) & (batch.times <= t1)
    if not cols.any():
        raise DomainError("window (%g, %g) contains no retained times" % (t0, t1))
    radius = batch.radii()[keep][:, cols]
    est, hw = median_of_means(radius ** order, axis=0)
    j = int(np.argmax(est))
    return SupMomentEstimate(
        order=float(order), window=(t0, t1),
        value=float(est[j]), halfwidth=float(np.asarray(hw).reshape(-1)[j]),
        argmax_time=float(batch.times[cols][j]),
        estimator="median_of_means",
        n_paths=int(keep.sum()),
    )


@dataclass
class TrendResult:
    order: float
    windows: tuple             # (start, end) pairs
    values: tuple              # statistic per window
    slope: float               # change per window step
    ci_low: float
    ci_high: float
    statistic: str
    n_boot: int

    def flat(self, tol=0.0):
        return self.ci_low <= tol and self.ci_high >= -tol


def _ols_slope(x, y):
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    return (y @ xc if y.ndim > 1 else float(np.dot(y, xc))) / denom


def sup_moment_trend(batch, order, windows=None, n_boot=500, seed=1):
    """Slope of the windowed sup statistic across consecutive windows.

    The statistic is the sup of the per-time median-of-means curve inside
    each window.  The default windows tile the second half of the horizon
    with four equal pieces, keeping the burn-in transient out: a
    time-uniform moment then gives a slope interval straddling zero,
    while a divergent order climbs window over window.  Every window is
    scanned on an equal-count time grid so the max-of-noise bias is the
    same in each.  The bootstrap resamples whole path blocks; the slope
    is per window step, scaled by the final-window value.
    """
    keep = _finite_paths(batch)
    horizon = float(batch.times[-1])
    if windows is None:
        edges = [horizon * (0.5 + i / 8.0) for i in range(5)]
        windows = tuple((edges[i], edges[i + 1]) for i in range(4))
    windows = tuple((float(a), float(b)) for a, b in windows)
    radius = batch.radii()[keep]
    n = radius.shape[0]
    b = _block_count(n)
    m = n // b
    vals = radius[:b * m] ** order
    blocks = vals.reshape(b, m, -1).mean(axis=1)     # (b, k)
    starts = np.array([np.searchsorted(batch.times, a, side="left")
                       for a, _ in windows])
    ends = np.array([np.searchsorted(batch.times, c, side="right")
                     for _, c in windows])
    if np.any(ends - starts < 2):
        raise DomainError("a trend window retains fewer than two times")
    m0 = int(min(64, (ends - starts).min()))
    col_sets = [s + np.unique(np.linspace(0, e - s - 1, m0).astype(int))
                for s, e in zip(starts, ends)]

    def sups(block_matrix):
        curve = np.median(block_matrix, axis=0)
        return np.array([curve[cols].max() for cols in col_sets])

    point = sups(blocks)
    ref = point[-1]
    if not ref > 0:
        raise EstimationError("sup statistic vanished; trend undefined")
    idx = np.arange(len(windows), dtype=float)
    slope = _ols_slope(idx, point / ref)

    gen = RandomStream(seed, 0)
    boot = np.empty(n_boot)
    for t in range(n_boot):
        pick = (gen.uniform(b) * b).astype(int)
        s = sups(blocks[pick])
        boot[t] = _ols_slope(idx, s / ref)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return TrendResult(
        order=float(order), windows=windows,
        values=tuple(float(v) for v in point),
        slope=float(slope), ci_low=float(lo), ci_high=float(hi),
        statistic="sup of per-time median-of-means over consecutive windows",
        n_boot=n_boot,
    )


@dataclass
class WindowedMomentReport:
    """Per-path trailing-window averages of |X|^q, across window lengths."""

    order: float
    windows: tuple             # lengths, increasing; all end at the horizon
    horizon: float
    per_path: np.ndarray       # (n_paths, n_windows)
    medians: np.ndarray
    median_halfwidth: np.ndarray
    means: np.ndarray
    mean_halfwidth: np.ndarray
    n_paths: int


def trailing_windows(horizon, burn_in, count=4):
    """Dyadic window lengths ending at the horizon, longest = horizon - burn_in."""
    w_max = horizon - burn_in
    if w_max <= 0:
        raise DomainError("burn-in consumes the whole horizon")
    return tuple(w_max / 2 ** k for k in range(count - 1, -1, -1))


def estimate_windowed_averages(batch, order, windows):
    """Time-average of |X_t|^q over [horizon - w, horizon] per path.

    For a stationary regime with a divergent moment of this order, each
    path's own average grows with the window length; that growth is the
    divergence signal, robust to the cross-path extremes.
    """
    keep = _finite_paths(batch)
    horizon = float(batch.times[-1])
    windows = tuple(sorted(float(w) for w in windows))
    if windows[-1] > horizon + 1e-12:
        raise DomainError("window longer than the horizon")
    radius = batch.radii()[keep]
    vals = radius ** order
    n = vals.shape[0]
    per_path = np.empty((n, len(windows)))
    for j, w in enumerate(windows):
        cols = batch.times >= horizon - w - 1e-12
        if cols.sum() < 2:
            raise DomainError("window %g retains fewer than two times" % w)
        per_path[:, j] = vals[:, cols].mean(axis=1)
    med = np.median(per_path, axis=0)
    # distribution-free order-statistic interval for the median
    half_span = _Z95 * 0.5 * math.sqrt(n)
    lo_i = max(0, int(math.floor(0.5 * n - half_span)))
    hi_i = min(n - 1, int(math.ceil(0.5 * n + half_span)))
    srt = np.sort(per_path, axis=0)
    med_hw = 0.5 * (srt[hi_i] - srt[lo_i])
    mean, mean_hw = mean_with_halfwidth(per_path, axis=0)
    return WindowedMomentReport(
        order=float(order), windows=windows, horizon=horizon,
        per_path=per_path, medians=med, median_halfwidth=med_hw,
        means=mean, mean_halfwidth=mean_hw, n_paths=n,
    )


@dataclass
class DivergenceVerdict:
    order: float
    verdict: str               # growing | bounded | inconclusive
    slope: float               # d log median / d log window
    ci_low: float
    ci_high: float
    slope_tol: float
    windows: tuple
    medians: tuple
    oracle_floor: float | None = None
    pooled_mean: float | None = None
    oracle_consistent: bool | None = None


def divergence_trend_test(report, slope_tol=0.02, n_boot=400, seed=2,
                          oracle_floor=None):
    """Classify the window-average growth of one order.

    Fits d log(median) / d log(window); the path bootstrap gives the
    interval.  "growing" needs the whole interval above the tolerance
    band, "bounded" needs it to reach the band, anything else is
    inconclusive.  An analytic floor for the plain mean at the longest
    window can be attached; it is reported, not part of the verdict.
    """
    med = report.medians
    if np.any(med <= 0):
        return DivergenceVerdict(report.order, "inconclusive", math.nan,
                                 math.nan, math.nan, slope_tol,
                                 report.windows, tuple(med))
    logw = np.log(np.asarray(report.windows))
    slope = _ols_slope(logw, np.log(med))
    n = report.n_paths
    gen = RandomStream(seed, 0)
    boot = np.empty(n_boot)
    for t in range(n_boot):
        pick = (gen.uniform(n) * n).astype(int)
        bm = np.median(report.per_path[pick], axis=0)
        if np.any(bm <= 0):
            boot[t] = math.nan
            continue
        boot[t] = _ols_slope(logw, np.log(bm))
    boot = boot[np.isfinite(boot)]
    if boot.size < max(50, n_boot // 2):
        return DivergenceVerdict(report.order, "inconclusive", float(slope),
                                 math.nan, math.nan, slope_tol,
                                 report.windows, tuple(med))
    lo, hi = np.percentile(boot, [2.5, 97.5])
    if lo > slope_tol:
        verdict = "growing"
    elif hi < slope_tol:
        verdict = "bounded"
    else:
        verdict = "inconclusive"

    pooled = None
    oracle_ok = None
    floor = None
    if oracle_floor is not None:
        floor = float(oracle_floor)
        pooled_val, pooled_hw = mean_with_halfwidth(report.per_path[:, -1])
        pooled = float(pooled_val)
        se = pooled_hw / _Z95
        oracle_ok = bool(pooled + 3.0 * se >= floor)
    return DivergenceVerdict(
        order=report.order, verdict=verdict, slope=float(slope),
        ci_low=float(lo), ci_high=float(hi), slope_tol=slope_tol,
        windows=report.windows, medians=tuple(float(v) for v in med),
        oracle_floor=floor, pooled_mean=pooled, oracle_consistent=oracle_ok,
    )


@dataclass
class CesaroReport:
    order: float
    t_start: float
    t_end: float
    mean: float
    mean_halfwidth: float
    robust: float
    robust_halfwidth: float
    n_paths: int


def estimate_cesaro(batch, order, t_start, t_end):
    """Time-averaged moment over [t_start, t_end], averaged across paths."""
    keep = _finite_paths(batch)
    cols = (batch.times >= t_start) & (batch.times <= t_end)
    if cols.sum() < 2:
        raise DomainError("averaging window retains fewer than two times")
    vals = (batch.radii()[keep][:, cols] ** order).mean(axis=1)
    mean, mean_hw = mean_with_halfwidth(vals)
    rob, rob_hw = median_of_means(vals)
    return CesaroReport(order=float(order), t_start=float(t_start),
                        t_end=float(t_end), mean=float(mean),
                        mean_halfwidth=float(mean_hw), robust=float(rob),
                        robust_halfwidth=float(rob_hw), n_paths=int(keep.sum()))


@dataclass
class PassageTimeStats:
    """Summary of first-passage durations to a radius level."""

    level: float
    after: float
    horizon: float
    n_paths: int
    n_censored: int
    censored_fraction: float
    resolution: float
    moments: dict              # order -> (value, halfwidth) or None
    robust_moments: dict
    exp_moment: tuple | None   # (rate, value, halfwidth) or None
    tail: dict                 # threshold -> (prob, halfwidth) or None
    quantiles: dict
    notes: tuple


def estimate_passage_moments(batch, level, orders, after=0.0, exp_rate=None,
                             tail_thresholds=(), max_censoring=0.5):
    """Moments, tails, and quantiles of delta = passage time - after.

    Censored paths (no passage by the horizon) enter tail probabilities
    exactly, and enter moments through imputation at the horizon, which
    biases them low; moments are therefore refused when censoring exceeds
    max_censoring.
    """
    tau = np.asarray(batch.passage(level), dtype=float)
    if after > 0:
        raise DomainError("batch passage tracking starts at time zero; "
                          "use detect_passage_time for later anchors")
    n = tau.size
    censored = np.isnan(tau)
    n_cens = int(censored.sum())
    frac = n_cens / n
    horizon = batch.horizon
    delta = np.where(censored, horizon - after, tau - after)
    notes = []
    if n_cens:
        notes.append("censored passages imputed at the horizon for moments")

    moments = {}
    robust = {}
    if frac <= max_censoring:
        for q in orders:
            v = delta ** float(q)
            m, hw = mean_with_halfwidth(v)
            moments[float(q)] = (float(m), float(hw))
            rm, rhw = median_of_means(v)
            robust[float(q)] = (float(rm), float(rhw))
    else:
        notes.append("censoring %.0f%% exceeds %.0f%%: moments withheld"
                     % (100 * frac, 100 * max_censoring))
        for q in orders:
            moments[float(q)] = None
            robust[float(q)] = None

    exp_m = None
    if exp_rate is not None and frac <= max_censoring:
        v = np.exp(float(exp_rate) * delta)
        m, hw = mean_with_halfwidth(v)
        exp_m = (float(exp_rate), float(m), float(hw))

    tail = {}
    for thr in tail_thresholds:
        thr = float(thr)
        if thr >= horizon - after:
            tail[thr] = None
            continue
        exceed = censored | (delta > thr)
        p = float(exceed.mean())
        hw = _Z95 * math.sqrt(max(p * (1.0 - p), 1e-12) / n)
        tail[thr] = (p, float(hw))

    quantiles = {}
    for q in (0.25, 0.5, 0.75):
        if frac < 1.0 - q:
            quantiles[q] = float(np.quantile(delta, q))
        else:
            quantiles[q] = math.nan
    return PassageTimeStats(
        level=float(level), after=float(after), horizon=float(horizon),
        n_paths=n, n_censored=n_cens, censored_fraction=float(frac),
        resolution=float(batch.dt), moments=moments, robust_moments=robust,
        exp_moment=exp_m, tail=tail, quantiles=quantiles, notes=tuple(notes),
    )


def intervals_overlap(intervals):
    """True when the intervals share at least one common point."""
    los = [lo for lo, _ in intervals]
    his = [hi for _, hi in intervals]
    return max(los) <= min(his)
