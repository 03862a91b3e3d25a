"""Cross-correlation of two time-tag streams and clock-offset estimation.

The histogram of pairwise time differences tau = t_b - t_a shows one
coincidence peak per pair source. The peak separation is the photon
round-trip time; the midpoint is the clock offset, provided the channel is
symmetric. Analysis runs per wall-clock block so a staged channel change is
visible block by block.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy import optimize, signal

from .errors import ConfigError, PeaksNotFoundError
from .timetags import PS_PER_S, TimeTagStream


@dataclass(frozen=True)
class G2Histogram:
    """Binned pair-difference counts plus accidental-rate normalization."""

    tau_min_ps: int
    bin_width_ps: int
    counts: np.ndarray
    normalized: np.ndarray
    n_a: int
    n_b: int
    duration_ps: int

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    def bin_centers_ps(self) -> np.ndarray:
        return self.tau_min_ps + (np.arange(self.n_bins) + 0.5) * self.bin_width_ps

    def summary(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "tau_min_ps": int(self.tau_min_ps),
            "bin_width_ps": int(self.bin_width_ps),
            "total_counts": int(self.counts.sum()),
            "max_count": int(self.counts.max()) if self.n_bins else 0,
            "n_a": int(self.n_a),
            "n_b": int(self.n_b),
            "duration_ps": int(self.duration_ps),
        }


@dataclass(frozen=True)
class PeakPair:
    """The two coincidence peaks: positions, centroid errors, amplitudes."""

    tau_ab_ps: float
    tau_ba_ps: float
    sigma_ab_ps: float
    sigma_ba_ps: float
    height_ab: float
    height_ba: float


@dataclass(frozen=True)
class SyncEstimate:
    delta_ps: float
    round_trip_ps: float
    delta_sigma_ps: float
    block_index: int = 0


@dataclass(frozen=True)
class SyncAnalysisParams:
    """Histogram and peak-search settings; every field is CLI-overridable."""

    tau_min_ps: int = -1_000_000
    tau_max_ps: int = 1_000_000
    bin_width_ps: int = 16
    min_separation_ps: int = 5_000
    threshold_sigma: float = 5.0
    # Half-width of the centroid window in bins. 47 bins at 16 ps spans about
    # +/-750 ps, wide enough that a 500 ps FWHM peak sits fully inside it;
    # narrow windows make the centroid track the noisy maximum bin instead of
    # the peak.
    centroid_halfwidth_bins: int = 47

    def validate(self, field_prefix: str = "analysis"):
        if self.tau_max_ps <= self.tau_min_ps:
            raise ConfigError(f"{field_prefix}.tau_max_ps must exceed tau_min_ps")
        if self.bin_width_ps < 1:
            raise ConfigError(f"{field_prefix}.bin_width_ps must be >= 1")
        if self.min_separation_ps < 0:
            raise ConfigError(f"{field_prefix}.min_separation_ps must be >= 0")
        if not math.isfinite(self.threshold_sigma) or self.threshold_sigma < 0:
            raise ConfigError(f"{field_prefix}.threshold_sigma must be finite and >= 0")
        if self.centroid_halfwidth_bins < 1:
            raise ConfigError(f"{field_prefix}.centroid_halfwidth_bins must be >= 1")


def compute_g2(
    a: TimeTagStream,
    b: TimeTagStream,
    tau_min_ps: int,
    tau_max_ps: int,
    bin_width_ps: int,
    duration_ps: Optional[int] = None,
) -> G2Histogram:
    """Exact pair-difference histogram over tau = t_b - t_a.

    A sorted two-sided sweep finds, for every event in `a`, the slice of `b`
    inside the window; cost is O(|a| + |b| + matches). Normalization divides
    each bin by the accidental rate n_a * n_b * bin_width / duration, so a
    pair of independent Poisson streams averages to 1.
    """
    if tau_max_ps <= tau_min_ps:
        raise ConfigError("tau_max_ps must exceed tau_min_ps")
    if bin_width_ps < 1:
        raise ConfigError("bin_width_ps must be >= 1")
    tau_min_ps = int(tau_min_ps)
    bin_width_ps = int(bin_width_ps)
    n_bins = int(math.ceil((tau_max_ps - tau_min_ps) / bin_width_ps))
    hi_edge = tau_min_ps + n_bins * bin_width_ps

    at = a.timestamps_ps
    bt = b.timestamps_ps
    if at.size and bt.size:
        lo = np.searchsorted(bt, at + tau_min_ps, side="left")
        hi = np.searchsorted(bt, at + hi_edge, side="left")
        per_event = hi - lo
        total = int(per_event.sum())
        a_idx = np.repeat(np.arange(at.size), per_event)
        run_start = np.repeat(np.cumsum(per_event) - per_event, per_event)
        b_idx = np.repeat(lo, per_event) + (np.arange(total) - run_start)
        tau = bt[b_idx] - at[a_idx]
        bins = (tau - tau_min_ps) // bin_width_ps
        counts = np.bincount(bins, minlength=n_bins).astype(np.int64)
    else:
        counts = np.zeros(n_bins, dtype=np.int64)

    if duration_ps is None:
        spans = [int(t[-1] - t[0]) for t in (at, bt) if t.size >= 2]
        duration_ps = max(spans) if spans else 0
    duration_ps = int(duration_ps)

    acc_per_bin = 0.0
    if duration_ps > 0:
        acc_per_bin = at.size * bt.size * bin_width_ps / duration_ps
    if acc_per_bin > 0:
        normalized = counts / acc_per_bin
    else:
        normalized = np.zeros(n_bins, dtype=np.float64)

    return G2Histogram(
        tau_min_ps=tau_min_ps,
        bin_width_ps=bin_width_ps,
        counts=counts,
        normalized=normalized,
        n_a=int(at.size),
        n_b=int(bt.size),
        duration_ps=duration_ps,
    )


def _background_stats(counts: np.ndarray) -> tuple[float, float]:
    """Robust background level and spread; peaks barely move the median."""
    med = float(np.median(counts))
    mad = float(np.median(np.abs(counts - med)))
    # sqrt floor: for sparse Poisson backgrounds the MAD collapses to 0 while
    # extreme bins still reach several counts.
    sigma = max(1.4826 * mad, math.sqrt(med + 1.0))
    return med, sigma


def _refine_centroid(
    hist: G2Histogram, peak_bin: int, halfwidth_bins: int, background: float
) -> tuple[float, float, float]:
    """Background-subtracted intensity centroid around a peak bin.

    The window re-centers on the running centroid until stable, which removes
    the jitter of the starting maximum bin.
    """
    centers = hist.bin_centers_ps()
    n = hist.n_bins
    cur = int(peak_bin)
    visited = set()
    centroid = float(centers[cur])
    sigma = float(hist.bin_width_ps)
    height = 0.0
    for _ in range(25):
        lo = max(0, cur - halfwidth_bins)
        hi = min(n, cur + halfwidth_bins + 1)
        w = hist.counts[lo:hi].astype(np.float64) - background
        np.clip(w, 0.0, None, out=w)
        wsum = float(w.sum())
        if wsum <= 0.0:
            break
        tau = centers[lo:hi]
        centroid = float(np.dot(w, tau) / wsum)
        var = float(np.dot(w, (tau - centroid) ** 2) / wsum)
        sigma = math.sqrt(max(var, hist.bin_width_ps**2 / 12.0) / wsum)
        height = float(hist.normalized[lo:hi].max())
        nxt = int((centroid - hist.tau_min_ps) // hist.bin_width_ps)
        nxt = min(max(nxt, 0), n - 1)
        if nxt == cur or nxt in visited:
            break
        visited.add(cur)
        cur = nxt
    return centroid, sigma, height


def find_two_peaks(
    hist: G2Histogram,
    min_separation_ps: int,
    threshold_sigma: float,
    centroid_halfwidth_bins: int = 5,
) -> PeakPair:
    """Locate the two coincidence peaks of a correlation histogram.

    Local maxima are ranked by height; the tallest and the tallest at least
    min_separation_ps away are accepted if both clear the background by
    threshold_sigma spreads. Positions are refined by an intensity-weighted
    centroid; the later tau is the A-source peak.
    """
    if hist.n_bins == 0:
        raise PeaksNotFoundError("peaks not found: empty histogram", hist.summary())
    counts = hist.counts
    med, sigma_bg = _background_stats(counts)
    threshold = med + threshold_sigma * sigma_bg

    candidates, _ = signal.find_peaks(counts.astype(np.float64))
    candidates = candidates[counts[candidates] > threshold]
    if candidates.size < 2:
        raise PeaksNotFoundError(
            f"peaks not found: {candidates.size} qualifying maxima "
            f"(threshold {threshold:.2f} counts)",
            hist.summary(),
        )
    order = candidates[np.argsort(counts[candidates])[::-1]]
    first = int(order[0])
    second = None
    for idx in order[1:]:
        if abs(int(idx) - first) * hist.bin_width_ps >= min_separation_ps:
            second = int(idx)
            break
    if second is None:
        raise PeaksNotFoundError(
            "peaks not found: no second maximum beyond the minimum separation",
            hist.summary(),
        )

    refined = [
        _refine_centroid(hist, b, centroid_halfwidth_bins, med) for b in (first, second)
    ]
    (tau1, s1, h1), (tau2, s2, h2) = refined
    if tau1 >= tau2:
        return PeakPair(tau1, tau2, s1, s2, h1, h2)
    return PeakPair(tau2, tau1, s2, s1, h2, h1)


def estimate_sync(peaks: PeakPair, block_index: int = 0) -> SyncEstimate:
    """Offset = peak midpoint, round trip = peak separation."""
    delta = 0.5 * (peaks.tau_ab_ps + peaks.tau_ba_ps)
    round_trip = peaks.tau_ab_ps - peaks.tau_ba_ps
    delta_sigma = 0.5 * math.hypot(peaks.sigma_ab_ps, peaks.sigma_ba_ps)
    return SyncEstimate(delta, round_trip, delta_sigma, block_index)


def analyze_block(
    a: TimeTagStream,
    b: TimeTagStream,
    block_index: int,
    block_ps: int,
    params: SyncAnalysisParams,
) -> tuple[G2Histogram, Optional[SyncEstimate]]:
    """Histogram and estimate for one wall-clock block; None when peaks fail.

    Blocks are defined on the first stream's timeline; the second stream's
    slice is widened by the correlation window so boundary pairs survive.
    """
    t0 = block_index * block_ps
    t1 = (block_index + 1) * block_ps
    n_bins = int(math.ceil((params.tau_max_ps - params.tau_min_ps) / params.bin_width_ps))
    hi_edge = params.tau_min_ps + n_bins * params.bin_width_ps
    a_blk = a.window(t0, t1)
    b_blk = b.window(t0 + params.tau_min_ps, t1 + hi_edge)
    hist = compute_g2(
        a_blk,
        b_blk,
        params.tau_min_ps,
        params.tau_max_ps,
        params.bin_width_ps,
        duration_ps=block_ps,
    )
    try:
        peaks = find_two_peaks(
            hist,
            params.min_separation_ps,
            params.threshold_sigma,
            params.centroid_halfwidth_bins,
        )
        return hist, estimate_sync(peaks, block_index=block_index)
    except PeaksNotFoundError:
        return hist, None


def complete_blocks(a: TimeTagStream, b: TimeTagStream, block_ps: int) -> int:
    """Number of blocks covered by the recorded data.

    The last event of a Poisson recording sits about one mean gap before the
    nominal end, so a block counts as covered once data reaches within 0.1%
    of its end; trailing fractional blocks are dropped.
    """
    last = max(
        (int(t.timestamps_ps[-1]) for t in (a, b) if len(t)),
        default=None,
    )
    if last is None:
        return 0
    tolerance = max(1, block_ps // 1000)
    return int((last + tolerance) // block_ps)


def iter_block_results(
    a: TimeTagStream,
    b: TimeTagStream,
    block_s: float,
    params: SyncAnalysisParams,
    n_blocks: Optional[int] = None,
) -> Iterator[tuple[int, G2Histogram, Optional[SyncEstimate]]]:
    """Per-block histogram plus estimate; estimate is None when peaks fail.

    By default only blocks fully covered by the data are analyzed.
    """
    params.validate()
    if block_s <= 0:
        raise ConfigError("block_s must be > 0")
    block_ps = int(round(block_s * PS_PER_S))
    if n_blocks is None:
        n_blocks = complete_blocks(a, b, block_ps)
    for k in range(n_blocks):
        hist, est = analyze_block(a, b, k, block_ps, params)
        yield k, hist, est


def block_analysis(
    a: TimeTagStream,
    b: TimeTagStream,
    block_s: float,
    params: SyncAnalysisParams,
    n_blocks: Optional[int] = None,
) -> list[SyncEstimate]:
    """Run the per-block pipeline; failed blocks appear as index gaps."""
    return [
        est for _, _, est in iter_block_results(a, b, block_s, params, n_blocks)
        if est is not None
    ]


def fit_peak_gaussian(hist: G2Histogram, tau_guess_ps: float, halfwidth_ps: float) -> dict:
    """Least-squares Gaussian fit around one peak; reports FWHM."""
    centers = hist.bin_centers_ps()
    mask = np.abs(centers - tau_guess_ps) <= halfwidth_ps
    x = centers[mask]
    y = hist.counts[mask].astype(np.float64)
    if x.size < 5 or y.max() <= 0:
        raise ValueError("not enough data around tau_guess_ps for a fit")

    def model(t, amp, mu, sigma, base):
        return amp * np.exp(-0.5 * ((t - mu) / sigma) ** 2) + base

    amp0 = float(y.max() - np.median(y))
    mu0 = float(x[np.argmax(y)])
    sigma0 = max(halfwidth_ps / 4.0, hist.bin_width_ps)
    popt, _ = optimize.curve_fit(
        model, x, y, p0=[amp0, mu0, sigma0, float(np.median(y))], maxfev=10_000
    )
    amp, mu, sigma, base = popt
    sigma = abs(float(sigma))
    return {
        "amplitude": float(amp),
        "center_ps": float(mu),
        "sigma_ps": sigma,
        "fwhm_ps": 2.0 * math.sqrt(2.0 * math.log(2.0)) * sigma,
        "baseline": float(base),
    }


def write_histogram_csv(hist: G2Histogram, path):
    centers = hist.bin_centers_ps()
    lines = ["tau_ps,counts,g2"]
    lines.extend(
        f"{c:.10g},{int(n)},{g:.10g}"
        for c, n, g in zip(centers, hist.counts, hist.normalized)
    )
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def estimates_to_json(estimates: list[SyncEstimate]) -> list[dict]:
    return [
        {
            "block_index": e.block_index,
            "delta_ps": e.delta_ps,
            "round_trip_ps": e.round_trip_ps,
            "delta_sigma_ps": e.delta_sigma_ps,
        }
        for e in estimates
    ]


def write_estimates_json(estimates: list[SyncEstimate], path):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(estimates_to_json(estimates), fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)
