"""Coincidence histograms g2(tau) and lifetime histograms from time tags.

``correlate`` histograms every pair (t_a, t_b) with |t_b - t_a| <= max_tau
(full pairwise within the window, not start-stop) using a two-pointer
sliding-window merge, O(N * k) for k mean pairs per window.

Conventions:
- delay sign: tau = t_b - t_a;
- bin m covers [m*bin_width, (m+1)*bin_width); a delay exactly on a bin
  edge goes to the higher bin;
- bins span [-max_tau, +max_tau] with 2*ceil(max_tau/bin_width) bins, so
  the outermost bins are only partially covered when bin_width does not
  divide max_tau.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .streams import TimeTagStream

__all__ = [
    "CorrelationHistogram",
    "LifetimeHistogram",
    "correlate",
    "correlate_arrays",
    "normalize",
    "lifetime_histogram",
    "write_histogram_csv",
    "read_histogram_csv",
]


@dataclass(frozen=True)
class CorrelationHistogram:
    """Binned coincidence counts over delay tau = t_b - t_a."""

    bin_width_ps: int
    max_tau_ps: int
    counts: np.ndarray          # int64, one entry per bin over [-max_tau, max_tau]
    n_a: int
    n_b: int
    duration_ps: int
    g2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        n_half = -(-self.max_tau_ps // self.bin_width_ps)
        if counts.size != 2 * n_half:
            raise ValueError(
                f"counts has {counts.size} bins, expected {2 * n_half}"
            )
        if self.g2 is not None:
            # Plain normalization is >= 0 by construction; background-corrected
            # curves may dip below zero from noise, so no sign check here.
            g2 = np.asarray(self.g2, dtype=float)
            if g2.shape != counts.shape:
                raise ValueError("g2 must have one value per bin")
            g2.flags.writeable = False
            object.__setattr__(self, "g2", g2)

    @property
    def n_half(self) -> int:
        return self.counts.size // 2

    def tau_centers(self) -> np.ndarray:
        """Bin-center delays in ps."""
        m = np.arange(-self.n_half, self.n_half)
        return (m + 0.5) * self.bin_width_ps


@dataclass(frozen=True)
class LifetimeHistogram:
    """Counts of photon delay since the most recent SYNC tag."""

    bin_width_ps: int
    counts: np.ndarray
    window_ps: int
    n_before_first_sync: int = 0
    n_beyond_window: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.counts.size) + 0.5) * self.bin_width_ps


@njit(cache=True)
def _corr_kernel(a, b, bin_width, max_tau, counts):
    n_half = counts.size // 2
    lo = 0
    hi = 0
    for i in range(a.size):
        t = a[i]
        while lo < b.size and b[lo] < t - max_tau:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < b.size and b[hi] <= t + max_tau:
            hi += 1
        for j in range(lo, hi):
            idx = (b[j] - t) // bin_width + n_half
            if 0 <= idx < counts.size:
                counts[idx] += 1


def _as_times(stream) -> np.ndarray:
    if isinstance(stream, TimeTagStream):
        return stream.timestamps
    ts = np.asarray(stream, dtype=np.int64)
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise ValueError("unsorted input")
    return ts


def correlate_arrays(ta: np.ndarray, tb: np.ndarray, bin_width_ps: int,
                     max_tau_ps: int) -> np.ndarray:
    """Raw windowed pair histogram over sorted int64 timestamp arrays."""
    if bin_width_ps <= 0:
        raise ValueError("bin_width must be > 0")
    if max_tau_ps < bin_width_ps:
        raise ValueError("max_tau must be >= bin_width")
    n_half = -(-max_tau_ps // bin_width_ps)
    counts = np.zeros(2 * n_half, dtype=np.int64)
    ta = np.ascontiguousarray(ta, dtype=np.int64)
    tb = np.ascontiguousarray(tb, dtype=np.int64)
    if ta.size and tb.size:
        _corr_kernel(ta, tb, np.int64(bin_width_ps), np.int64(max_tau_ps),
                     counts)
    return counts


def correlate(a, b, bin_width_ps: int, max_tau_ps: int,
              duration_ps: int | None = None) -> CorrelationHistogram:
    """Histogram all pairwise delays t_b - t_a within +-max_tau.

    ``a`` and ``b`` are TimeTagStreams or sorted int64 arrays; bare arrays
    need an explicit ``duration_ps`` (used later for normalization).
    """
    ta = _as_times(a)
    tb = _as_times(b)
    if duration_ps is None:
        durations = [
            s.duration_ps for s in (a, b) if isinstance(s, TimeTagStream)
        ]
        if not durations:
            raise ValueError("duration_ps is required with bare arrays")
        duration_ps = max(durations)
    counts = correlate_arrays(ta, tb, bin_width_ps, max_tau_ps)
    return CorrelationHistogram(
        bin_width_ps=int(bin_width_ps),
        max_tau_ps=int(max_tau_ps),
        counts=counts,
        n_a=int(ta.size),
        n_b=int(tb.size),
        duration_ps=int(duration_ps),
    )


def normalize(h: CorrelationHistogram) -> CorrelationHistogram:
    """Fill g2 so that uncorrelated Poisson streams give g2 = 1 per bin.

    g2(bin) = count(bin) * duration / (n_a * n_b * bin_width).
    """
    if h.n_a == 0 or h.n_b == 0:
        raise ValueError("cannot normalize with zero tags on a channel")
    if h.duration_ps <= 0:
        raise ValueError("cannot normalize without a positive duration")
    scale = h.duration_ps / (h.n_a * h.n_b * h.bin_width_ps)
    return replace(h, g2=h.counts * scale)


def lifetime_histogram(photons, sync, bin_width_ps: int) -> LifetimeHistogram:
    """Histogram photon delays since the most recent preceding SYNC tag.

    Photons before the first sync are dropped (counted in
    ``n_before_first_sync``); delays beyond the sync period land in
    ``n_beyond_window``.
    """
    if bin_width_ps <= 0:
        raise ValueError("bin_width must be > 0")
    tp = _as_times(photons)
    ts = _as_times(sync)
    if ts.size == 0:
        raise ValueError("sync stream is empty")
    idx = np.searchsorted(ts, tp, side="right") - 1
    before = int(np.sum(idx < 0))
    valid = idx >= 0
    delays = tp[valid] - ts[idx[valid]]
    if ts.size > 1:
        window = int(np.max(np.diff(ts)))
    else:
        window = int(delays.max()) if delays.size else int(bin_width_ps)
    beyond = int(np.sum(delays > window))
    delays = delays[delays <= window]
    n_bins = max(1, -(-window // bin_width_ps))
    bins = np.minimum(delays // bin_width_ps, n_bins - 1)
    counts = np.bincount(bins, minlength=n_bins).astype(np.int64)
    return LifetimeHistogram(
        bin_width_ps=int(bin_width_ps),
        counts=counts,
        window_ps=window,
        n_before_first_sync=before,
        n_beyond_window=beyond,
    )


# ---------------------------------------------------------------------------
# CSV interchange

_META_RE = re.compile(r"(\w+)=([-\w.]+)")


def write_histogram_csv(path, h: CorrelationHistogram):
    """Write ``tau_ps,counts,g2`` rows under a ``# meta:`` header line."""
    taus = h.tau_centers()
    with open(path, "w") as fh:
        fh.write(
            f"# meta: bin_width_ps={h.bin_width_ps} max_tau_ps={h.max_tau_ps} "
            f"n_a={h.n_a} n_b={h.n_b} duration_ps={h.duration_ps}\n"
        )
        fh.write("tau_ps,counts,g2\n")
        for i in range(h.counts.size):
            g2 = "" if h.g2 is None else repr(float(h.g2[i]))
            fh.write(f"{taus[i]:.1f},{h.counts[i]},{g2}\n")


def read_histogram_csv(path) -> CorrelationHistogram:
    with open(path) as fh:
        meta_line = fh.readline()
        if not meta_line.startswith("# meta:"):
            raise ValueError(f"{path}: missing '# meta:' header line")
        meta = {k: v for k, v in _META_RE.findall(meta_line)}
        header = fh.readline().strip()
        if header != "tau_ps,counts,g2":
            raise ValueError(f"{path}: expected 'tau_ps,counts,g2' header")
        counts, g2 = [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            _tau, c, g = line.split(",")
            counts.append(int(c))
            g2.append(float(g) if g else np.nan)
    g2_arr = np.asarray(g2)
    has_g2 = not np.all(np.isnan(g2_arr))
    return CorrelationHistogram(
        bin_width_ps=int(meta["bin_width_ps"]),
        max_tau_ps=int(meta["max_tau_ps"]),
        counts=np.asarray(counts, dtype=np.int64),
        n_a=int(meta["n_a"]),
        n_b=int(meta["n_b"]),
        duration_ps=int(meta["duration_ps"]),
        g2=g2_arr if has_g2 else None,
    )
