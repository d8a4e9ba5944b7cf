"""Coincidence histograms from sorted tag streams.

Every histogram here is built from one compiled two-pointer sweep
(:func:`hybridhom._kernels.xcorr_counts`) applied to herald-filtered subsets
of the inputs, so the two-, three- and four-fold variants share the same
binning convention. Bin ``k`` covers lags ``[k*w - w/2, k*w + w/2)`` for
``k = -K..K`` with ``K = lag_range_ps // bin_width_ps``.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from hybridhom import _kernels
from hybridhom.errors import ContractError, ParameterError, UndefinedRatioError
from hybridhom.tags import TagStream, as_times


class Normalization(str, enum.Enum):
    RAW = "raw"
    ACCIDENTAL = "accidental_rate"
    PLATEAU = "plateau"
    HERALDED = "heralded"


class Reference(str, enum.Enum):
    CH1 = "ch1"
    CH2 = "ch2"
    EITHER = "either"


@dataclass(frozen=True)
class HeraldConfig:
    """``window_ps`` is the full width: a tag is heralded if ``|t - s| <= window/2``."""

    window_ps: int = 80
    reference: Reference = Reference.CH1

    def __post_init__(self):
        if not self.window_ps > 0:
            raise ParameterError("herald window must be positive")
        object.__setattr__(self, "window_ps", int(self.window_ps))
        object.__setattr__(self, "reference", Reference(self.reference))


@dataclass
class Histogram:
    """Coincidence counts versus lag plus what is needed to normalize them.

    ``meta`` holds additive acquisition numbers (``duration_ps``, ``n_a``,
    ``n_b``, ``n_herald``, ``n_sync``) so that histograms of disjoint time
    shards can be summed. ``baseline`` is the sync-to-ch2 histogram used by
    the heralded normalization.
    """

    bin_width_ps: int
    lag_range_ps: int
    counts: np.ndarray
    normalization: Normalization = Normalization.RAW
    norm_constant: float = 1.0
    plateau_start_ps: float | None = None
    meta: dict = field(default_factory=dict)
    baseline: np.ndarray | None = None
    flags: tuple = ()

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.normalization = Normalization(self.normalization)
        if self.counts.size != 2 * self.half_bins + 1:
            raise ContractError("counts length does not match the binning")

    @property
    def half_bins(self):
        return self.lag_range_ps // self.bin_width_ps

    @property
    def lags(self):
        return np.arange(-self.half_bins, self.half_bins + 1, dtype=np.int64) * self.bin_width_ps

    @property
    def center(self):
        return self.half_bins

    @property
    def total(self):
        return int(self.counts.sum())

    def _scale(self):
        """Per-bin divisor turning counts into normalized values."""
        if self.normalization is Normalization.HERALDED:
            n_sync = self.meta.get("n_sync", 0)
            n_herald = self.meta.get("n_herald", 0)
            if n_sync == 0 or self.baseline is None:
                return np.zeros(self.counts.size)
            return n_herald * self.baseline.astype(float) / n_sync
        return np.full(self.counts.size, float(self.norm_constant))

    @property
    def normalized(self):
        scale = self._scale()
        out = np.zeros(self.counts.size)
        ok = scale > 0
        out[ok] = self.counts[ok] / scale[ok]
        return out

    @property
    def errors(self):
        scale = self._scale()
        out = np.zeros(self.counts.size)
        ok = scale > 0
        out[ok] = np.sqrt(self.counts[ok]) / scale[ok]
        return out

    def value_at(self, lag_ps=0):
        """Normalized value and Poisson error in the bin holding ``lag_ps``."""
        k = (2 * int(lag_ps) + self.bin_width_ps) // (2 * self.bin_width_ps) + self.half_bins
        if not 0 <= k < self.counts.size:
            raise ParameterError("lag outside histogram range")
        return float(self.normalized[k]), float(self.errors[k])

    def normalize(self, method, plateau_start_ps=None):
        """Return a copy normalized with ``method``."""
        method = Normalization(method)
        const = 1.0
        start = plateau_start_ps if plateau_start_ps is not None else self.plateau_start_ps
        flags = tuple(f for f in self.flags if f != "zero_plateau")
        if method is Normalization.ACCIDENTAL:
            duration = self.meta.get("duration_ps", 0)
            n_a = self.meta.get("n_herald", self.meta.get("n_a", 0))
            n_b = self.meta.get("n_b", 0)
            const = n_a * n_b * self.bin_width_ps / duration if duration else 0.0
        elif method is Normalization.PLATEAU:
            if start is None:
                start = self.lag_range_ps / 2
            sel = np.abs(self.lags) >= start
            if not sel.any():
                raise ParameterError("plateau region is empty")
            const = float(self.counts[sel].mean())
            if const == 0:
                flags = flags + ("zero_plateau",)
        elif method is Normalization.HERALDED and self.baseline is None:
            raise ParameterError("heralded normalization needs a sync baseline")
        return replace(self, normalization=method, norm_constant=const, plateau_start_ps=start, flags=flags)

    def __add__(self, other):
        if (self.bin_width_ps, self.lag_range_ps) != (other.bin_width_ps, other.lag_range_ps):
            raise ContractError("cannot add histograms with different binning")
        meta = dict(self.meta)
        for key, value in other.meta.items():
            meta[key] = meta.get(key, 0) + value
        baseline = None
        if self.baseline is not None and other.baseline is not None:
            baseline = self.baseline + other.baseline
        flags = tuple(sorted(set(self.flags) & set(other.flags)))
        merged = Histogram(
            self.bin_width_ps,
            self.lag_range_ps,
            self.counts + other.counts,
            Normalization.RAW,
            1.0,
            self.plateau_start_ps,
            meta,
            baseline,
            flags,
        )
        return merged.normalize(self.normalization)

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("lag_ps,counts,normalized,error\n")
        for row in zip(self.lags, self.counts, self.normalized, self.errors):
            buf.write(f"{row[0]},{row[1]},{row[2]:.10g},{row[3]:.10g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _check_binning(bin_width_ps, lag_range_ps):
    if bin_width_ps <= 0 or lag_range_ps <= 0:
        raise ParameterError("bin width and lag range must be positive")
    if bin_width_ps > lag_range_ps:
        raise ParameterError("bin width exceeds lag range")
    return int(bin_width_ps), int(lag_range_ps)


def _sorted_times(stream, name):
    if isinstance(stream, TagStream):
        stream.check_sorted(name)
        return stream.times
    times = as_times(stream)
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise ContractError(f"{name} is not sorted in time")
    return times


def _duration(duration_ps, *arrays):
    if duration_ps is not None:
        return int(duration_ps)
    last = [int(a[-1]) + 1 for a in arrays if a.size]
    return max(last) if last else 0


def _xc(a, b, width, half, same=False):
    return _kernels.xcorr_counts(a, b, np.int64(width), np.int64(half), same)


def cross_correlate(a, b, bin_width_ps, lag_range_ps, duration_ps=None, normalization="raw", plateau_start_ps=None):
    """Histogram of ``t_b - t_a`` over all pairs within the lag range.

    Passing the same stream object twice gives an autocorrelation with the
    zero-delay self pairs removed.
    """
    width, rng_ps = _check_binning(bin_width_ps, lag_range_ps)
    same = a is b
    ta = _sorted_times(a, "a")
    tb = ta if same else _sorted_times(b, "b")
    same = same or (ta is tb)
    counts = _xc(ta, tb, width, rng_ps // width, same)
    meta = {"duration_ps": _duration(duration_ps, ta, tb), "n_a": int(ta.size), "n_b": int(tb.size)}
    hist = Histogram(width, rng_ps, counts, meta=meta, plateau_start_ps=plateau_start_ps)
    return hist.normalize(normalization)


def heralding_efficiency(idler, signal, window_ps):
    """Fraction of idler tags with at least one signal tag inside the window."""
    ti = _sorted_times(idler, "idler")
    ts = _sorted_times(signal, "signal")
    if ti.size == 0:
        raise UndefinedRatioError("heralding efficiency of an empty idler stream")
    hits = _kernels.herald_mask(ti, ts, np.int64(window_ps))
    return float(hits.sum()) / ti.size


def _heralded_counts(ts, t1, t2, herald, width, half):
    """Counts of ch2-ch1 lags where the reference tag is heralded by sync."""
    w = np.int64(herald.window_ps)
    h1 = _kernels.herald_mask(t1, ts, w)
    if herald.reference is Reference.CH1:
        return _xc(t1[h1], t2, width, half), int(h1.sum())
    h2 = _kernels.herald_mask(t2, ts, w)
    if herald.reference is Reference.CH2:
        return _xc(t1, t2[h2], width, half), int(h2.sum())
    # either end heralded: pairs with a heralded ch1, plus unheralded ch1 with heralded ch2
    counts = _xc(t1[h1], t2, width, half) + _xc(t1[~h1], t2[h2], width, half)
    return counts, int(h1.sum() + h2.sum())


def heralded_g2(
    sync,
    ch1,
    ch2,
    herald,
    bin_width_ps,
    lag_range_ps,
    duration_ps=None,
    normalization="plateau",
    plateau_start_ps=None,
):
    """Herald-conditioned correlation between two channels.

    A (ch1, ch2) pair is counted once if its reference tag (``herald.reference``)
    has a sync tag within the window, however many sync tags qualify; this is
    the same as letting the first qualifying sync claim it. The lag is
    ``t_ch2 - t_ch1``.

    ``normalization="heralded"`` divides each bin by the sync-to-ch2
    coincidences expected for the heralded ch1 count, giving the conditional
    g2 that drops towards zero for a single-photon source.
    """
    width, rng_ps = _check_binning(bin_width_ps, lag_range_ps)
    ts = _sorted_times(sync, "sync")
    t1 = _sorted_times(ch1, "ch1")
    t2 = _sorted_times(ch2, "ch2")
    half = rng_ps // width
    counts, n_herald = _heralded_counts(ts, t1, t2, herald, width, half)
    baseline = None
    if Normalization(normalization) is Normalization.HERALDED:
        if herald.reference is not Reference.CH1:
            raise ParameterError("heralded normalization requires reference='ch1'")
        baseline = _xc(ts, t2, width, half)
    meta = {
        "duration_ps": _duration(duration_ps, ts, t1, t2),
        "n_sync": int(ts.size),
        "n_a": int(t1.size),
        "n_b": int(t2.size),
        "n_herald": n_herald,
    }
    flags = ("empty_herald",) if n_herald == 0 else ()
    hist = Histogram(width, rng_ps, counts, meta=meta, baseline=baseline, flags=flags, plateau_start_ps=plateau_start_ps)
    return hist.normalize(normalization)


def fourfold_hom(
    idler1,
    idler2,
    out1,
    out2,
    herald,
    bin_width_ps,
    lag_range_ps,
    duration_ps=None,
    normalization="plateau",
    plateau_start_ps=None,
):
    """Four-fold coincidences: an out1/out2 pair where one output tag is heralded
    by idler1 and the other by idler2 (either assignment); lag ``t_out2 - t_out1``.
    """
    width, rng_ps = _check_binning(bin_width_ps, lag_range_ps)
    i1 = _sorted_times(idler1, "idler1")
    i2 = _sorted_times(idler2, "idler2")
    o1 = _sorted_times(out1, "out1")
    o2 = _sorted_times(out2, "out2")
    half = rng_ps // width
    w = np.int64(herald.window_ps)
    a1 = _kernels.herald_mask(o1, i1, w)
    a2 = _kernels.herald_mask(o1, i2, w)
    b1 = _kernels.herald_mask(o2, i1, w)
    b2 = _kernels.herald_mask(o2, i2, w)
    # inclusion-exclusion over the two herald assignments
    counts = _xc(o1[a1], o2[b2], width, half) + _xc(o1[a2], o2[b1], width, half)
    counts -= _xc(o1[a1 & a2], o2[b1 & b2], width, half)
    meta = {
        "duration_ps": _duration(duration_ps, i1, i2, o1, o2),
        "n_a": int(o1.size),
        "n_b": int(o2.size),
        "n_herald": int(a1.sum() + a2.sum() + b1.sum() + b2.sum()),
    }
    flags = ("empty_herald",) if i1.size == 0 or i2.size == 0 else ()
    hist = Histogram(width, rng_ps, counts, meta=meta, flags=flags, plateau_start_ps=plateau_start_ps)
    return hist.normalize(normalization)


def hybrid_threefold(sync, ch1, ch2, herald, bin_width_ps, lag_range_ps, duration_ps=None, plateau_start_ps=None):
    """Idler-heralded coincidences between the two outputs of the hybrid
    beamsplitter, plateau-normalized."""
    return heralded_g2(
        sync,
        ch1,
        ch2,
        herald,
        bin_width_ps,
        lag_range_ps,
        duration_ps=duration_ps,
        normalization="plateau",
        plateau_start_ps=plateau_start_ps,
    )


def count_ratio(stream_a, stream_b, duration_a_ps=None, duration_b_ps=None):
    """Ratio of count rates; equal durations reduce to a ratio of counts."""
    na, nb = len(as_times(stream_a)), len(as_times(stream_b))
    if nb == 0:
        raise UndefinedRatioError("count ratio with an empty denominator stream")
    if duration_a_ps is None or duration_b_ps is None:
        return na / nb
    return (na / duration_a_ps) / (nb / duration_b_ps)


def integrated_g2(hist, mode_duration_ps, half_width_ps):
    """Mode-averaged g2 from the excess area of an accidental-normalized peak.

    ``1 + (1/m) * sum((g - 1) * w)`` over bins with ``|lag| <= half_width_ps``.
    For thermal modes of width ``m`` this equals the photon-number moment
    ratio (2 for an autocorrelation, 2 + 1/nbar for signal-idler), independent
    of how the biphoton and jitter smear the peak.

    Returns ``(value, error)`` with Poisson error from the summed counts.
    """
    if hist.normalization is not Normalization.ACCIDENTAL:
        hist = hist.normalize(Normalization.ACCIDENTAL)
    if hist.norm_constant <= 0:
        raise UndefinedRatioError("accidental level is zero")
    sel = np.abs(hist.lags) <= half_width_ps
    n = int(hist.counts[sel].sum())
    excess = n / hist.norm_constant - sel.sum()
    value = 1.0 + excess * hist.bin_width_ps / mode_duration_ps
    error = math.sqrt(n) / hist.norm_constant * hist.bin_width_ps / mode_duration_ps
    return value, error
