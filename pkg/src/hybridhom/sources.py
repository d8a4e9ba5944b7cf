"""Emission models for the atomic photon-pair source and the quantum dot.

Both generators return sorted :class:`~hybridhom.tags.TagStream` objects in
integer picoseconds and are deterministic for a given seed. Optional
``*_efficiency`` arguments thin the output at generation time; this is
equivalent in distribution to generating everything and applying binomial
loss afterwards, but much cheaper at low efficiency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hybridhom.errors import ParameterError
from hybridhom.tags import TIME_DTYPE, Origin, TagStream

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Beat:
    """Cosine modulation of the signal-idler delay density."""

    frequency_ghz: float
    amplitude: float

    def __post_init__(self):
        if not 0.0 <= self.amplitude <= 1.0:
            raise ParameterError("beat amplitude must lie in [0, 1]")
        if self.frequency_ghz < 0:
            raise ParameterError("beat frequency must be non-negative")


@dataclass(frozen=True)
class SfwmParams:
    """Photon-pair source parameters.

    ``nbar`` is the mean number of pairs per temporal mode of width
    ``mode_duration_ps``; the mode width defaults to the biphoton FWHM.
    """

    nbar: float
    duration_ps: int
    biphoton_fwhm_ps: float = 128.0
    mode_duration_ps: float | None = None
    beat: Beat | None = None

    def __post_init__(self):
        if self.mode_duration_ps is None:
            object.__setattr__(self, "mode_duration_ps", float(self.biphoton_fwhm_ps))
        if not self.nbar >= 0:
            raise ParameterError(f"nbar must be >= 0, got {self.nbar}")
        if not self.biphoton_fwhm_ps > 0:
            raise ParameterError("biphoton_fwhm_ps must be positive")
        if not self.mode_duration_ps > 0:
            raise ParameterError("mode_duration_ps must be positive")
        if self.duration_ps < 0:
            raise ParameterError("duration_ps must be non-negative")

    @property
    def pair_rate_hz(self):
        return self.nbar / (self.mode_duration_ps * 1e-12)

    @classmethod
    def from_pair_rate(cls, pair_rate_hz, duration_ps, **kwargs):
        fwhm = kwargs.get("biphoton_fwhm_ps", 128.0)
        mode = kwargs.get("mode_duration_ps") or fwhm
        return cls(nbar=pair_rate_hz * mode * 1e-12, duration_ps=duration_ps, **kwargs)


@dataclass(frozen=True)
class QdParams:
    """Quantum-dot renewal-process parameters (times in ps)."""

    excitation_rate_hz: float
    lifetime_ps: float = 1010.0
    coherence_ps: float = 129.0
    residual_g2: float = 0.01

    def __post_init__(self):
        if not self.lifetime_ps > 0:
            raise ParameterError("lifetime_ps must be positive")
        if not self.coherence_ps > 0:
            raise ParameterError("coherence_ps must be positive")
        if not 0.0 <= self.residual_g2 < 1.0:
            raise ParameterError("residual_g2 must lie in [0, 1)")
        if not self.excitation_rate_hz >= 0:
            raise ParameterError("excitation_rate_hz must be non-negative")

    @property
    def emission_rate_hz(self):
        if self.excitation_rate_hz == 0:
            return 0.0
        return 1.0 / (1.0 / self.excitation_rate_hz + self.lifetime_ps * 1e-12)

    @property
    def replacement_fraction(self):
        # g2(0) = 1 - (1 - eps)^2 for a renewal process diluted by Poisson events
        return 1.0 - math.sqrt(1.0 - self.residual_g2)

    @classmethod
    def for_emission_rate(cls, emission_rate_hz, lifetime_ps=1010.0, **kwargs):
        """Pick the excitation rate that gives the requested emission rate."""
        inv = 1.0 / emission_rate_hz - lifetime_ps * 1e-12
        if inv <= 0:
            raise ParameterError("emission rate exceeds 1/lifetime")
        return cls(excitation_rate_hz=1.0 / inv, lifetime_ps=lifetime_ps, **kwargs)


def _check_efficiency(name, value):
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")


def _occupied_modes(rng, n_modes, p):
    """Indices of modes holding at least one pair; gaps are geometric."""
    if n_modes <= 0 or p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n_modes, dtype=np.int64)
    pieces = []
    pos = -1
    while True:
        remaining = n_modes - 1 - pos
        expected = remaining * p
        size = int(expected + 6.0 * math.sqrt(expected + 1.0) + 16)
        idx = pos + np.cumsum(rng.geometric(p, size=size), dtype=np.int64)
        pieces.append(idx[idx < n_modes])
        if idx[-1] >= n_modes:
            break
        pos = int(idx[-1])
    return np.concatenate(pieces)


def _biphoton_delays(rng, n, sigma_ps, beat):
    delays = rng.normal(0.0, sigma_ps, size=n)
    if beat is None or beat.amplitude == 0 or n == 0:
        return delays
    omega = 2.0 * math.pi * beat.frequency_ghz * 1e-3
    todo = np.arange(n)
    while todo.size:
        accept_p = (1.0 + beat.amplitude * np.cos(omega * delays[todo])) / (1.0 + beat.amplitude)
        rejected = todo[rng.random(todo.size) >= accept_p]
        delays[rejected] = rng.normal(0.0, sigma_ps, size=rejected.size)
        todo = rejected
    return delays


def generate_sfwm(params, seed, signal_efficiency=1.0, idler_efficiency=1.0):
    """Generate signal and idler emission streams.

    Modes of width ``mode_duration_ps`` tile the run. Each mode holds a
    geometric number of pairs with mean ``nbar``; every pair puts its idler
    uniformly inside the mode and its signal a Gaussian delay later.

    Returns ``(signal, idler)``.
    """
    _check_efficiency("signal_efficiency", signal_efficiency)
    _check_efficiency("idler_efficiency", idler_efficiency)
    rng = make_rng(seed)
    eta_s, eta_i = signal_efficiency, idler_efficiency
    keep = eta_s + eta_i - eta_s * eta_i
    mode = float(params.mode_duration_ps)
    n_modes = int(params.duration_ps // mode)
    mean_kept = keep * params.nbar
    if mean_kept == 0 or n_modes == 0:
        return (
            TagStream.empty().with_channel(0),
            TagStream.empty().with_channel(1),
        )

    # geometric counts stay geometric under binomial thinning
    occupied = _occupied_modes(rng, n_modes, mean_kept / (1.0 + mean_kept))
    per_mode = rng.geometric(1.0 / (1.0 + mean_kept), size=occupied.size)
    pair_mode = np.repeat(occupied, per_mode)
    n_pairs = pair_mode.size

    idler_t = (pair_mode + rng.random(n_pairs)) * mode
    delays = _biphoton_delays(rng, n_pairs, params.biphoton_fwhm_ps * FWHM_TO_SIGMA, params.beat)
    signal_t = idler_t + delays

    u = rng.random(n_pairs)
    keep_s = u < eta_s / keep
    keep_i = (u < eta_s * eta_i / keep) | ~keep_s

    duration = params.duration_ps
    signal = np.rint(signal_t[keep_s]).astype(TIME_DTYPE)
    signal = np.sort(signal[(signal >= 0) & (signal < duration)])
    idler = np.rint(idler_t[keep_i]).astype(TIME_DTYPE)
    idler = np.sort(idler[(idler >= 0) & (idler < duration)])
    return (
        TagStream(signal, 0, np.full(signal.size, Origin.SFWM_SIGNAL, np.uint8)),
        TagStream(idler, 1, np.full(idler.size, Origin.SFWM_IDLER, np.uint8)),
    )


def generate_qd(params, duration_ps, seed, efficiency=1.0):
    """Generate a quantum-dot photon stream as a two-stage renewal process.

    Inter-emission gaps are Exp(excitation) + Exp(lifetime). A fraction of
    emissions is swapped for uncorrelated Poisson events so that the zero-lag
    autocorrelation equals ``residual_g2``. With ``efficiency < 1`` the
    thinned process is drawn directly: the gap between kept photons is a sum
    of a geometric number of raw gaps, i.e. two gamma variates.
    """
    _check_efficiency("efficiency", efficiency)
    if duration_ps < 0:
        raise ParameterError("duration_ps must be non-negative")
    rng = make_rng(seed)
    rate_ps = params.emission_rate_hz * 1e-12 * efficiency
    if rate_ps == 0 or duration_ps == 0:
        return TagStream.empty(channel=2)

    exc_mean = 1e12 / params.excitation_rate_hz
    mean_gap = 1.0 / rate_ps
    t0 = -5.0 * mean_gap
    pieces = []
    last = t0
    while last < duration_ps:
        expected = (duration_ps - last) * rate_ps
        size = int(expected + 6.0 * math.sqrt(expected + 1.0) + 16)
        n_raw = rng.geometric(efficiency, size=size) if efficiency < 1 else np.ones(size)
        gaps = rng.gamma(n_raw, exc_mean) + rng.gamma(n_raw, params.lifetime_ps)
        times = last + np.cumsum(gaps)
        pieces.append(times)
        last = times[-1]
    times = np.concatenate(pieces)
    times = times[(times >= 0) & (times < duration_ps)]

    eps = params.replacement_fraction
    if eps > 0:
        times = times[rng.random(times.size) >= eps]
        n_extra = rng.poisson(eps * rate_ps * duration_ps)
        times = np.concatenate([times, rng.random(n_extra) * duration_ps])
    out = np.sort(np.rint(times).astype(TIME_DTYPE))
    out = out[out < duration_ps]
    return TagStream(out, 2, np.full(out.size, Origin.QD, np.uint8))
