"""Single-photon detector model: loss, jitter, dark counts, dead time."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hybridhom._kernels import dead_time_keep
from hybridhom.errors import ParameterError
from hybridhom.sources import FWHM_TO_SIGMA, make_rng
from hybridhom.tags import TIME_DTYPE, Origin, TagStream

# Quoted instrument responses for named detector combinations (FWHM, ps).
RESPONSE_OVERRIDES = {"two_detector": 104.0, "three_detector": 124.0}
TCSPC_JITTER_FWHM_PS = 50.0


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 1.0
    dark_rate_hz: float = 0.0
    jitter_fwhm_ps: float = 70.0
    dead_time_ps: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ParameterError("efficiency must lie in [0, 1]")
        if not self.dark_rate_hz >= 0:
            raise ParameterError("dark_rate_hz must be non-negative")
        if not self.jitter_fwhm_ps >= 0:
            raise ParameterError("jitter_fwhm_ps must be non-negative")
        if not self.dead_time_ps >= 0:
            raise ParameterError("dead_time_ps must be non-negative")

    def timing_fwhm(self, tcspc_jitter_fwhm_ps=TCSPC_JITTER_FWHM_PS):
        return math.hypot(self.jitter_fwhm_ps, tcspc_jitter_fwhm_ps)


@dataclass(frozen=True)
class SystemResponse:
    """Gaussian instrument response of a coincidence measurement.

    ``computed_fwhm_ps`` keeps the quadrature sum when ``fwhm_ps`` was taken
    from the override table.
    """

    fwhm_ps: float
    computed_fwhm_ps: float | None = None
    name: str | None = None

    def __post_init__(self):
        if not self.fwhm_ps >= 0:
            raise ParameterError("response fwhm must be non-negative")

    @property
    def sigma_ps(self):
        return self.fwhm_ps * FWHM_TO_SIGMA


def combine_response(fwhm_list, override=None):
    """Quadrature sum of jitter FWHMs.

    ``override`` is either a key of :data:`RESPONSE_OVERRIDES` or a number;
    when given it replaces the computed value, which is kept alongside.
    """
    values = [float(v) for v in fwhm_list]
    if any(v < 0 for v in values):
        raise ParameterError("FWHM values must be non-negative")
    computed = math.sqrt(sum(v * v for v in values))
    if override is None:
        return SystemResponse(computed, computed)
    if isinstance(override, str):
        if override not in RESPONSE_OVERRIDES:
            raise ParameterError(f"unknown response override {override!r}")
        return SystemResponse(RESPONSE_OVERRIDES[override], computed, override)
    return SystemResponse(float(override), computed)


def detect(stream, params, tcspc_jitter_fwhm_ps, duration_ps, seed, channel=None):
    """Turn a photon stream into a detector click stream.

    Each photon survives with ``params.efficiency``; survivors move by
    Gaussian noise whose FWHM is the quadrature sum of detector and TCSPC
    jitter. Poisson dark clicks fill ``[0, duration_ps)``. Clicks shifted
    outside the run are dropped, then dead time is applied in time order.
    """
    if tcspc_jitter_fwhm_ps < 0:
        raise ParameterError("tcspc jitter must be non-negative")
    if duration_ps < 0:
        raise ParameterError("duration_ps must be non-negative")
    rng = make_rng(seed)
    channel = stream.channel if channel is None else channel
    times = stream.times
    origin = stream.origin

    if params.efficiency < 1.0:
        keep = rng.random(times.size) < params.efficiency
        times = times[keep]
        origin = None if origin is None else origin[keep]

    sigma = params.timing_fwhm(tcspc_jitter_fwhm_ps) * FWHM_TO_SIGMA
    if sigma > 0:
        times = times + np.rint(rng.normal(0.0, sigma, size=times.size)).astype(TIME_DTYPE)

    if params.dark_rate_hz > 0 and duration_ps > 0:
        n_dark = rng.poisson(params.dark_rate_hz * duration_ps * 1e-12)
        dark = rng.integers(0, duration_ps, size=n_dark, dtype=TIME_DTYPE)
        times = np.concatenate([times, dark])
        if origin is not None:
            origin = np.concatenate([origin, np.full(n_dark, Origin.DARK, np.uint8)])

    inside = (times >= 0) & (times < duration_ps)
    out = TagStream.from_unsorted(times[inside], channel, None if origin is None else origin[inside])
    if params.dead_time_ps > 0 and len(out):
        out = out.select(dead_time_keep(out.times, TIME_DTYPE(math.ceil(params.dead_time_ps))))
    return out
