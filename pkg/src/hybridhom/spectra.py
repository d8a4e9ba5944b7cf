"""Emission spectra, their normalized overlap, and a scanning Fabry-Perot model.

Frequencies are offsets in GHz from a common reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve

from hybridhom.errors import ParameterError

QD_FWHM_GHZ = 2.17
TARGET_OVERLAP = 0.92
# 0.03 nm at 917.48 nm
DEFAULT_DETUNING_GHZ = 10.7


@dataclass(frozen=True)
class Spectrum:
    grid: np.ndarray
    density: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        density = np.asarray(self.density, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ParameterError("spectrum grid needs at least two points")
        if grid.shape != density.shape:
            raise ParameterError("grid and density must have the same length")
        if np.any(np.diff(grid) <= 0):
            raise ParameterError("spectrum grid must be strictly increasing")
        if np.any(density < 0):
            raise ParameterError("spectral density must be non-negative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)

    def area(self):
        return float(np.trapezoid(self.density, self.grid))

    def normalize(self):
        area = self.area()
        if area <= 0:
            raise ParameterError("cannot normalize a zero spectrum")
        return Spectrum(self.grid, self.density / area, True)

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.grid, self.density]), delimiter=",", header="offset_ghz,density", comments="")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


def _lorentz(x, center, fwhm):
    hw = 0.5 * fwhm
    return hw / math.pi / ((x - center) ** 2 + hw * hw)


def lorentzian(center_ghz, fwhm_ghz, grid):
    """Unit-area Lorentzian sampled on ``grid``."""
    if not fwhm_ghz > 0:
        raise ParameterError("Lorentzian FWHM must be positive")
    grid = np.asarray(grid, dtype=float)
    return Spectrum(grid, _lorentz(grid, center_ghz, fwhm_ghz), True)


def gaussian(center_ghz, fwhm_ghz, grid):
    """Unit-area Gaussian sampled on ``grid``."""
    if not fwhm_ghz > 0:
        raise ParameterError("Gaussian FWHM must be positive")
    grid = np.asarray(grid, dtype=float)
    sigma = fwhm_ghz / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    dens = np.exp(-0.5 * ((grid - center_ghz) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    return Spectrum(grid, dens, True)


@dataclass(frozen=True)
class LorentzComponent:
    center_ghz: float
    fwhm_ghz: float
    weight: float = 1.0

    def __post_init__(self):
        if not self.fwhm_ghz > 0:
            raise ParameterError("component FWHM must be positive")
        if self.weight < 0:
            raise ParameterError("component weight must be non-negative")


@dataclass(frozen=True)
class BeatModulation:
    """Temporal cosine modulation, seen in the spectrum as sidebands at ±frequency."""

    frequency_ghz: float
    depth: float

    def __post_init__(self):
        if not 0.0 <= self.depth <= 1.0:
            raise ParameterError("beat depth must lie in [0, 1]")


@dataclass(frozen=True)
class SignalProfileParams:
    components: tuple = field(default_factory=tuple)
    beat_modulation: BeatModulation | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ParameterError("signal profile needs at least one component")
        object.__setattr__(self, "components", comps)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        total = sum(c.weight for c in self.components)
        if total <= 0:
            raise ParameterError("component weights sum to zero")
        out = np.zeros_like(x)
        for c in self.components:
            out += c.weight / total * _lorentz(x, c.center_ghz, c.fwhm_ghz)
        beat = self.beat_modulation
        if beat is not None and beat.depth > 0:
            side = np.zeros_like(x)
            for c in self.components:
                for sign in (-1.0, 1.0):
                    side += c.weight / total * _lorentz(x, c.center_ghz + sign * beat.frequency_ghz, c.fwhm_ghz)
            out = (out + 0.5 * beat.depth * side) / (1.0 + beat.depth)
        return out


def signal_profile(params, grid):
    grid = np.asarray(grid, dtype=float)
    return Spectrum(grid, params.density(grid), True)


def _common(s1, s2):
    if s1.grid.shape == s2.grid.shape and np.array_equal(s1.grid, s2.grid):
        return s1.grid, s1.density, s2.density
    grid = np.union1d(s1.grid, s2.grid)
    d1 = np.interp(grid, s1.grid, s1.density, left=0.0, right=0.0)
    d2 = np.interp(grid, s2.grid, s2.density, left=0.0, right=0.0)
    return grid, d1, d2


def spectral_overlap(s1, s2):
    """Normalized overlap ``int S1 S2 / sqrt(int S1^2 int S2^2)`` by trapezoid rule.

    Spectra on different grids are linearly interpolated onto the union grid,
    taking zero outside each spectrum's own range.
    """
    grid, d1, d2 = _common(s1, s2)
    n1 = np.trapezoid(d1 * d1, grid)
    n2 = np.trapezoid(d2 * d2, grid)
    if n1 <= 0 or n2 <= 0:
        raise ParameterError("overlap of a zero-norm spectrum")
    cross = np.trapezoid(d1 * d2, grid)
    value = cross / math.sqrt(n1 * n2)
    return float(min(max(value, 0.0), 1.0))


def overlap_of_profiles(f1, f2, lo_ghz, hi_ghz, tol=1e-6, start_points=2001, max_points=2**24):
    """Overlap of two density callables, refining a uniform grid until stable."""
    n = start_points
    prev = None
    while True:
        grid = np.linspace(lo_ghz, hi_ghz, n)
        value = spectral_overlap(Spectrum(grid, f1(grid)), Spectrum(grid, f2(grid)))
        if prev is not None and abs(value - prev) < tol:
            return value
        if n > max_points:
            raise ParameterError("overlap refinement did not converge")
        prev = value
        n = 2 * n - 1


def detune(s, delta_ghz):
    """Rigid frequency shift."""
    return Spectrum(s.grid + delta_ghz, s.density, s.normalized)


def airy_transmission(nu_ghz, fsr_ghz, finesse):
    coeff = (2.0 * finesse / math.pi) ** 2
    return 1.0 / (1.0 + coeff * np.sin(math.pi * np.asarray(nu_ghz) / fsr_ghz) ** 2)


def fp_window_ghz(fsr_ghz, finesse):
    return fsr_ghz / finesse


@dataclass(frozen=True)
class ScanResult:
    spectrum: Spectrum
    window_ghz: float
    computed_window_ghz: float
    aliasing: bool


def fp_scan(s, fsr_ghz=10.0, finesse=160.0, window_ghz=None):
    """Spectrum recorded by scanning a Fabry-Perot across ``s``.

    The result is ``s`` convolved with the Airy transmission, then rescaled
    to the input area. ``window_ghz`` overrides the transmission FWHM (the
    finesse is adjusted to ``fsr/window``). The grid must be uniform.
    ``aliasing`` is set when the input spans more than one FSR, so that
    neighbouring orders overlap.
    """
    if not (fsr_ghz > 0 and finesse > 0):
        raise ParameterError("FSR and finesse must be positive")
    computed = fp_window_ghz(fsr_ghz, finesse)
    eff_finesse = finesse if window_ghz is None else fsr_ghz / window_ghz
    steps = np.diff(s.grid)
    step = float(steps.mean())
    if not np.allclose(steps, step, rtol=1e-6, atol=0.0):
        raise ParameterError("fp_scan needs a uniform grid")
    n = s.grid.size
    offsets = np.arange(-(n - 1), n) * step
    kernel = airy_transmission(offsets, fsr_ghz, eff_finesse)
    kernel /= kernel.sum()
    out = fftconvolve(s.density, kernel, mode="same")
    out = np.clip(out, 0.0, None)
    area_in = s.area()
    area_out = float(np.trapezoid(out, s.grid))
    if area_out > 0:
        out *= area_in / area_out
    span = s.grid[-1] - s.grid[0]
    return ScanResult(Spectrum(s.grid, out, s.normalized), fsr_ghz / eff_finesse, computed, bool(span > fsr_ghz))


def calibrate_signal_profile(
    qd_fwhm_ghz=QD_FWHM_GHZ,
    target=TARGET_OVERLAP,
    main_fwhm_ghz=QD_FWHM_GHZ,
    side_center_ghz=-1.2,
    side_fwhm_ghz=1.0,
):
    """Weight of a side Lorentzian that brings the overlap with the QD line to ``target``.

    The main component is centred on the QD line; the side component stands
    in for hyperfine and reabsorption structure.
    """
    qd = lambda x: _lorentz(x, 0.0, qd_fwhm_ghz)  # noqa: E731
    span = 60.0 * max(qd_fwhm_ghz, main_fwhm_ghz)

    def params_for(weight):
        return SignalProfileParams(
            (LorentzComponent(0.0, main_fwhm_ghz, 1.0), LorentzComponent(side_center_ghz, side_fwhm_ghz, weight))
        )

    def gap(weight):
        return overlap_of_profiles(params_for(weight).density, qd, -span, span, tol=1e-9, start_points=20001) - target

    if gap(0.0) < 0:
        raise ParameterError("main component alone is already below the target overlap")
    hi = 1.0
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise ParameterError("side component cannot reach the target overlap")
    weight = brentq(gap, 0.0, hi, xtol=1e-12)
    return params_for(weight)
