"""Photon-number model of the heralded three-fold coincidence.

A two-mode squeezed vacuum (signal, idler) and a weakly multiphoton
single-photon source meet on a 50:50 beamsplitter. For one temporal mode the
idler-heralded coincidence between the two outputs is

    C = 1/4 * [ <n_i><n_q(n_q-1)> + <n_i n_s(n_s-1)> + 2 <n_q><n_s n_i> (1 - I) ]

where every unordered photon pair splits with probability 1/2, reduced to
(1 - I)/2 for one photon from each input. Losses thin factorial moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from hybridhom.errors import ParameterError, UndefinedRatioError
from hybridhom.sources import FWHM_TO_SIGMA


@dataclass(frozen=True)
class EfficiencyConfig:
    eta_s: float = 0.37
    eta_i: float = 0.57

    def __post_init__(self):
        for name in ("eta_s", "eta_i"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class TmsvState:
    nbar: float

    def __post_init__(self):
        if not self.nbar >= 0:
            raise ParameterError("nbar must be non-negative")


@dataclass(frozen=True)
class QdState:
    mu: float
    g2_residual: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ParameterError("mu must lie in [0, 1]")
        if not self.g2_residual >= 0:
            raise ParameterError("g2_residual must be non-negative")


@dataclass(frozen=True)
class MomentTable:
    """Photon-number expectation values (all dimensionless)."""

    n_i: float = 0.0
    n_s: float = 0.0
    ns_ni: float = 0.0
    ns_ns1: float = 0.0
    ni_ns_ns1: float = 0.0
    n_qd: float = 0.0
    nqd_nqd1: float = 0.0

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def combined(self, other):
        """Signal/idler moments from ``self`` with the QD moments of ``other``."""
        return replace(self, n_qd=other.n_qd, nqd_nqd1=other.nqd_nqd1)


@dataclass(frozen=True)
class TmsvMoments:
    closed: MomentTable
    truncated: MomentTable
    truncation: int
    precision_ok: bool

    def max_relative_difference(self):
        worst = 0.0
        for key, a in self.closed.as_dict().items():
            b = getattr(self.truncated, key)
            if a != 0 or b != 0:
                worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
        return worst


def tmsv_closed_form(nbar):
    n = float(nbar)
    return MomentTable(
        n_i=n,
        n_s=n,
        ns_ni=n + 2 * n * n,
        ns_ns1=2 * n * n,
        ni_ns_ns1=6 * n**3 + 4 * n * n,
    )


def thermal_distribution(nbar, truncation):
    """``p_n = nbar^n / (1 + nbar)^(n+1)`` for ``n = 0..truncation``."""
    n = np.arange(truncation + 1, dtype=float)
    if nbar == 0:
        p = np.zeros(n.size)
        p[0] = 1.0
        return p
    return np.exp(n * math.log(nbar) - (n + 1) * math.log1p(nbar))


def tmsv_moments(nbar, truncation=200):
    """Closed-form TMSV moments together with explicit truncated Fock sums.

    ``precision_ok`` is False when ``truncation < 10 + 10*nbar``.
    """
    if nbar < 0:
        raise ParameterError("nbar must be non-negative")
    truncation = int(truncation)
    if truncation < 1:
        raise ParameterError("truncation must be at least 1")
    p = thermal_distribution(nbar, truncation)
    n = np.arange(truncation + 1, dtype=float)
    mean = float(np.sum(p * n))
    truncated = MomentTable(
        n_i=mean,
        n_s=mean,
        ns_ni=float(np.sum(p * n * n)),
        ns_ns1=float(np.sum(p * n * (n - 1))),
        ni_ns_ns1=float(np.sum(p * n * n * (n - 1))),
    )
    ok = truncation >= 10 + 10 * nbar
    return TmsvMoments(tmsv_closed_form(nbar), truncated, truncation, ok)


def qd_moments(qd):
    return MomentTable(n_qd=qd.mu, nqd_nqd1=qd.g2_residual * qd.mu * qd.mu)


def apply_loss(m, eff, mu_scale=1.0):
    """Binomial loss: each factorial moment picks up one efficiency per photon."""
    es, ei = eff.eta_s, eff.eta_i
    if mu_scale < 0:
        raise ParameterError("mu_scale must be non-negative")
    return MomentTable(
        n_i=m.n_i * ei,
        n_s=m.n_s * es,
        ns_ni=m.ns_ni * es * ei,
        ns_ns1=m.ns_ns1 * es * es,
        ni_ns_ns1=m.ni_ns_ns1 * ei * es * es,
        n_qd=m.n_qd * mu_scale,
        nqd_nqd1=m.nqd_nqd1 * mu_scale * mu_scale,
    )


@dataclass(frozen=True)
class Threefold:
    c_indis: float
    c_dis: float
    v0: float
    terms: dict


def threefold_from_moments(m, iid):
    if not 0.0 <= iid <= 1.0:
        raise ParameterError("iid must lie in [0, 1]")
    qd_pair = m.n_i * m.nqd_nqd1
    sfwm_self = m.ni_ns_ns1
    cross = 2.0 * m.n_qd * m.ns_ni
    c_dis = 0.25 * (qd_pair + sfwm_self + cross)
    c_indis = 0.25 * (qd_pair + sfwm_self + cross * (1.0 - iid))
    if c_dis <= 0:
        raise UndefinedRatioError("distinguishable coincidence rate is zero")
    terms = {"qd_pair": 0.25 * qd_pair, "sfwm_self": 0.25 * sfwm_self, "cross": 0.25 * cross}
    return Threefold(c_indis, c_dis, (c_dis - c_indis) / c_dis, terms)


def threefold_coincidence(qd, tmsv, eff, iid):
    """Three-fold coincidences for (in)distinguishable inputs and the visibility.

    ``tmsv.nbar`` is the mean pair number at the source; ``qd.mu`` is the QD
    photon number already delivered to the beamsplitter.
    """
    m = apply_loss(tmsv_closed_form(tmsv.nbar), eff).combined(qd_moments(qd))
    return threefold_from_moments(m, iid)


def nbar_for_ratio(r, qd, eff):
    """Source pair number giving a signal-to-QD count ratio ``r`` per mode."""
    if eff.eta_s <= 0:
        raise UndefinedRatioError("signal efficiency is zero")
    return r * qd.mu / eff.eta_s


def ratio_for_nbar(nbar, qd, eff):
    if qd.mu <= 0:
        raise UndefinedRatioError("QD photon number is zero")
    return eff.eta_s * nbar / qd.mu


def default_nbar_grid():
    return np.logspace(-3, -1, 21)


def default_mu_grid():
    return np.linspace(0.01, 0.2, 20)


def visibility_surface(nbar_grid=None, mu_grid=None, eff=None, iid=1.0, g2_residual=0.01, post_loss=False):
    """V0 on an (nbar, mu) grid; rows follow ``nbar_grid``.

    With ``post_loss=True`` the nbar axis is read as the signal photon number
    after the signal-path loss.
    """
    nbar_grid = default_nbar_grid() if nbar_grid is None else np.asarray(nbar_grid, dtype=float)
    mu_grid = default_mu_grid() if mu_grid is None else np.asarray(mu_grid, dtype=float)
    eff = EfficiencyConfig() if eff is None else eff
    if np.any(nbar_grid <= 0) or np.any(mu_grid <= 0):
        raise ParameterError("grid values must be positive")
    out = np.empty((nbar_grid.size, mu_grid.size))
    for a, nbar in enumerate(nbar_grid):
        source_nbar = nbar / eff.eta_s if post_loss else nbar
        for b, mu in enumerate(mu_grid):
            res = threefold_coincidence(QdState(mu, g2_residual), TmsvState(source_nbar), eff, iid)
            out[a, b] = res.v0
    return out


@dataclass(frozen=True)
class MonotonicityReport:
    nonincreasing_in_nbar: bool
    nondecreasing_in_mu: bool
    max_violation: float

    @property
    def passed(self):
        return self.nonincreasing_in_nbar and self.nondecreasing_in_mu


def check_monotonicity(surface, tol=0.0):
    d_nbar = np.diff(surface, axis=0)
    d_mu = np.diff(surface, axis=1)
    worst = max(float(d_nbar.max(initial=0.0)), float(-d_mu.min(initial=0.0)))
    return MonotonicityReport(bool(np.all(d_nbar <= tol)), bool(np.all(d_mu >= -tol)), worst)


def dip_attenuation(tau_int_ps, response_fwhm_ps, step_ps=None):
    """Zero-lag value of ``exp(-2|t|/tau)`` after convolution with a unit-area
    Gaussian response, by direct numerical integration on a fine grid."""
    if response_fwhm_ps <= 0:
        return 1.0
    sigma = response_fwhm_ps * FWHM_TO_SIGMA
    if step_ps is None:
        step_ps = min(tau_int_ps, sigma) / 200.0
    half = 12.0 * sigma + 30.0 * tau_int_ps
    t = np.arange(-half, half + step_ps / 2, step_ps)
    kernel = np.exp(-0.5 * (t / sigma) ** 2)
    kernel /= np.trapezoid(kernel, t)
    return float(np.trapezoid(np.exp(-2.0 * np.abs(t) / tau_int_ps) * kernel, t))


@dataclass(frozen=True)
class RatioCurve:
    r: np.ndarray
    nbar: np.ndarray
    ideal: np.ndarray
    corrected: np.ndarray
    attenuation: float


def visibility_vs_ratio(r_values, qd, eff, iid, response_fwhm_ps, tau_int_ps):
    """Ideal V0 versus count ratio and the value a finite-resolution
    measurement would show at zero lag."""
    r = np.asarray(r_values, dtype=float)
    if np.any(r <= 0):
        raise ParameterError("ratios must be positive")
    nbar = np.array([nbar_for_ratio(x, qd, eff) for x in r])
    ideal = np.array([threefold_coincidence(qd, TmsvState(n), eff, iid).v0 for n in nbar])
    att = dip_attenuation(tau_int_ps, response_fwhm_ps)
    return RatioCurve(r, nbar, ideal, ideal * att, att)


def visibility_at_ratio(r, qd, eff, iid):
    return threefold_coincidence(qd, TmsvState(nbar_for_ratio(r, qd, eff)), eff, iid).v0

