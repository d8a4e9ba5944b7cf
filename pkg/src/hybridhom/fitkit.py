"""Least-squares fits of correlation lineshapes with instrument-response convolution.

Models are evaluated on a dense lag grid and mapped onto the data lags by a
fixed, row-normalized weight matrix (Gaussian response, optionally folded
with the histogram bin). The same matrix maps the analytic Jacobian, so the
convolved Jacobian is exact for the discretized model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from hybridhom.errors import ContractError, FitError, ParameterError, RankDeficiencyError
from hybridhom.sources import FWHM_TO_SIGMA

FOUR_LN2 = 4.0 * math.log(2.0)
MAX_ITER = 200
RTOL = 1e-10


class _Shape:
    names = ()
    lower = ()
    upper = ()

    def value(self, t, p):
        raise NotImplementedError

    def jacobian(self, t, p):
        raise NotImplementedError


class _Antibunch(_Shape):
    """1 - (1 - g0) exp(-|t|/tau)"""

    names = ("g0", "tau_qd_ps")
    lower = (-np.inf, 1e-6)
    upper = (np.inf, np.inf)

    def value(self, t, p):
        g0, tau = p
        return 1.0 - (1.0 - g0) * np.exp(-np.abs(t) / tau)

    def jacobian(self, t, p):
        g0, tau = p
        at = np.abs(t)
        e = np.exp(-at / tau)
        return np.column_stack([e, -(1.0 - g0) * e * at / tau**2])


class _Threefold(_Shape):
    """(1 + (b - 1) exp(-2|t|/tau_hs)) * (1 - I exp(-2|t|/tau_int))"""

    names = ("bunch_amp", "tau_hs_ps", "iid", "tau_int_ps")
    lower = (-np.inf, 1e-6, 0.0, 1e-6)
    upper = (np.inf, np.inf, 1.0, np.inf)

    def value(self, t, p):
        b, th, iid, ti = p
        at = np.abs(t)
        return (1.0 + (b - 1.0) * np.exp(-2.0 * at / th)) * (1.0 - iid * np.exp(-2.0 * at / ti))

    def jacobian(self, t, p):
        b, th, iid, ti = p
        at = np.abs(t)
        eh = np.exp(-2.0 * at / th)
        ei = np.exp(-2.0 * at / ti)
        bunch = 1.0 + (b - 1.0) * eh
        dip = 1.0 - iid * ei
        return np.column_stack(
            [
                eh * dip,
                (b - 1.0) * eh * 2.0 * at / th**2 * dip,
                -bunch * ei,
                -bunch * iid * ei * 2.0 * at / ti**2,
            ]
        )


class _VisibilityDecay(_Shape):
    """v0 exp(-2|t|/tau)"""

    names = ("v0", "tau_ps")
    lower = (0.0, 1e-6)
    upper = (1.0, np.inf)

    def value(self, t, p):
        v0, tau = p
        return v0 * np.exp(-2.0 * np.abs(t) / tau)

    def jacobian(self, t, p):
        v0, tau = p
        at = np.abs(t)
        e = np.exp(-2.0 * at / tau)
        return np.column_stack([e, v0 * e * 2.0 * at / tau**2])


class _Gauss(_Shape):
    names = ("center", "fwhm", "amp", "offset")
    lower = (-np.inf, 1e-6, -np.inf, -np.inf)
    upper = (np.inf, np.inf, np.inf, np.inf)

    def value(self, t, p):
        c, w, a, o = p
        return o + a * np.exp(-FOUR_LN2 * (t - c) ** 2 / w**2)

    def jacobian(self, t, p):
        c, w, a, o = p
        d = t - c
        e = np.exp(-FOUR_LN2 * d**2 / w**2)
        return np.column_stack(
            [a * e * 2.0 * FOUR_LN2 * d / w**2, a * e * 2.0 * FOUR_LN2 * d**2 / w**3, e, np.ones_like(t)]
        )


class _Lorentz(_Shape):
    names = ("center", "fwhm", "amp", "offset")
    lower = (-np.inf, 1e-6, -np.inf, -np.inf)
    upper = (np.inf, np.inf, np.inf, np.inf)

    def value(self, t, p):
        c, w, a, o = p
        hw2 = 0.25 * w * w
        return o + a * hw2 / ((t - c) ** 2 + hw2)

    def jacobian(self, t, p):
        c, w, a, o = p
        d = t - c
        hw2 = 0.25 * w * w
        den = d * d + hw2
        shape = hw2 / den
        return np.column_stack(
            [a * hw2 * 2.0 * d / den**2, a * 0.5 * w * d * d / den**2, shape, np.ones_like(t)]
        )


VARIANTS = {
    "eq2_antibunch": _Antibunch(),
    "eq3_threefold": _Threefold(),
    "eq4_visibility": _VisibilityDecay(),
    "gaussian_peak": _Gauss(),
    "lorentzian_peak": _Lorentz(),
}


@dataclass(frozen=True)
class FitModel:
    """A lineshape variant with parameter values and measurement blurring.

    ``response_fwhm_ps`` is the Gaussian instrument response; ``bin_width_ps``
    additionally averages the model over each histogram bin (0 = point
    samples). ``fixed`` names parameters held constant in a fit.
    """

    variant: str
    params: dict
    response_fwhm_ps: float = 0.0
    bin_width_ps: float = 0.0
    fixed: frozenset = frozenset()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown model variant {self.variant!r}")
        shape = VARIANTS[self.variant]
        missing = set(shape.names) - set(self.params)
        extra = set(self.params) - set(shape.names)
        if missing or extra:
            raise ParameterError(f"{self.variant} parameters must be {shape.names}")
        object.__setattr__(self, "params", {k: float(self.params[k]) for k in shape.names})
        object.__setattr__(self, "fixed", frozenset(self.fixed))
        if self.response_fwhm_ps < 0 or self.bin_width_ps < 0:
            raise ParameterError("response and bin widths must be non-negative")
        for name, lo, hi in zip(shape.names, shape.lower, shape.upper):
            v = self.params[name]
            if not lo <= v <= hi:
                raise ParameterError(f"{name}={v} outside [{lo}, {hi}]")

    @property
    def shape(self):
        return VARIANTS[self.variant]

    @property
    def vector(self):
        return np.array([self.params[n] for n in self.shape.names])

    def with_vector(self, p):
        return replace(self, params=dict(zip(self.shape.names, map(float, p))))


def eq2_antibunch(g0, tau_qd_ps, **kw):
    return FitModel("eq2_antibunch", {"g0": g0, "tau_qd_ps": tau_qd_ps}, **kw)


def eq3_threefold(bunch_amp, tau_hs_ps, iid, tau_int_ps, **kw):
    params = {"bunch_amp": bunch_amp, "tau_hs_ps": tau_hs_ps, "iid": iid, "tau_int_ps": tau_int_ps}
    return FitModel("eq3_threefold", params, **kw)


def eq4_visibility(v0, tau_ps, **kw):
    return FitModel("eq4_visibility", {"v0": v0, "tau_ps": tau_ps}, **kw)


def gaussian_peak(center, fwhm, amp, offset=0.0, **kw):
    return FitModel("gaussian_peak", {"center": center, "fwhm": fwhm, "amp": amp, "offset": offset}, **kw)


def lorentzian_peak(center, fwhm, amp, offset=0.0, **kw):
    return FitModel("lorentzian_peak", {"center": center, "fwhm": fwhm, "amp": amp, "offset": offset}, **kw)


class _Blur:
    """Dense grid plus the weight matrix mapping it onto the data lags."""

    def __init__(self, lags, response_fwhm_ps, bin_width_ps):
        lags = np.asarray(lags, dtype=float)
        sigma = response_fwhm_ps * FWHM_TO_SIGMA
        half_bin = 0.5 * bin_width_ps
        candidates = [response_fwhm_ps / 50.0 if response_fwhm_ps > 0 else np.inf]
        if bin_width_ps > 0:
            candidates.append(bin_width_ps / 50.0)
        step = max(min(candidates), 0.25)
        reach = 6.0 * sigma + half_bin + 2 * step
        k_lo = math.floor((lags.min() - reach) / step)
        k_hi = math.ceil((lags.max() + reach) / step)
        self.grid = np.arange(k_lo, k_hi + 1) * step
        d = lags[:, None] - self.grid[None, :]
        if sigma > 0 and half_bin > 0:
            w = ndtr((d + half_bin) / sigma) - ndtr((d - half_bin) / sigma)
        elif sigma > 0:
            w = np.exp(-0.5 * (d / sigma) ** 2)
        else:
            w = (np.abs(d) <= half_bin).astype(float)
            edge = np.isclose(np.abs(d), half_bin)
            w[edge] = 0.5
        w[np.abs(d) > reach] = 0.0
        self.weights = w / w.sum(axis=1, keepdims=True)

    def value(self, shape, p):
        return self.weights @ shape.value(self.grid, p)

    def jacobian(self, shape, p):
        return self.weights @ shape.jacobian(self.grid, p)


def _blur_for(model, lags):
    if model.response_fwhm_ps == 0 and model.bin_width_ps == 0:
        return None
    return _Blur(lags, model.response_fwhm_ps, model.bin_width_ps)


def eval_model(model, lags_ps, _blur=None):
    """Model curve at ``lags_ps`` including response and bin blurring."""
    lags = np.asarray(lags_ps, dtype=float)
    blur = _blur if _blur is not None else _blur_for(model, lags)
    if blur is None:
        return model.shape.value(lags, model.vector)
    return blur.value(model.shape, model.vector)


def model_jacobian(model, lags_ps, _blur=None):
    """Analytic Jacobian, one column per parameter in declaration order."""
    lags = np.asarray(lags_ps, dtype=float)
    blur = _blur if _blur is not None else _blur_for(model, lags)
    if blur is None:
        return model.shape.jacobian(lags, model.vector)
    return blur.jacobian(model.shape, model.vector)


@dataclass
class FitData:
    lags: np.ndarray
    values: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if not (self.lags.shape == self.values.shape == self.sigma.shape):
            raise ContractError("lags, values and sigma must have the same shape")
        if np.any(self.sigma <= 0):
            raise ContractError("sigma must be positive")

    @classmethod
    def from_histogram(cls, hist):
        """Normalized values with Poisson errors ``sqrt(max(count, 1))/scale``."""
        scale = hist._scale()
        ok = scale > 0
        values = np.zeros(hist.counts.size)
        values[ok] = hist.counts[ok] / scale[ok]
        sigma = np.sqrt(np.maximum(hist.counts[ok], 1)) / scale[ok]
        return cls(hist.lags[ok], values[ok], sigma)


def as_fit_data(data, weights=None):
    if isinstance(data, FitData):
        fd = data
    elif hasattr(data, "counts") and hasattr(data, "lags"):
        fd = FitData.from_histogram(data)
    else:
        x, y, s = data
        fd = FitData(x, y, s)
    if weights is not None:
        fd = FitData(fd.lags, fd.values, 1.0 / np.sqrt(np.asarray(weights, dtype=float)))
    return fd


@dataclass
class FitResult:
    model: FitModel
    params: dict
    errors: dict
    covariance: np.ndarray
    free: tuple
    chi2: float
    dof: int
    status: str
    iterations: int
    data: FitData | None = None
    extras: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def reduced_chi2(self):
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    def to_text(self):
        lines = [f"variant = {self.model.variant}", f"status = {self.status}", f"iterations = {self.iterations}"]
        lines.append(f"reduced_chi2 = {self.reduced_chi2:.6g}")
        lines.append(f"response_fwhm_ps = {self.model.response_fwhm_ps:g}")
        for name, value in self.params.items():
            lines.append(f"{name} = {value:.10g}")
            lines.append(f"{name}_err = {self.errors[name]:.10g}")
        for key, value in self.extras.items():
            lines.append(f"{key} = {value:.10g}" if isinstance(value, float) else f"{key} = {value}")
        for w in self.warnings:
            lines.append(f"warning = {w}")
        return "\n".join(lines) + "\n"


def _levenberg_marquardt(resid, jac, p0, lower, upper, max_iter=MAX_ITER, rtol=RTOL):
    p = np.clip(p0, lower, upper)
    r = resid(p)
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        J = jac(p)
        g = J.T @ r
        A = J.T @ J
        diag = np.maximum(np.diag(A), 1e-300)
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = np.clip(p + step, lower, upper)
            r_new = resid(trial)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            status = "converged"
            break
        drop = cost - cost_new
        p, r = trial, r_new
        cost = cost_new
        lam = max(lam / 3.0, 1e-12)
        if drop <= rtol * max(cost, 1e-300):
            status = "converged"
            break
    return p, cost, status, it


def fit(model, data, weights=None, max_iter=MAX_ITER):
    """Weighted least-squares fit starting from ``model``'s parameter values.

    ``data`` is a Histogram, a :class:`FitData` or an ``(x, y, sigma)``
    triple. Uncertainties come from the inverse of ``J^T J`` with the given
    absolute errors.
    """
    fd = as_fit_data(data, weights)
    shape = model.shape
    free = tuple(n for n in shape.names if n not in model.fixed)
    idx = np.array([shape.names.index(n) for n in free], dtype=int)
    if fd.lags.size < len(free) + 2:
        raise FitError("not enough data points for the number of free parameters")
    blur = _blur_for(model, fd.lags)
    base = model.vector
    lower = np.array(shape.lower)[idx]
    upper = np.array(shape.upper)[idx]

    def full(q):
        p = base.copy()
        p[idx] = q
        return p

    def curve(p):
        return shape.value(fd.lags, p) if blur is None else blur.value(shape, p)

    def resid(q):
        return (curve(full(q)) - fd.values) / fd.sigma

    def jac(q):
        p = full(q)
        J = shape.jacobian(fd.lags, p) if blur is None else blur.jacobian(shape, p)
        return J[:, idx] / fd.sigma[:, None]

    q, cost, status, n_iter = _levenberg_marquardt(resid, jac, base[idx], lower, upper, max_iter=max_iter)
    J = jac(q)
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0 or s[-1] <= s[0] * 1e-12:
        raise RankDeficiencyError(f"Jacobian is rank deficient at the solution ({model.variant})")
    cov = np.linalg.inv(J.T @ J)
    best = model.with_vector(full(q))
    errors = {n: 0.0 for n in shape.names}
    for k, n in enumerate(free):
        errors[n] = float(math.sqrt(max(cov[k, k], 0.0)))
    return FitResult(
        model=best,
        params=dict(best.params),
        errors=errors,
        covariance=cov,
        free=free,
        chi2=2.0 * cost,
        dof=fd.lags.size - len(free),
        status=status,
        iterations=n_iter,
        data=fd,
    )


def initial_guess(variant, lags, values):
    """Starting parameters from the data: plateau, extremum and half-width."""
    lags = np.asarray(lags, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(np.abs(lags))
    outer = np.abs(lags) >= 0.5 * np.abs(lags).max()
    plateau = float(np.median(values[outer])) if outer.any() else 1.0
    center_val = float(values[order[0]])

    def half_width(target_sign):
        dev = target_sign * (values - plateau)
        peak = dev.max()
        if peak <= 0:
            return float(np.ptp(lags) / 10 or 1.0)
        above = lags[dev >= 0.5 * peak]
        return float(max(np.ptp(above), np.min(np.diff(np.unique(lags))) if lags.size > 1 else 1.0))

    if variant == "eq2_antibunch":
        return {"g0": center_val / plateau if plateau else center_val, "tau_qd_ps": max(half_width(-1.0) / (2 * math.log(2)), 1.0)}
    if variant == "eq4_visibility":
        return {"v0": float(np.clip(center_val, 0.01, 0.99)), "tau_ps": max(half_width(1.0) / math.log(2), 1.0)}
    if variant == "eq3_threefold":
        v = values / plateau if plateau else values
        step = float(np.min(np.diff(np.unique(lags)))) if lags.size > 1 else 1.0
        k = int(np.argmax(v))
        peak = max(float(v[k]), 1.0 + 1e-3)
        t_peak = abs(float(lags[k]))
        # a dip shows up as a maximum away from zero lag
        iid = float(np.clip(1.0 - v[order[0]] / peak, 0.05, 0.95)) if t_peak > 2 * step else 0.1
        wide = np.abs(lags[v - 1.0 >= 0.5 * (peak - 1.0)])
        t_half = float(wide.max()) if wide.size else step
        return {"bunch_amp": peak, "tau_hs_ps": max(2.0 * t_half / math.log(2), step), "iid": iid, "tau_int_ps": max(t_peak, step)}
    if variant in ("gaussian_peak", "lorentzian_peak"):
        k = int(np.argmax(np.abs(values - plateau)))
        amp = float(values[k] - plateau)
        return {"center": float(lags[k]), "fwhm": half_width(math.copysign(1.0, amp) if amp else 1.0), "amp": amp, "offset": plateau}
    raise ParameterError(f"unknown model variant {variant!r}")


@dataclass
class VisibilityCurve:
    lags: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    mask: np.ndarray

    def fit_data(self):
        m = self.mask & (self.errors > 0)
        return FitData(self.lags[m], self.values[m], self.errors[m])

    def value_at(self, lag_ps=0):
        k = int(np.argmin(np.abs(self.lags - lag_ps)))
        return float(self.values[k]), float(self.errors[k])


def raw_visibility(c_dis, c_indis):
    """``(C_dis - C_indis) / C_dis`` for scalar amplitudes."""
    if c_dis <= 0:
        raise ParameterError("C_dis must be positive")
    return (c_dis - c_indis) / c_dis


def extract_visibility(c_dis, c_indis):
    """Bin-wise ``V = (C_dis - C_indis)/C_dis`` from two normalized histograms.

    Errors propagate independent Poisson errors of both histograms (counts
    floored at one). Bins where ``C_dis`` is not positive are masked.
    """
    if (c_dis.bin_width_ps, c_dis.lag_range_ps) != (c_indis.bin_width_ps, c_indis.lag_range_ps):
        raise ContractError("histograms have different binning")
    sd, si = c_dis._scale(), c_indis._scale()
    ok = (sd > 0) & (si > 0) & (c_dis.counts > 0)
    d = np.zeros(sd.size)
    i = np.zeros(sd.size)
    ed = np.zeros(sd.size)
    ei = np.zeros(sd.size)
    d[ok] = c_dis.counts[ok] / sd[ok]
    i[ok] = c_indis.counts[ok] / si[ok]
    ed[ok] = np.sqrt(c_dis.counts[ok]) / sd[ok]
    ei[ok] = np.sqrt(np.maximum(c_indis.counts[ok], 1)) / si[ok]
    v = np.zeros(sd.size)
    err = np.zeros(sd.size)
    v[ok] = 1.0 - i[ok] / d[ok]
    err[ok] = np.sqrt((ei[ok] / d[ok]) ** 2 + (i[ok] * ed[ok] / d[ok] ** 2) ** 2)
    return VisibilityCurve(c_dis.lags.astype(float), v, err, ok)


@dataclass(frozen=True)
class DeconvolvedVisibility:
    v0_raw: float
    v0_raw_err: float
    v0: float
    v0_err: float
    tau_ps: float
    correction_factor: float
    flags: tuple
    fit: FitResult


def deconvolve_visibility(fit_result, response_fwhm_ps, bin_width_ps=None):
    """Refit an exponential visibility dip with the response folded in.

    Returns the response-free ``v0`` next to the raw one; flagged
    ``ill_posed`` when the response exceeds five dip widths.
    """
    if fit_result.model.variant != "eq4_visibility":
        raise ParameterError("deconvolution needs an eq4_visibility fit")
    if fit_result.data is None:
        raise ParameterError("fit result carries no data to refit")
    raw = fit_result.params
    if response_fwhm_ps <= 0:
        return DeconvolvedVisibility(
            raw["v0"], fit_result.errors["v0"], raw["v0"], fit_result.errors["v0"], raw["tau_ps"], 1.0, (), fit_result
        )
    bw = fit_result.model.bin_width_ps if bin_width_ps is None else bin_width_ps
    start_v0 = min(max(raw["v0"], 0.05), 0.95)
    start = replace(fit_result.model, response_fwhm_ps=response_fwhm_ps, bin_width_ps=bw)
    start = start.with_vector([start_v0, raw["tau_ps"]])
    refit = fit(start, fit_result.data)
    flags = []
    if response_fwhm_ps > 5.0 * refit.params["tau_ps"]:
        flags.append("ill_posed")
    if not refit.converged:
        flags.append("not_converged")
    factor = refit.params["v0"] / raw["v0"] if raw["v0"] > 0 else float("inf")
    refit.extras["correction_factor"] = factor
    return DeconvolvedVisibility(
        raw["v0"], fit_result.errors["v0"], refit.params["v0"], refit.errors["v0"], refit.params["tau_ps"], factor, tuple(flags), refit
    )
