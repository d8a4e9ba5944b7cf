import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb, erfcx

from hybridhom.analytics import (
    EfficiencyConfig,
    QdState,
    TmsvState,
    apply_loss,
    check_monotonicity,
    dip_attenuation,
    nbar_for_ratio,
    qd_moments,
    ratio_for_nbar,
    threefold_coincidence,
    tmsv_closed_form,
    tmsv_moments,
    visibility_at_ratio,
    visibility_surface,
    visibility_vs_ratio,
)
from hybridhom.errors import ParameterError, UndefinedRatioError


def lossy_fock_moments(nbar, es, ei, cutoff=400):
    """Explicit sum over the joint detected-photon distribution after loss."""
    p = nbar ** np.arange(cutoff) / (1 + nbar) ** (np.arange(cutoff) + 1)
    out = dict(n_i=0.0, n_s=0.0, ns_ni=0.0, ns_ns1=0.0, ni_ns_ns1=0.0)
    for n in range(cutoff):
        if p[n] < 1e-300:
            break
        k = np.arange(n + 1)
        bs = comb(n, k) * es**k * (1 - es) ** (n - k)
        bi = comb(n, k) * ei**k * (1 - ei) ** (n - k)
        ms, mi = np.sum(bs * k), np.sum(bi * k)
        fs2 = np.sum(bs * k * (k - 1))
        out["n_i"] += p[n] * mi
        out["n_s"] += p[n] * ms
        out["ns_ni"] += p[n] * ms * mi
        out["ns_ns1"] += p[n] * fs2
        out["ni_ns_ns1"] += p[n] * mi * fs2
    return out


@pytest.mark.parametrize("nbar", [1e-3, 0.05, 0.3, 1.0])
def test_closed_form_matches_fock_sum(nbar):
    m = tmsv_moments(nbar, truncation=400)
    assert m.precision_ok
    assert m.max_relative_difference() <= 1e-9


def test_truncation_flag():
    assert not tmsv_moments(1.0, truncation=15).precision_ok


@pytest.mark.parametrize("nbar, es, ei", [(0.01, 0.37, 0.57), (0.2, 0.22, 0.4), (0.8, 1.0, 0.1)])
def test_loss_matches_binomial_fock_sum(nbar, es, ei):
    got = apply_loss(tmsv_closed_form(nbar), EfficiencyConfig(es, ei)).as_dict()
    ref = lossy_fock_moments(nbar, es, ei)
    for key, value in ref.items():
        assert got[key] == pytest.approx(value, rel=1e-9)


def test_qd_moments():
    m = qd_moments(QdState(0.1, 0.02))
    assert m.n_qd == 0.1 and m.nqd_nqd1 == pytest.approx(2e-4)


def reference_v0(nbar, mu, g2, es, ei, iid):
    m = lossy_fock_moments(nbar, es, ei)
    qd_pair = m["n_i"] * g2 * mu * mu
    cross = 2 * mu * m["ns_ni"]
    dis = qd_pair + m["ni_ns_ns1"] + cross
    return iid * cross / dis


@pytest.mark.parametrize("nbar, mu", [(0.001, 0.01), (0.01, 0.05), (0.1, 0.2)])
@pytest.mark.parametrize("iid", [0.0, 0.5, 0.92, 1.0])
def test_threefold_visibility(nbar, mu, iid):
    eff = EfficiencyConfig(0.37, 0.57)
    res = threefold_coincidence(QdState(mu, 0.01), TmsvState(nbar), eff, iid)
    assert res.v0 == pytest.approx(reference_v0(nbar, mu, 0.01, 0.37, 0.57, iid), rel=1e-9, abs=1e-15)
    assert res.c_indis <= res.c_dis


def test_threefold_undefined_without_light():
    with pytest.raises(UndefinedRatioError):
        threefold_coincidence(QdState(0.0, 0.0), TmsvState(0.0), EfficiencyConfig(), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 10.0), st.floats(1e-3, 1.0), st.floats(0.05, 1.0))
def test_ratio_round_trip(r, mu, es):
    qd = QdState(mu)
    eff = EfficiencyConfig(es, 0.5)
    assert ratio_for_nbar(nbar_for_ratio(r, qd, eff), qd, eff) == pytest.approx(r, rel=1e-12)


def test_ratio_undefined():
    with pytest.raises(UndefinedRatioError):
        nbar_for_ratio(1.0, QdState(0.1), EfficiencyConfig(0.0, 0.5))
    with pytest.raises(UndefinedRatioError):
        ratio_for_nbar(0.1, QdState(0.0), EfficiencyConfig())


@pytest.mark.parametrize("r, expected", [(0.25, 0.6145), (0.5, 0.4628), (1.0, 0.3115), (2.0, 0.1905), (4.0, 0.1093)])
def test_visibility_versus_ratio_values(r, expected):
    assert visibility_at_ratio(r, QdState(0.019, 0.01), EfficiencyConfig(), 0.92) == pytest.approx(expected, abs=5e-4)


def test_visibility_decreases_with_ratio():
    curve = visibility_vs_ratio([0.1, 0.5, 1, 2, 5], QdState(0.0128), EfficiencyConfig(), 0.92, 124.0, 500.0)
    assert np.all(np.diff(curve.ideal) < 0)
    np.testing.assert_allclose(curve.corrected, curve.ideal * curve.attenuation)


@pytest.mark.parametrize("tau, fwhm", [(500.0, 124.0), (129.0, 124.0), (50.0, 300.0), (1000.0, 10.0)])
def test_dip_attenuation_closed_form(tau, fwhm):
    sigma = fwhm / (2 * math.sqrt(2 * math.log(2)))
    x = 2 * sigma / tau
    expected = erfcx(x / math.sqrt(2))
    assert dip_attenuation(tau, fwhm) == pytest.approx(expected, rel=1e-5)


def test_dip_attenuation_without_response():
    assert dip_attenuation(100.0, 0.0) == 1.0


def test_surface_monotonic_and_bounded():
    s = visibility_surface(iid=0.92)
    assert s.shape == (21, 20)
    rep = check_monotonicity(s)
    assert rep.passed and rep.max_violation <= 0
    assert np.all((s >= 0) & (s <= 0.92))


def test_surface_vanishes_without_indistinguishability():
    assert np.max(np.abs(visibility_surface(iid=0.0))) == 0.0


def test_surface_post_loss_axis():
    eff = EfficiencyConfig()
    a = visibility_surface([0.01], [0.1], eff, post_loss=True)
    b = visibility_surface([0.01 / eff.eta_s], [0.1], eff)
    assert a[0, 0] == pytest.approx(b[0, 0], rel=1e-12)


def test_monotonicity_detects_violation():
    rep = check_monotonicity(np.array([[0.1, 0.2], [0.3, 0.1]]))
    assert not rep.passed
    assert rep.max_violation == pytest.approx(0.2)


@pytest.mark.parametrize("call", [
    lambda: EfficiencyConfig(1.2, 0.5),
    lambda: QdState(1.5),
    lambda: TmsvState(-1.0),
    lambda: tmsv_moments(-0.1),
    lambda: visibility_surface([0.0], [0.1]),
    lambda: threefold_coincidence(QdState(0.1), TmsvState(0.1), EfficiencyConfig(), 1.5),
])
def test_validation(call):
    with pytest.raises(ParameterError):
        call()
