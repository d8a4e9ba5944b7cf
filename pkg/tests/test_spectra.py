import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hybridhom.errors import ParameterError
from hybridhom.spectra import (
    DEFAULT_DETUNING_GHZ,
    QD_FWHM_GHZ,
    Spectrum,
    calibrate_signal_profile,
    detune,
    fp_scan,
    gaussian,
    lorentzian,
    overlap_of_profiles,
    spectral_overlap,
)

GRID = np.linspace(-400, 400, 400001)


def lorentz_overlap(g1, g2, delta):
    g = g1 + g2
    return 2 * math.sqrt(g1 * g2) / g / (1 + (2 * delta / g) ** 2)


def test_identical_spectra_overlap_is_one():
    s = lorentzian(0.3, 2.17, GRID)
    assert spectral_overlap(s, s) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("g1, g2, delta", [(2.17, 2.17, 0.0), (2.17, 2.17, 2.17), (1.0, 3.0, 0.5), (2.17, 2.17, 10.7)])
def test_lorentzian_overlap_closed_form(g1, g2, delta):
    got = spectral_overlap(lorentzian(0.0, g1, GRID), lorentzian(delta, g2, GRID))
    assert got == pytest.approx(lorentz_overlap(g1, g2, delta), abs=2e-3)


def test_overlap_matches_adaptive_quadrature():
    f1 = lambda x: 1.0 / (1 + (x / 1.1) ** 2)  # noqa: E731
    f2 = lambda x: math.exp(-0.5 * ((x - 0.7) / 0.9) ** 2)  # noqa: E731
    cross = quad(lambda x: f1(x) * f2(x), -np.inf, np.inf)[0]
    n1 = quad(lambda x: f1(x) ** 2, -np.inf, np.inf)[0]
    n2 = quad(lambda x: f2(x) ** 2, -np.inf, np.inf)[0]
    expected = cross / math.sqrt(n1 * n2)
    got = overlap_of_profiles(np.vectorize(f1), np.vectorize(f2), -2000, 2000, tol=1e-8)
    assert got == pytest.approx(expected, abs=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 5.0), st.floats(0.5, 5.0), st.floats(-10.0, 10.0))
def test_overlap_bounded_and_symmetric(w1, w2, d):
    grid = np.linspace(-100, 100, 20001)
    a = gaussian(0.0, w1, grid)
    b = gaussian(d, w2, grid)
    v = spectral_overlap(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(spectral_overlap(b, a), abs=1e-12)


def test_detune_is_rigid_shift():
    s = lorentzian(0.0, 2.0, GRID)
    t = detune(s, 3.0)
    np.testing.assert_array_equal(t.density, s.density)
    assert spectral_overlap(t, lorentzian(3.0, 2.0, GRID)) == pytest.approx(1.0, abs=1e-6)


def test_calibrated_profile_reaches_target():
    params = calibrate_signal_profile()
    qd = lambda x: lorentzian(0.0, QD_FWHM_GHZ, x).density  # noqa: E731
    v = overlap_of_profiles(params.density, qd, -200, 200, tol=1e-9)
    assert v == pytest.approx(0.92, abs=1e-4)


def test_calibrated_profile_loses_overlap_when_detuned():
    params = calibrate_signal_profile()
    qd0 = lambda x: lorentzian(0.0, QD_FWHM_GHZ, x).density  # noqa: E731
    qdd = lambda x: lorentzian(DEFAULT_DETUNING_GHZ, QD_FWHM_GHZ, x).density  # noqa: E731
    a0 = overlap_of_profiles(params.density, qd0, -300, 300)
    ad = overlap_of_profiles(params.density, qdd, -300, 300)
    assert ad < 0.1 * a0


def test_fp_scan_of_narrow_line_shows_window():
    grid = np.linspace(-50, 50, 200001)
    step = grid[1] - grid[0]
    line = np.zeros(grid.size)
    line[grid.size // 2] = 1.0 / step
    res = fp_scan(Spectrum(grid, line), fsr_ghz=100.0, finesse=1600.0)
    out = res.spectrum.density
    above = grid[out >= 0.5 * out.max()]
    assert above[-1] - above[0] == pytest.approx(0.0625, abs=2 * step)
    assert res.window_ghz == pytest.approx(0.0625)
    assert not res.aliasing


def test_fp_scan_preserves_broad_input_and_area():
    grid = np.linspace(-40, 40, 16001)
    s = gaussian(0.0, 5 * 2.3548, grid)
    res = fp_scan(s, fsr_ghz=100.0, finesse=1600.0)
    assert res.spectrum.area() == pytest.approx(s.area(), rel=1e-9)
    peak = s.density.max()
    assert np.max(np.abs(res.spectrum.density - s.density)) < 0.01 * peak


def test_fp_scan_window_override_and_aliasing_flag():
    grid = np.linspace(-30, 30, 6001)
    res = fp_scan(lorentzian(0.0, 2.0, grid), fsr_ghz=10.0, finesse=160.0, window_ghz=0.5)
    assert res.window_ghz == 0.5
    assert res.computed_window_ghz == pytest.approx(10.0 / 160.0)
    assert res.aliasing


def test_fp_scan_rejects_nonuniform_grid():
    s = Spectrum(np.array([0.0, 1.0, 3.0]), np.ones(3))
    with pytest.raises(ParameterError):
        fp_scan(s)


def test_csv_round_trip(tmp_path):
    s = lorentzian(0.5, 2.0, np.linspace(-10, 10, 101))
    path = tmp_path / "s.csv"
    s.to_csv(path)
    assert path.read_text().splitlines()[0] == "offset_ghz,density"
    back = Spectrum.from_csv(path)
    np.testing.assert_allclose(back.density, s.density, rtol=1e-15)


@pytest.mark.parametrize(
    "grid, density",
    [([0.0], [1.0]), ([0.0, 1.0], [1.0]), ([1.0, 0.0], [1.0, 1.0]), ([0.0, 1.0], [-1.0, 1.0])],
)
def test_spectrum_validation(grid, density):
    with pytest.raises(ParameterError):
        Spectrum(np.array(grid), np.array(density))


def test_zero_spectrum_overlap_rejected():
    z = Spectrum(np.array([0.0, 1.0]), np.zeros(2))
    with pytest.raises(ParameterError):
        spectral_overlap(z, z)
