import math

import numpy as np
import pytest

from hybridhom.config import jitter_for_response
from hybridhom.detection import (
    RESPONSE_OVERRIDES,
    TCSPC_JITTER_FWHM_PS,
    DetectorParams,
    combine_response,
    detect,
)
from hybridhom.errors import ParameterError
from hybridhom.sources import FWHM_TO_SIGMA
from hybridhom.tags import TagStream

T = 10**12


def _photons(n, spacing=10**6):
    return TagStream(np.arange(1, n + 1, dtype=np.int64) * spacing, 0)


@pytest.mark.parametrize("eff", [0.1, 0.5, 0.9])
def test_efficiency_thins_binomially(eff):
    n = 50000
    out = detect(_photons(n), DetectorParams(eff, jitter_fwhm_ps=0), 0.0, T, 1)
    assert abs(len(out) - n * eff) <= 5 * math.sqrt(n * eff * (1 - eff))


def test_jitter_is_quadrature_of_detector_and_tcspc():
    n = 100000
    src = _photons(n)
    out = detect(src, DetectorParams(1.0, jitter_fwhm_ps=70.0), 50.0, T, 2)
    shift = (out.times - src.times).astype(float)
    expected = math.hypot(70.0, 50.0) * FWHM_TO_SIGMA
    assert shift.std() == pytest.approx(expected, rel=0.02)
    assert abs(shift.mean()) < 5 * expected / math.sqrt(n)


def test_dark_counts_are_poisson_in_window():
    rate = 2e5
    out = detect(TagStream.empty(), DetectorParams(1.0, dark_rate_hz=rate), 50.0, T, 3)
    mean = rate * 1.0
    assert abs(len(out) - mean) <= 5 * math.sqrt(mean)
    assert out.times.min() >= 0 and out.times.max() < T


def test_dead_time_enforced():
    rng = np.random.default_rng(0)
    src = TagStream(np.sort(rng.integers(0, 10**9, 200000)), 0)
    out = detect(src, DetectorParams(1.0, jitter_fwhm_ps=0.0, dead_time_ps=20000), 0.0, 10**9, 4)
    assert np.all(np.diff(out.times) >= 20000)
    assert len(out) < len(src)


def test_tags_outside_run_dropped():
    src = TagStream(np.array([0, 1, 999, 1000], dtype=np.int64))
    out = detect(src, DetectorParams(1.0, jitter_fwhm_ps=0.0), 0.0, 1000, 5)
    assert out.times.tolist() == [0, 1, 999]


def test_channel_relabel():
    out = detect(_photons(10), DetectorParams(jitter_fwhm_ps=0.0), 0.0, T, 6, channel=7)
    assert out.channel == 7


def test_combine_response_quadrature():
    r = combine_response([70.0, 70.0, 50.0])
    assert r.fwhm_ps == pytest.approx(math.sqrt(70**2 * 2 + 50**2))
    assert r.fwhm_ps == pytest.approx(110.9, abs=0.05)


@pytest.mark.parametrize("name", sorted(RESPONSE_OVERRIDES))
def test_named_override_keeps_computed(name):
    r = combine_response([70.0, 70.0, 50.0], override=name)
    assert r.fwhm_ps == RESPONSE_OVERRIDES[name]
    assert r.computed_fwhm_ps == pytest.approx(110.9, abs=0.05)
    assert r.name == name


@pytest.mark.parametrize("response", [104.0, 124.0])
def test_derived_jitter_reproduces_response(response):
    j = jitter_for_response(response)
    per_channel = math.hypot(j, TCSPC_JITTER_FWHM_PS)
    assert math.hypot(per_channel, per_channel) == pytest.approx(response)


def test_validation():
    with pytest.raises(ParameterError):
        DetectorParams(efficiency=1.2)
    with pytest.raises(ParameterError):
        combine_response([-1.0])
    with pytest.raises(ParameterError):
        combine_response([1.0], override="nope")
    with pytest.raises(ParameterError):
        detect(_photons(1), DetectorParams(), -1.0, T, 0)
