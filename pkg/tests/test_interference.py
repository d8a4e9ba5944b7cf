import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridhom._kernels import greedy_pairs
from hybridhom.errors import ParameterError, RangeError
from hybridhom.interference import BeamsplitterConfig, Polarization, delay_line, hom_mix, split
from hybridhom.tags import MAX_TIME_PS, TagStream


def _aligned_inputs(n, spacing=10**6, offset=0):
    t = np.arange(n, dtype=np.int64) * spacing
    return TagStream(t, 0), TagStream(t + offset, 1)


def _split_pairs(out1, out2, spacing=10**6):
    """Number of input pairs that left through different ports."""
    slots1 = set((out1.times + spacing // 2) // spacing)
    slots2 = set((out2.times + spacing // 2) // spacing)
    return len(slots1 & slots2)


def test_photon_number_conserved():
    a, b = _aligned_inputs(1000, offset=37)
    o1, o2 = hom_mix(a, b, BeamsplitterConfig(0.8), 3)
    assert len(o1) + len(o2) == 2000
    merged = np.sort(np.concatenate([o1.times, o2.times]))
    np.testing.assert_array_equal(merged, np.sort(np.concatenate([a.times, b.times])))


def test_perfect_overlap_always_bunches():
    a, b = _aligned_inputs(5000)
    o1, o2 = hom_mix(a, b, BeamsplitterConfig(1.0), 1)
    assert _split_pairs(o1, o2) == 0


@pytest.mark.parametrize("iid", [0.0, 0.3, 0.92])
def test_split_probability_binomial(iid):
    n = 20000
    a, b = _aligned_inputs(n)
    o1, o2 = hom_mix(a, b, BeamsplitterConfig(iid), 2)
    p = 0.5 * (1 - iid)
    k = _split_pairs(o1, o2)
    assert abs(k - n * p) <= 5 * math.sqrt(n * p * (1 - p)) + 1


def test_orthogonal_polarization_removes_interference():
    cfg = BeamsplitterConfig(1.0, polarization="orthogonal")
    assert cfg.effective_iid == 0.0
    assert cfg.polarization is Polarization.ORTHOGONAL
    n = 20000
    a, b = _aligned_inputs(n)
    k = _split_pairs(*hom_mix(a, b, cfg, 4))
    assert abs(k - n / 2) <= 5 * math.sqrt(n / 4)


def test_overlap_kernel_decays_with_delay():
    cfg = BeamsplitterConfig(0.9, kernel_tau_ps=100.0)
    assert cfg.overlap(0) == pytest.approx(0.9)
    assert cfg.overlap(50) == pytest.approx(0.9 * math.exp(-1.0))
    assert cfg.overlap(-50) == cfg.overlap(50)


def test_delayed_pair_interferes_less():
    n = 20000
    cfg = BeamsplitterConfig(1.0, kernel_tau_ps=100.0)
    a, b = _aligned_inputs(n, offset=100)
    k = _split_pairs(*hom_mix(a, b, cfg, 5))
    p = 0.5 * (1 - math.exp(-2.0))
    assert abs(k - n * p) <= 5 * math.sqrt(n * p * (1 - p))


def test_pairs_beyond_window_do_not_interfere():
    n = 10000
    cfg = BeamsplitterConfig(1.0, kernel_tau_ps=10.0, pairing_window_ps=20.0)
    a, b = _aligned_inputs(n, offset=30)
    k = _split_pairs(*hom_mix(a, b, cfg, 6))
    assert abs(k - n / 2) <= 5 * math.sqrt(n / 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_common_random_numbers_make_splits_monotone(seed, i1, i2):
    lo, hi = sorted((i1, i2))
    a, b = _aligned_inputs(500, offset=20)
    k_lo = _split_pairs(*hom_mix(a, b, BeamsplitterConfig(lo), seed))
    k_hi = _split_pairs(*hom_mix(a, b, BeamsplitterConfig(hi), seed))
    assert k_hi <= k_lo


def test_greedy_pairs_prefers_globally_closest():
    a = np.array([0, 10], dtype=np.int64)
    b = np.array([9], dtype=np.int64)
    # b is 9 from a[0] but 1 from a[1]
    assert greedy_pairs(a, b, 100).tolist() == [-1, 0]


def test_greedy_pairs_respects_window():
    a = np.array([0, 1000], dtype=np.int64)
    b = np.array([50, 1020], dtype=np.int64)
    assert greedy_pairs(a, b, 30).tolist() == [-1, 1]


def test_greedy_pairs_one_to_one():
    rng = np.random.default_rng(0)
    a = np.sort(rng.integers(0, 10**5, 2000))
    b = np.sort(rng.integers(0, 10**5, 2000))
    partner = greedy_pairs(a, b, 200)
    used = partner[partner >= 0]
    assert used.size == np.unique(used).size
    assert np.all(np.abs(b[used] - a[partner >= 0]) <= 200)


def test_delay_line():
    s = TagStream(np.array([1, 2]), 0)
    assert delay_line(s, 19600).times.tolist() == [19601, 19602]
    with pytest.raises(ParameterError):
        delay_line(s, -1)
    with pytest.raises(RangeError):
        delay_line(TagStream(np.array([MAX_TIME_PS - 5]), 0), 10)


def test_split_is_even_and_complete():
    s = TagStream(np.arange(40000, dtype=np.int64))
    o1, o2 = split(s, 9)
    assert len(o1) + len(o2) == 40000
    assert abs(len(o1) - 20000) < 5 * 100
    assert (o1.channel, o2.channel) == (0, 1)


def test_config_validation():
    with pytest.raises(ParameterError):
        BeamsplitterConfig(1.5)
    with pytest.raises(ParameterError):
        BeamsplitterConfig(0.5, kernel_tau_ps=0.0)
    assert BeamsplitterConfig(0.5, kernel_tau_ps=100.0).pairing_window_ps == 500.0
