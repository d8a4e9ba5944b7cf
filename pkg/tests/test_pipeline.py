import math

import numpy as np
import pytest

from hybridhom.config import preset_config
from hybridhom.errors import ConfigError
from hybridhom.pipeline import (
    Rig,
    _chunk_seeds,
    _chunks,
    effective_iid,
    run_fig3a,
    run_fig3c,
    run_fig4d,
    run_hybrid,
    run_preset,
    simulate_chunks,
)


def short(name, duration, **overrides):
    cfg = preset_config(name)
    cfg.run.duration_s = duration
    return cfg.updated(overrides) if overrides else cfg


def test_rig_rates():
    cfg = preset_config("fig3a")
    rig = Rig.from_config(cfg)
    assert rig.pair_rate_hz * rig.signal_eff == pytest.approx(cfg.sfwm.signal_rate_hz)
    assert rig.signal_eff == pytest.approx(0.37 * 0.596)
    assert rig.response_fwhm_ps == 104.0
    assert Rig.from_config(preset_config("fig4b")).response_fwhm_ps == 124.0
    assert rig.qd.emission_rate_hz * rig.qd_eff == pytest.approx(cfg.qd.detected_rate_hz)


def test_unknown_response_rejected():
    cfg = preset_config("fig3a")
    cfg.detection.response = "nope"
    with pytest.raises(ConfigError):
        Rig.from_config(cfg)


def test_effective_iid():
    cfg = preset_config("fig4b")
    assert effective_iid(cfg) == cfg.interference.iid
    detuned = effective_iid(preset_config("fig4a"))
    assert detuned == pytest.approx(0.0329, abs=5e-4)


@pytest.mark.parametrize("duration, chunk, expected", [(1.0, 0.5, [5e11, 5e11]), (1.2, 0.5, [5e11, 5e11, 2e11]), (0.0, 0.5, [])])
def test_chunks_partition_run(duration, chunk, expected):
    cfg = preset_config("fig3a")
    cfg.run.duration_s, cfg.run.chunk_s = duration, chunk
    assert _chunks(cfg) == [int(x) for x in expected]


def test_chunk_seeds_distinct_per_branch():
    a = [s.generate_state(1)[0] for s in _chunk_seeds(1, 3, 0)]
    b = [s.generate_state(1)[0] for s in _chunk_seeds(1, 3, 1)]
    assert len(set(a + b)) == 6


def test_simulation_deterministic_and_chunk_offsets():
    cfg = short("fig3a", 0.3)
    cfg.run.chunk_s = 0.1
    a = list(simulate_chunks(cfg, "sfwm_hbt"))
    b = list(simulate_chunks(cfg, "sfwm_hbt"))
    assert [x[0] for x in a] == [0, 10**11, 2 * 10**11]
    for (_, _, sa), (_, _, sb) in zip(a, b):
        for ch in ("ch1", "ch2", "sync"):
            np.testing.assert_array_equal(sa[ch].times, sb[ch].times)


def test_sfwm_detected_rate():
    cfg = short("fig3a", 0.5)
    n = sum(len(st["ch1"]) + len(st["ch2"]) for _, _, st in simulate_chunks(cfg, "sfwm_hbt"))
    expected = cfg.sfwm.signal_rate_hz * 0.5
    assert abs(n - expected) < 5 * math.sqrt(expected) + 0.01 * expected


def test_qd_detected_rate():
    cfg = short("fig3c", 1.0)
    n = sum(len(st["ch1"]) + len(st["ch2"]) for _, _, st in simulate_chunks(cfg, "qd_hbt"))
    assert n == pytest.approx(0.44e6, rel=0.02)


def test_fig3a_short_run():
    res = run_fig3a(short("fig3a", 0.5))
    h = res.headline
    assert h["heralded_g2_0"] < 0.1
    assert h["heralding_eff_80ps"] < h["heralding_eff_320ps"] <= h["heralding_eff_2000ps"]
    assert h["biphoton_fwhm_ps"] == pytest.approx(128.0, rel=0.15)
    assert set(res.artifacts()) >= {"heralded_g2.csv", "cross_correlation.csv", "cross_correlation_fit.txt"}


def test_fig3c_short_run():
    res = run_fig3c(short("fig3c", 10.0))
    assert res.headline["g2_0"] < 0.1
    assert res.headline["tau_qd_ps"] == pytest.approx(987.0, rel=0.1)


def test_hybrid_short_run_reports_all_keys():
    cfg = short("fig4b", 5.0, sfwm={"signal_rate_hz": 1.76e6})
    res = run_hybrid(cfg)
    for key in ("c_dis_0", "c_indis_0", "v0_raw", "v0_deconvolved", "iid_effective", "ratio_s_qd"):
        assert key in res.headline
    assert res.headline["ratio_s_qd"] == pytest.approx(4.0)
    assert {"threefold_orthogonal", "threefold_parallel"} <= set(res.histograms)


def test_hybrid_run_is_reproducible():
    cfg = short("fig4b", 1.0, sfwm={"signal_rate_hz": 1.76e6})
    a = run_hybrid(cfg).histograms["threefold_parallel"].counts
    b = run_hybrid(cfg).histograms["threefold_parallel"].counts
    np.testing.assert_array_equal(a, b)


def test_fig4d_surface():
    res = run_fig4d(preset_config("fig4d"))
    assert res.headline["monotonic"]
    assert res.headline["iid_zero_max"] == 0.0
    assert res.tables["visibility_surface"].startswith("nbar\\mu,")


def test_unknown_preset():
    with pytest.raises(ConfigError):
        run_preset("fig5", preset_config("fig3a"))
