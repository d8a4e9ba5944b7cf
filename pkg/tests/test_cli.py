import json

import numpy as np
import pytest

from hybridhom.cli import main
from hybridhom.spectra import lorentzian
from hybridhom.tagfile import read_tagfile


def ini(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def simulate(tmp_path, text, out="sim", seed=None):
    args = ["simulate", "--config", ini(tmp_path, text), "--out", str(tmp_path / out)]
    if seed is not None:
        args += ["--seed", str(seed)]
    assert main(args) == 0
    return tmp_path / out


def test_no_command_is_usage_error(capsys):
    assert main([]) == 1


def test_bad_flag_exits_one():
    with pytest.raises(SystemExit) as info:
        main(["correlate", "--bogus"])
    assert info.value.code == 1


def test_bad_config_exits_one(tmp_path, capsys):
    assert main(["surface", "--config", ini(tmp_path, "[nope]\n"), "--out", str(tmp_path)]) == 1
    assert "line 1" in capsys.readouterr().err


def test_missing_file_exits_one(tmp_path):
    assert main(["correlate", str(tmp_path / "a.ptag"), str(tmp_path / "b.ptag"), "--out", str(tmp_path)]) == 1


def test_simulate_is_deterministic(tmp_path):
    text = "[run]\npreset = fig3a\nduration_s = 0.05\nchunk_s = 0.02\n"
    a = simulate(tmp_path, text, "a", seed=3)
    b = simulate(tmp_path, text, "b", seed=3)
    c = simulate(tmp_path, text, "c", seed=4)
    for name in ("ch1.ptag", "ch2.ptag", "sync.ptag", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "sync.ptag").read_bytes() != (c / "sync.ptag").read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["duration_ps"] == 5 * 10**10
    assert [ch["name"] for ch in manifest["channels"]] == ["ch1", "ch2", "sync"]


def test_zero_duration_writes_empty_files(tmp_path):
    out = simulate(tmp_path, "[run]\npreset = fig4b\nduration_s = 0\n")
    for name in ("ch1", "ch2", "sync"):
        duration, streams = read_tagfile(out / f"{name}.ptag")
        assert duration == 0
        assert all(len(s) == 0 for s in streams.values())


def test_qd_rate_from_simulated_files(tmp_path):
    out = simulate(tmp_path, "[run]\npreset = fig3c\nduration_s = 0.5\n")
    manifest = json.loads((out / "manifest.json").read_text())
    rate = sum(ch["rate_hz"] for ch in manifest["channels"])
    assert rate == pytest.approx(0.44e6, rel=0.03)


def test_correlate_and_fit(tmp_path):
    out = simulate(tmp_path, "[run]\npreset = fig3c\nduration_s = 40\nchunk_s = 1\n")
    corr = tmp_path / "corr"
    args = ["correlate", f"{out / 'ch1.ptag'}", f"{out / 'ch2.ptag'}", "--bin", "50", "--range", "15000",
            "--normalization", "plateau", "--out", str(corr)]
    assert main(args) == 0
    summary = json.loads((corr / "correlation.json").read_text())
    assert summary["g2_0"] < 0.2
    fit_out = tmp_path / "fit"
    assert main(["fit", str(corr / "correlation.csv"), "--model", "eq2_antibunch", "--response", "104",
                 "--out", str(fit_out)]) == 0
    result = json.loads((fit_out / "fit.json").read_text())
    assert result["params"]["tau_qd_ps"] == pytest.approx(987.0, rel=0.1)


def test_correlate_explicit_channel(tmp_path):
    out = simulate(tmp_path, "[run]\npreset = fig3a\nduration_s = 0.05\n")
    args = ["correlate", f"{out / 'sync.ptag'}:2", f"{out / 'ch1.ptag'}:0", "--out", str(tmp_path / "x")]
    assert main(args) == 0
    assert main(["correlate", f"{out / 'sync.ptag'}:7", f"{out / 'ch1.ptag'}", "--out", str(tmp_path / "y")]) == 1


def test_overlap_of_identical_spectra(tmp_path, capsys):
    path = tmp_path / "s.csv"
    lorentzian(0.0, 2.17, np.linspace(-200, 200, 40001)).to_csv(path)
    assert main(["overlap", str(path), str(path), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "overlap.json").read_text())["overlap"] == pytest.approx(1.0, abs=1e-12)
    assert main(["overlap", str(path), str(path), "--detune", "2.17", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "overlap.json").read_text())["overlap"] == pytest.approx(0.5, abs=5e-3)


def test_surface_and_curve(tmp_path, capsys):
    assert main(["surface", "--out", str(tmp_path)]) == 0
    assert "monotonicity PASS" in capsys.readouterr().out
    assert (tmp_path / "visibility_surface.csv").exists()
    assert main(["curve", "--r", "0.25", "4", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "visibility_curve.csv").read_text().splitlines()
    assert lines[0] == "r,nbar,v_model,v_model_resolution" and len(lines) == 3


def test_preset_writes_summary(tmp_path):
    assert main(["preset", "fig3a", "--duration", "0.2", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiment"] == "fig3a"
    assert "heralded_g2_0" in summary["headline"]


def test_verify_tagfile_corruption(tmp_path, capsys):
    out = simulate(tmp_path, "[run]\npreset = fig3a\nduration_s = 0.01\n")
    good = out / "ch1.ptag"
    assert main(["verify", "--tagfile", str(good)]) == 0
    bad = tmp_path / "bad.ptag"
    data = good.read_bytes()
    bad.write_bytes(data[: len(data) - 3])
    assert main(["verify", "--tagfile", str(bad)]) == 2
    assert "FAIL tagfile" in capsys.readouterr().out
