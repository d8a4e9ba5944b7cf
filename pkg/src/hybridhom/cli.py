"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from hybridhom import __version__, acceptance, analytics, fitkit, spectra
from hybridhom.config import ExperimentConfig, load_config, preset_config, preset_names
from hybridhom.correlator import HeraldConfig, cross_correlate, heralded_g2
from hybridhom.errors import HybridHomError, TagFileError
from hybridhom.pipeline import PRESET_LAYOUT, Rig, run_fig4d, run_preset, simulate_chunks
from hybridhom.tagfile import read_tagfile, write_tagfile
from hybridhom.tags import TagStream, concat_sorted

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ACCEPTANCE = 2

CHANNEL_IDS = {"ch1": 0, "ch2": 1, "sync": 2, "sync1": 2, "sync2": 3}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _write_json(path, data):
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _load(args, default_preset=None):
    """Config from ``--config``, else the named preset, else defaults; then ``--seed``."""
    if args.config:
        cfg = load_config(args.config)
    elif default_preset:
        cfg = preset_config(default_preset)
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        cfg.run.seed = args.seed
    return cfg


def _out_dir(args, cfg=None):
    out = Path(args.out or (cfg.run.out if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tag_spec(text):
    """``path`` or ``path:channel``."""
    path, _, channel = text.rpartition(":")
    if path and channel.isdigit():
        return path, int(channel)
    return text, None


def _read_stream(text):
    """Stream named by ``path[:channel]``. Without a channel, the file's highest
    declared channel is used, which is the channel a per-channel file holds."""
    path, channel = _tag_spec(text)
    duration, streams = read_tagfile(path)
    if channel is None:
        channel = max(streams, default=0)
    if channel not in streams:
        duration, stream = read_tagfile(path, channel)  # raises the missing-channel error
    return duration, streams[channel]


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    cfg = _load(args)
    preset = cfg.run.preset or "fig4b"
    layout = PRESET_LAYOUT.get(preset)
    if layout is None:
        raise UsageError(f"preset {preset!r} has no photon simulation")
    pol = cfg.interference.polarization
    mixing = layout in ("sfwm_pair_hom", "qd_delay_hom", "hybrid")
    chunks = {}
    total = 0
    for offset, length, streams in simulate_chunks(cfg, layout, (pol,) if mixing else None):
        if mixing:
            streams = streams[pol]
        for name, stream in streams.items():
            chunks.setdefault(name, []).append(stream.shifted(offset))
        total = offset + length
    out = _out_dir(args, cfg)
    names = sorted(chunks, key=lambda n: CHANNEL_IDS[n]) if chunks else []
    if not names:
        # zero duration: still describe the channels the layout would produce
        names = {"sfwm_hbt": ["ch1", "ch2", "sync"], "qd_hbt": ["ch1", "ch2"], "qd_delay_hom": ["ch1", "ch2"],
                 "sfwm_pair_hom": ["ch1", "ch2", "sync1", "sync2"], "hybrid": ["ch1", "ch2", "sync"]}[layout]
    channels = []
    for name in names:
        cid = CHANNEL_IDS[name]
        stream = concat_sorted(chunks.get(name, []), cid) if name in chunks else TagStream.empty(cid)
        path = out / f"{name}.ptag"
        write_tagfile(path, stream, total, cid + 1)
        channels.append({"name": name, "channel": cid, "file": path.name, "count": len(stream),
                         "rate_hz": stream.rate_hz(total) if total else 0.0})
    rig = Rig.from_config(cfg)
    manifest = {
        "version": __version__,
        "preset": preset,
        "layout": layout,
        "duration_ps": total,
        "seed": cfg.run.seed,
        "channels": channels,
        "derived": {"pair_rate_hz": rig.pair_rate_hz, "qd_emission_rate_hz": rig.qd.emission_rate_hz,
                    "detector_jitter_fwhm_ps": rig.detector.jitter_fwhm_ps, "iid_effective": rig.iid_eff},
        "config": cfg.to_dict(),
    }
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {len(channels)} tag files to {out}")
    return EXIT_OK


def cmd_correlate(args):
    dur_a, a = _read_stream(args.a)
    dur_b, b = _read_stream(args.b)
    duration = max(dur_a, dur_b)
    if args.sync:
        _, sync = _read_stream(args.sync)
        hist = heralded_g2(sync, a, b, HeraldConfig(args.herald_window, args.reference), args.bin, args.range,
                           duration_ps=duration, normalization=args.normalization)
    else:
        hist = cross_correlate(a, b, args.bin, args.range, duration_ps=duration, normalization=args.normalization)
    out = _out_dir(args)
    hist.to_csv(out / "correlation.csv")
    g0, err = hist.value_at(0)
    _write_json(out / "correlation.json", {"g2_0": g0, "g2_0_err": err, "normalization": hist.normalization.value,
                                           "norm_constant": hist.norm_constant, "flags": list(hist.flags),
                                           "meta": hist.meta})
    print(f"g2(0) = {g0:.6g} +- {err:.2g}")
    return EXIT_OK


def _read_histogram_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size == 0 or not {"lag_ps", "normalized", "error"} <= set(data.dtype.names):
        raise UsageError(f"{path}: expected columns lag_ps, normalized, error")
    data = np.atleast_1d(data)
    return data["lag_ps"].astype(float), data["normalized"].astype(float), data["error"].astype(float)


def cmd_fit(args):
    lags, values, errors = _read_histogram_csv(args.csv)
    ok = errors > 0
    if args.range:
        ok &= np.abs(lags) <= args.range
    data = fitkit.FitData(lags[ok], values[ok], errors[ok])
    guess = fitkit.initial_guess(args.model, data.lags, data.values)
    bin_width = args.bin if args.bin else (float(np.min(np.diff(lags))) if lags.size > 1 else 0.0)
    model = fitkit.FitModel(args.model, guess, response_fwhm_ps=args.response, bin_width_ps=bin_width)
    result = fitkit.fit(model, data)
    out = _out_dir(args)
    (out / "fit.txt").write_text(result.to_text())
    _write_json(out / "fit.json", {"variant": args.model, "status": result.status, "params": result.params,
                                   "errors": result.errors, "reduced_chi2": result.reduced_chi2})
    sys.stdout.write(result.to_text())
    return EXIT_OK


def cmd_overlap(args):
    s1 = spectra.Spectrum.from_csv(args.spectrum1)
    s2 = spectra.Spectrum.from_csv(args.spectrum2)
    if args.detune:
        s2 = spectra.detune(s2, args.detune)
    a = spectra.spectral_overlap(s1, s2)
    out = _out_dir(args)
    _write_json(out / "overlap.json", {"overlap": a, "detuning_ghz": args.detune})
    print(f"A = {a:.6f}")
    return EXIT_OK


def _write_result(res, out):
    for name, text in res.artifacts().items():
        (out / name).write_text(text)
    headline = {k: v for k, v in res.headline.items() if k != "surface"}
    _write_json(out / "summary.json", {"experiment": res.name, "headline": headline, "flags": res.flags})


def cmd_surface(args):
    cfg = _load(args, "fig4d")
    res = run_fig4d(cfg)
    out = _out_dir(args, cfg)
    _write_result(res, out)
    status = "PASS" if res.headline["monotonic"] else "FAIL"
    print(f"monotonicity {status} (max violation {res.headline['max_violation']:.3g})")
    return EXIT_OK


def cmd_curve(args):
    cfg = _load(args, "fig4c")
    eff, qd = analytics.EfficiencyConfig(cfg.sfwm.eta_s, cfg.sfwm.eta_i), analytics.QdState(cfg.qd.mu, cfg.qd.residual_g2)
    rig = Rig.from_config(cfg)
    r = args.r or list(cfg.analytics.r_values)
    curve = analytics.visibility_vs_ratio(r, qd, eff, rig.iid_eff, rig.response_fwhm_ps, cfg.interference.kernel_tau_ps)
    lines = ["r,nbar,v_model,v_model_resolution"]
    lines += [f"{a:.10g},{b:.10g},{c:.10g},{d:.10g}" for a, b, c, d in zip(curve.r, curve.nbar, curve.ideal, curve.corrected)]
    out = _out_dir(args, cfg)
    (out / "visibility_curve.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_preset(args):
    cfg = _load(args, args.name)
    if args.config and cfg.run.preset and cfg.run.preset != args.name:
        raise UsageError(f"config is for preset {cfg.run.preset!r}, not {args.name!r}")
    if args.duration is not None:
        cfg.run.duration_s = args.duration
    res = run_preset(args.name, cfg)
    out = _out_dir(args, cfg)
    _write_result(res, out)
    for key, value in res.headline.items():
        if key not in ("surface", "points"):
            print(f"{key} = {value}")
    for flag in res.flags:
        print(f"flag: {flag}")
    return EXIT_OK


def _tagfile_entry(path):
    try:
        duration, streams = read_tagfile(path)
    except (TagFileError, OSError) as exc:
        return False, f"FAIL tagfile {path}: {exc}"
    counts = ", ".join(f"ch{c}={len(s)}" for c, s in streams.items())
    return True, f"PASS tagfile {path}: duration_ps={duration}, {counts}"


def cmd_verify(args):
    ok = True
    for path in args.tagfile or []:
        good, line = _tagfile_entry(path)
        print(line, flush=True)
        ok = ok and good
    if not args.tagfile or args.criteria:
        numbers = args.criteria or None
        results = acceptance.run_all(numbers, seed=args.seed, stream=sys.stdout)
        ok = ok and all(r.passed for r in results)
        if args.out:
            out = _out_dir(args)
            _write_json(out / "verify.json", [{"criterion": r.number, "title": r.title, "passed": r.passed,
                                               "measured": r.measured, "detail": r.detail} for r in results])
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", help="output directory")

    parser = _Parser(prog="hybridhom", description="Hybrid two-photon interference simulator and analysis toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="write per-channel tag files and a manifest")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", parents=[common], help="correlation histogram of two tag streams")
    p.add_argument("a", help="start stream, path[:channel]")
    p.add_argument("b", help="stop stream, path[:channel]")
    p.add_argument("--sync", help="herald stream, path[:channel]")
    p.add_argument("--bin", type=int, default=32, help="bin width in ps")
    p.add_argument("--range", type=int, default=10000, help="lag half-range in ps")
    p.add_argument("--normalization", default="raw", choices=["raw", "accidental_rate", "plateau", "heralded"])
    p.add_argument("--herald-window", type=int, default=80)
    p.add_argument("--reference", default="ch1", choices=["ch1", "ch2", "either"])
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fit", parents=[common], help="fit a model to a histogram CSV")
    p.add_argument("csv", help="CSV with lag_ps, normalized, error columns")
    p.add_argument("--model", default="eq2_antibunch", choices=sorted(fitkit.VARIANTS))
    p.add_argument("--response", type=float, default=0.0, help="system response FWHM in ps")
    p.add_argument("--bin", type=float, default=0.0, help="bin width in ps (default: from the lags)")
    p.add_argument("--range", type=float, default=0.0, help="fit only |lag| <= range")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("overlap", parents=[common], help="spectral overlap of two spectrum CSVs")
    p.add_argument("spectrum1")
    p.add_argument("spectrum2")
    p.add_argument("--detune", type=float, default=0.0, help="shift the second spectrum by this many GHz")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("surface", parents=[common], help="visibility surface and monotonicity report")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("curve", parents=[common], help="model visibility versus count ratio")
    p.add_argument("--r", type=float, nargs="+", help="count ratios")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("preset", parents=[common], help="run a figure experiment")
    p.add_argument("name", choices=preset_names())
    p.add_argument("--duration", type=float, help="override run.duration_s")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    p.add_argument("--criteria", type=int, nargs="+", choices=sorted(acceptance.CHECKS))
    p.add_argument("--tagfile", nargs="+", help="also check these tag files")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, HybridHomError, OSError) as exc:
        print(f"hybridhom {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
