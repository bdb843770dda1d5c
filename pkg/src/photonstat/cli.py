"""Command-line front end wiring simulation, correlation, fitting and
spectral analysis into reproducible pipelines.

Subcommands: simulate, correlate, g2, lifetime, fit-spectrum, fit-quench,
report.  Every run writes a ``run.json`` capturing the resolved parameters
(with provenance: flag, config-file, tool-default, pulse defaults from the
measurement protocol), sha256 hashes of the inputs, and the output names;
together with the inputs it reproduces the outputs byte-identically.

Exit codes: 0 success, 2 input/validation error, 3 computation error.
Outputs are plot data (CSV/JSON), never rendered images.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .correlate import (
    correlate,
    lifetime_histogram,
    normalize,
    write_histogram_csv,
)
from .emitter import FourLevelParams, LevelSystem, build_four_level
from .fitting import correct_background, fit_g2, fit_lifetime, fit_quenching, rho_from_sb
from .simulate import CWExcitation, DetectorModel, PulsedExcitation, SimConfig, simulate
from .spectral import (
    AnalysisConfig,
    analyze_series,
    decompose_zpl_psb,
    fit_zpl,
    huang_rhys,
    load_series_manifest,
    read_spectrum_csv,
)
from .streams import TimeTagStream, read_streams, write_ptag

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3

_INPUT_ERRORS = (ValueError, KeyError, TypeError, FileNotFoundError,
                 IsADirectoryError, json.JSONDecodeError)


class ParamSet:
    """Resolve parameters by precedence flag > config file > default, and
    remember each value's provenance for run.json."""

    def __init__(self, args: argparse.Namespace, config: dict,
                 config_path=None):
        self._args = vars(args)
        self._config = config
        self.config_path = config_path
        self.resolved: dict[str, dict] = {}

    def get(self, name, default=None, provenance="tool-default",
            required=False):
        if self._args.get(name) is not None:
            value, prov = self._args[name], "flag"
        elif name in self._config:
            value, prov = self._config[name], "config-file"
        else:
            value, prov = default, provenance
        if required and value is None:
            raise ValueError(f"missing required parameter --{name.replace('_', '-')}")
        self.resolved[name] = {"value": value, "provenance": prov}
        return value


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_run_json(out_dir: Path, command: str, params: ParamSet,
                    inputs: list, outputs: list[str]):
    if params.config_path is not None:
        inputs = list(inputs) + [params.config_path]
    doc = {
        "command": command,
        "version": __version__,
        "parameters": params.resolved,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
    }
    with open(out_dir / "run.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> Path:
    # The output directory is where results land, not a parameter of the
    # computation, so it stays out of run.json (else two otherwise-identical
    # runs into different directories would disagree byte-for-byte).
    if not getattr(args, "out", None):
        raise ValueError("missing required parameter --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _make_params(args) -> ParamSet:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        config = {k.replace("-", "_"): v for k, v in doc.items()}
        return ParamSet(args, config, config_path=args.config)
    return ParamSet(args, {})


def _load_model(path) -> LevelSystem:
    with open(path) as fh:
        doc = json.load(fh)
    if "rates" in doc:
        return LevelSystem.from_dict(doc)
    return build_four_level(FourLevelParams.from_dict(doc))


def _load_detector(spec: str) -> DetectorModel:
    if spec == "ideal":
        return DetectorModel()
    if spec == "apd":
        return DetectorModel.typical_apd()
    with open(spec) as fh:
        doc = json.load(fh)
    return DetectorModel(
        efficiency=float(doc.get("efficiency", 1.0)),
        dead_time_ps=float(doc.get("dead_time_ps", 0.0)),
        jitter_sigma_ps=float(doc.get("jitter_sigma_ps", 0.0)),
        dark_rate=float(doc.get("dark_rate", 0.0)),
    )


def _pick_channel(path, preferred: str) -> np.ndarray:
    channels = read_streams(path)
    if not channels:
        raise ValueError(f"{path}: no time tags found")
    if preferred in channels:
        return channels[preferred]
    if len(channels) == 1:
        return next(iter(channels.values()))
    raise ValueError(
        f"{path}: channel {preferred} absent and file has multiple channels "
        f"({sorted(channels)})"
    )


def _parse_window(text) -> tuple[float, float] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        lo, hi = text
        return float(lo), float(hi)
    lo, hi = text.split(",")
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    params = _make_params(args)
    out = _out_dir(args)
    model_path = params.get("model", required=True)
    duration = float(params.get("duration", required=True))
    seed = int(params.get("seed", default=0))
    background = float(params.get("background_rate", default=0.0))
    detector_spec = params.get("detector", default="ideal")
    pulsed = bool(params.get("pulsed", default=False))

    system = _load_model(model_path)
    detector = _load_detector(detector_spec)
    if pulsed:
        excitation = PulsedExcitation(
            pump_rate_in_pulse=float(params.get("pump_in_pulse", required=True)),
            rep_rate=float(params.get("rep_rate", default=10e6,
                                      provenance="pulse-protocol-default")),
            pulse_width_ps=float(params.get("pulse_width_ps", default=100.0,
                                            provenance="pulse-protocol-default")),
        )
    else:
        pump = params.get("pump_rate", default=None,
                          provenance="model-file")
        excitation = CWExcitation(
            pump_rate=float(pump) if pump is not None else None
        )
    cfg = SimConfig(duration_s=duration, seed=seed, excitation=excitation,
                    background_rate=background)
    streams = simulate(system, detector, cfg)

    names = ["a.ptag", "b.ptag", "sync.ptag"][: len(streams)]
    for name, stream in zip(names, streams):
        write_ptag(out / name, stream)
        print(f"{name}: {len(stream)} tags")
    inputs = [model_path] + ([detector_spec] if Path(detector_spec).exists() else [])
    _write_run_json(out, "simulate", params, inputs, names)
    return EXIT_OK


def _correlate_from_args(params: ParamSet):
    path_a = params.get("a", required=True)
    path_b = params.get("b", required=True)
    bin_width = int(params.get("bin_width_ps", default=256))
    max_tau = int(params.get("max_tau_ps", default=100_000))
    ta = _pick_channel(path_a, "A")
    tb = _pick_channel(path_b, "B")
    duration = params.get("duration_ps", default=None, provenance="derived-from-data")
    if duration is None:
        if ta.size == 0 and tb.size == 0:
            raise ValueError("both channels empty; pass --duration-ps")
        duration = int(max(ta[-1] if ta.size else 0, tb[-1] if tb.size else 0))
        params.resolved["duration_ps"]["value"] = duration
    hist = correlate(ta, tb, bin_width, max_tau, duration_ps=int(duration))
    return normalize(hist), [path_a, path_b]


def cmd_correlate(args) -> int:
    params = _make_params(args)
    out = _out_dir(args)
    hist, inputs = _correlate_from_args(params)
    write_histogram_csv(out / "g2.csv", hist)
    print(f"g2.csv: {hist.counts.sum()} coincidences in {hist.counts.size} bins")
    _write_run_json(out, "correlate", params, inputs, ["g2.csv"])
    return EXIT_OK


def cmd_g2(args) -> int:
    params = _make_params(args)
    out = _out_dir(args)
    hist, inputs = _correlate_from_args(params)
    fit = fit_g2(hist)

    signal = params.get("signal", default=None, provenance="absent")
    backgr = params.get("background", default=None, provenance="absent")
    doc = fit.to_json_dict()
    g2_0 = fit.params["g2_0"]
    print(f"g2(0) = {g2_0:.4f}")
    if signal is not None and backgr is not None:
        rho = rho_from_sb(float(signal), float(backgr))
        corrected = float(correct_background(g2_0, rho))
        doc["info"]["rho"] = rho
        doc["info"]["g2_0_corrected"] = corrected
        print(f"corrected g2(0) = {corrected:.4f}")
    verdict = "yes" if fit.info["single_photon"] else "no"
    print(f"single-photon: {verdict}")

    write_histogram_csv(out / "g2.csv", hist)
    with open(out / "g2_fit.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_json(out, "g2", params, inputs, ["g2.csv", "g2_fit.json"])
    return EXIT_OK


def cmd_lifetime(args) -> int:
    params = _make_params(args)
    out = _out_dir(args)
    photons_path = params.get("photons", required=True)
    sync_path = params.get("sync", required=True)
    bin_width = int(params.get("bin_width_ps", default=100))
    fit_start = float(params.get("fit_start_ps", default=1000.0))

    tp = _pick_channel(photons_path, "A")
    ts = _pick_channel(sync_path, "SYNC")
    hist = lifetime_histogram(tp, ts, bin_width)
    fit = fit_lifetime(hist, fit_start)
    tau_ns = fit.params["tau_ps"] / 1e3
    print(f"lifetime tau = {tau_ns:.4f} ns (converged: {fit.converged})")

    with open(out / "lifetime.csv", "w", newline="") as fh:
        fh.write(f"# meta: bin_width_ps={hist.bin_width_ps} "
                 f"window_ps={hist.window_ps} "
                 f"n_before_first_sync={hist.n_before_first_sync}\n")
        writer = csv.writer(fh)
        writer.writerow(["time_ps", "counts"])
        for t, c in zip(hist.bin_centers(), hist.counts):
            writer.writerow([f"{t:.1f}", int(c)])
    with open(out / "lifetime_fit.json", "w") as fh:
        json.dump(fit.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_json(out, "lifetime", params, [photons_path, sync_path],
                    ["lifetime.csv", "lifetime_fit.json"])
    return EXIT_OK


def cmd_fit_spectrum(args) -> int:
    params = _make_params(args)
    out = _out_dir(args)
    spec_path = params.get("spectrum", required=True)
    window = _parse_window(params.get("window", default=None, provenance="auto"))
    psb_window = _parse_window(params.get("psb_window", default=None,
                                          provenance="absent"))
    shape = params.get("shape", default="lorentzian")

    spectrum = read_spectrum_csv(spec_path)
    peak = fit_zpl(spectrum, window=window, shape=shape)
    doc = {
        "center_ev": peak.center_ev,
        "fwhm_ev": peak.fwhm_ev,
        "fwhm_mev": peak.fwhm_ev * 1e3,
        "amplitude": peak.amplitude,
        "area": peak.area,
        "shape": peak.shape,
        "converged": peak.converged,
        "fit": peak.fit.to_json_dict(),
    }
    if psb_window is not None:
        zpl_w = window or (peak.center_ev - 3 * peak.fwhm_ev,
                           peak.center_ev + 3 * peak.fwhm_ev)
        areas = decompose_zpl_psb(spectrum, zpl_w, psb_window)
        doc["i_zpl"] = areas["i_zpl"]
        doc["i_psb"] = areas["i_psb"]
        doc["s_hr"] = huang_rhys(areas["i_zpl"], areas["i_psb"])
    print(f"ZPL center = {peak.center_ev:.4f} eV, "
          f"FWHM = {peak.fwhm_ev * 1e3:.2f} meV")
    with open(out / "zpl_fit.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_json(out, "fit-spectrum", params, [spec_path], ["zpl_fit.json"])
    return EXIT_OK


def cmd_fit_quench(args) -> int:
    params = _make_params(args)
    out = _out_dir(args)
    data_path = params.get("data", required=True)
    temps, intens = [], []
    with open(data_path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != [
                "temperature_k", "intensity"]:
            raise ValueError(
                f"{data_path}: expected header 'temperature_k,intensity'")
        for rec in reader:
            if not rec:
                continue
            temps.append(float(rec[0]))
            intens.append(float(rec[1]))
    fit = fit_quenching(temps, intens)
    print(f"E = {fit.params['e_ev']:.4f} eV, A = {fit.params['a']:.2f}, "
          f"I0 = {fit.params['i0']:.4g}")
    with open(out / "quench_fit.json", "w") as fh:
        json.dump(fit.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_json(out, "fit-quench", params, [data_path], ["quench_fit.json"])
    return EXIT_OK


def _write_rows_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow(
                ["" if row.get(k) is None else row[k] for k in fieldnames]
            )


def cmd_report(args) -> int:
    params = _make_params(args)
    out = _out_dir(args)
    manifest_path = params.get("manifest", required=True)
    zpl_window = _parse_window(params.get("zpl_window", default=None,
                                          provenance="auto"))
    psb_window = _parse_window(params.get("psb_window", default=None,
                                          provenance="absent"))
    shape = params.get("shape", default="lorentzian")

    series = load_series_manifest(manifest_path)
    config = AnalysisConfig(zpl_window=zpl_window, psb_window=psb_window,
                            shape=shape, compute_hr=psb_window is not None)
    analysis = analyze_series(series, config)

    outputs = []

    def emit(name, fieldnames, rows):
        _write_rows_csv(out / name, fieldnames, rows)
        outputs.append(name)

    rows = analysis.rows
    metric_rows = [
        dict(r, zpl_fwhm_mev=r["zpl_fwhm_ev"] * 1e3) for r in rows
    ]
    emit("metrics.csv",
         ["temperature_k", "phase", "zpl_center_ev", "zpl_fwhm_mev",
          "zpl_area", "g2_0_raw", "rho", "g2_0_corrected", "s_hr"],
         metric_rows)
    emit("g2_vs_T.csv",
         ["temperature_k", "phase", "g2_0_raw", "g2_0_corrected"], rows)
    emit("zpl_vs_T.csv",
         ["temperature_k", "phase", "zpl_center_ev", "zpl_fwhm_mev"],
         metric_rows)
    emit("intensity_vs_T.csv",
         ["temperature_k", "phase", "zpl_area"], rows)

    if analysis.quench_fit is not None:
        qp = analysis.quench_fit.params
        t_grid = np.arange(min(r["temperature_k"] for r in rows),
                           max(r["temperature_k"] for r in rows) + 0.5, 1.0)
        from .fitting import quenching_curve

        curve = quenching_curve(t_grid, qp["i0"], qp["a"], qp["e_ev"])
        emit("intensity_fit_curve.csv", ["temperature_k", "intensity_fit"],
             [{"temperature_k": f"{t:.0f}", "intensity_fit": v}
              for t, v in zip(t_grid, curve)])

    emit("reversibility.csv",
         ["temperature_k", "center_delta_mev", "fwhm_delta_mev"],
         analysis.reversibility)

    summary = {
        "warnings": analysis.warnings,
        "total_red_shift_mev": analysis.total_red_shift_mev,
        "quench_fit": (analysis.quench_fit.to_json_dict()
                       if analysis.quench_fit else None),
        "fwhm_fit": (analysis.fwhm_fit.to_json_dict()
                     if analysis.fwhm_fit else None),
        "slope_mev_per_k": (analysis.fwhm_fit.params["slope"]
                            if analysis.fwhm_fit else None),
        "e_ev": (analysis.quench_fit.params["e_ev"]
                 if analysis.quench_fit else None),
        "a": (analysis.quench_fit.params["a"]
              if analysis.quench_fit else None),
        "hr_factors": {
            r["phase"] + f"_{r['temperature_k']:.0f}K": r["s_hr"]
            for r in rows if r.get("s_hr") is not None
        } or None,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append("summary.json")

    if analysis.total_red_shift_mev is not None:
        print(f"total red shift = {analysis.total_red_shift_mev:.2f} meV")
    if analysis.fwhm_fit is not None:
        print(f"broadening slope = {analysis.fwhm_fit.params['slope']:.4f} meV/K")
    if analysis.quench_fit is not None:
        print(f"quenching E = {analysis.quench_fit.params['e_ev']:.4f} eV, "
              f"A = {analysis.quench_fit.params['a']:.1f}")
    for w in analysis.warnings:
        print(f"warning: {w}", file=sys.stderr)

    _write_run_json(out, "report", params, [manifest_path], outputs)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonstat",
        description="Single-photon-emitter simulation and analysis pipelines.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with defaults; flags override")
        p.add_argument("--out", help="output directory")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "generate HBT time-tag streams")
    p.add_argument("--model", help="LevelSystem or four-level params JSON")
    p.add_argument("--duration", type=float, help="acquisition time in seconds")
    p.add_argument("--seed", type=int)
    p.add_argument("--pump-rate", type=float, help="CW pump rate 1/s")
    p.add_argument("--pulsed", action="store_const", const=True, default=None)
    p.add_argument("--pump-in-pulse", type=float, help="pump rate inside pulses 1/s")
    p.add_argument("--rep-rate", type=float, help="pulse repetition rate Hz")
    p.add_argument("--pulse-width-ps", type=float)
    p.add_argument("--background-rate", type=float, help="background photons 1/s")
    p.add_argument("--detector", help="'ideal', 'apd', or detector JSON path")

    for name, func, help_text in (
        ("correlate", cmd_correlate, "coincidence histogram from two streams"),
        ("g2", cmd_g2, "correlate, normalize and fit g2(tau)"),
    ):
        p = add(name, func, help_text)
        p.add_argument("--a", help="channel A stream (PTAG or CSV)")
        p.add_argument("--b", help="channel B stream (PTAG or CSV)")
        p.add_argument("--bin-width-ps", type=int)
        p.add_argument("--max-tau-ps", type=int)
        p.add_argument("--duration-ps", type=int)
        if name == "g2":
            p.add_argument("--signal", type=float, help="signal rate S, counts/s")
            p.add_argument("--background", type=float,
                           help="background rate B, counts/s")

    p = add("lifetime", cmd_lifetime, "time-since-sync histogram and tail fit")
    p.add_argument("--photons", help="photon stream (PTAG or CSV)")
    p.add_argument("--sync", help="sync stream (PTAG or CSV)")
    p.add_argument("--bin-width-ps", type=int)
    p.add_argument("--fit-start-ps", type=float)

    p = add("fit-spectrum", cmd_fit_spectrum, "ZPL peak fit on a spectrum CSV")
    p.add_argument("--spectrum", help="CSV with header energy_ev,counts")
    p.add_argument("--window", help="fit window 'lo,hi' in eV")
    p.add_argument("--psb-window", help="side-band window 'lo,hi' in eV")
    p.add_argument("--shape", choices=["lorentzian", "gaussian"])

    p = add("fit-quench", cmd_fit_quench, "thermal quenching fit on (T, I) CSV")
    p.add_argument("--data", help="CSV with header temperature_k,intensity")

    p = add("report", cmd_report, "full thermal-cycle metric bundle")
    p.add_argument("--manifest", help="series manifest JSON")
    p.add_argument("--zpl-window", help="ZPL window 'lo,hi' in eV")
    p.add_argument("--psb-window", help="PSB window 'lo,hi' in eV")
    p.add_argument("--shape", choices=["lorentzian", "gaussian"])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # computation / runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
