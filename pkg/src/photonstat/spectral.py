"""Spectrum-level analysis: ZPL peak metrics, ZPL/PSB decomposition,
Huang-Rhys factors, and thermal-cycle metric tables.

Conventions pinned here:
- "ZPL intensity" for quenching fits is the baseline-subtracted integrated
  area of the peak fit, not its height (height conflates quenching with
  thermal broadening);
- baselines are linear fits over the 10% outermost points of each window;
- the Huang-Rhys factor uses the Debye-Waller convention
  ZPL fraction = exp(-S), i.e. S = -ln(I_zpl / (I_zpl + I_psb));
- the default PSB window sits 0.10 to 0.25 eV below the fitted ZPL center.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitting import (
    FitResult,
    correct_background,
    fit_linear,
    fit_quenching,
    gaussian,
    gaussian_area,
    gaussian_jac,
    lm_fit,
    lorentzian,
    lorentzian_area,
    lorentzian_jac,
    rho_from_sb,
)
from .util import worker_count

__all__ = [
    "Spectrum",
    "PeakFit",
    "ThermalEntry",
    "ThermalSeries",
    "AnalysisConfig",
    "SeriesAnalysis",
    "fit_zpl",
    "decompose_zpl_psb",
    "huang_rhys",
    "analyze_series",
    "read_spectrum_csv",
    "write_spectrum_csv",
    "load_series_manifest",
]

DEFAULT_PSB_OFFSET_EV = (0.10, 0.25)  # below the ZPL center


@dataclass(frozen=True)
class Spectrum:
    """Energy-resolved counts; the grid is stored strictly increasing."""

    energy_ev: np.ndarray
    counts: np.ndarray
    temperature_k: float | None = None
    source_id: str | None = None

    def __post_init__(self):
        e = np.asarray(self.energy_ev, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        if e.ndim != 1 or e.shape != c.shape:
            raise ValueError("energy and counts must be matching 1-d arrays")
        if e.size < 16:
            raise ValueError("spectrum needs at least 16 points")
        d = np.diff(e)
        if np.all(d < 0):
            e, c = e[::-1], c[::-1]
        elif not np.all(d > 0):
            raise ValueError("energy grid must be strictly monotonic")
        if np.any(c < 0):
            raise ValueError("counts must be >= 0")
        e = e.copy()
        c = c.copy()
        e.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "energy_ev", e)
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class PeakFit:
    center_ev: float
    fwhm_ev: float
    amplitude: float
    area: float
    shape: str
    converged: bool
    fit: FitResult


@dataclass(frozen=True)
class ThermalEntry:
    temperature_k: float
    phase: str  # 'heating' | 'cooling'
    spectrum: Spectrum
    g2_0: float | None = None
    s_rate: float | None = None
    b_rate: float | None = None

    def __post_init__(self):
        if self.phase not in ("heating", "cooling"):
            raise ValueError("phase must be 'heating' or 'cooling'")
        if not 300.0 <= self.temperature_k <= 800.0:
            raise ValueError("temperature must be within [300, 800] K")


@dataclass(frozen=True)
class ThermalSeries:
    entries: tuple[ThermalEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        phases = [e.phase for e in entries]
        if "cooling" in phases:
            first_cool = phases.index("cooling")
            if "heating" in phases[first_cool:]:
                raise ValueError("phases must form a heat-then-cool cycle")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)


def _edge_baseline(energy: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Linear baseline from the 10% outermost points on each side."""
    k = max(2, int(round(0.1 * energy.size)))
    idx = np.r_[0:k, energy.size - k:energy.size]
    coeff = np.polyfit(energy[idx], counts[idx], 1)
    return np.polyval(coeff, energy)


def _window_slice(s: Spectrum, window) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = float(window[0]), float(window[1])
    if lo >= hi:
        raise ValueError("window must be (low, high) with low < high")
    i0 = np.searchsorted(s.energy_ev, lo, side="left")
    i1 = np.searchsorted(s.energy_ev, hi, side="right")
    if i1 - i0 < 8:
        raise ValueError("window covers fewer than 8 grid points")
    return s.energy_ev[i0:i1], s.counts[i0:i1]


def _seed_window(s: Spectrum) -> tuple[float, float]:
    """Auto window: global maximum +- 3x a crude half-max width."""
    j = int(np.argmax(s.counts))
    half = 0.5 * (s.counts[j] + float(np.min(s.counts)))
    right = j
    while right + 1 < s.counts.size and s.counts[right] > half:
        right += 1
    left = j
    while left > 0 and s.counts[left] > half:
        left -= 1
    fwhm_seed = max(s.energy_ev[right] - s.energy_ev[left],
                    4.0 * float(np.median(np.diff(s.energy_ev))))
    center = s.energy_ev[j]
    return center - 3.0 * fwhm_seed, center + 3.0 * fwhm_seed


_SHAPES = {
    "lorentzian": (lorentzian, lorentzian_jac, lorentzian_area),
    "gaussian": (gaussian, gaussian_jac, gaussian_area),
}


def fit_zpl(s: Spectrum, window=None, shape: str = "lorentzian") -> PeakFit:
    """Fit one spectral peak plus a local linear baseline inside the window.

    The peak and the baseline are fitted jointly (subtract-then-fit would
    clip the Lorentzian tails and bias the width low); the baseline is
    seeded from the 10% outermost window points.  Returns the fitted
    center, FWHM, amplitude and analytic peak area.  Raises if the window
    contains no local maximum above the seed baseline.
    """
    if shape not in _SHAPES:
        raise ValueError(f"shape must be one of {sorted(_SHAPES)}")
    model, model_jac, area_of = _SHAPES[shape]
    if window is None:
        window = _seed_window(s)
    e, c = _window_slice(s, window)
    k_edge = max(2, int(round(0.1 * e.size)))
    edge_idx = np.r_[0:k_edge, e.size - k_edge:e.size]
    slope0, intercept0 = np.polyfit(e[edge_idx], c[edge_idx], 1)
    y_seed = c - (slope0 * e + intercept0)

    j = int(np.argmax(y_seed))
    if j == 0 or j == y_seed.size - 1 or y_seed[j] <= 0:
        raise ValueError("no local maximum in window")
    half = 0.5 * y_seed[j]
    right = j
    while right + 1 < y_seed.size and y_seed[right] > half:
        right += 1
    left = j
    while left > 0 and y_seed[left] > half:
        left -= 1
    fwhm0 = max(e[right] - e[left], 2.0 * float(np.median(np.diff(e))))

    def peak_plus_line(x, center, fwhm, amplitude, slope, intercept):
        return model(x, center, fwhm, amplitude) + slope * x + intercept

    def peak_plus_line_jac(x, center, fwhm, amplitude, slope, intercept):
        Jp = model_jac(x, center, fwhm, amplitude)
        return np.concatenate(
            [Jp, x[:, None], np.ones((x.size, 1))], axis=1
        )

    sigma = np.maximum(np.sqrt(np.maximum(c, 0.0)), 1.0)
    res = lm_fit(
        peak_plus_line, e, c, [e[j], fwhm0, y_seed[j], slope0, intercept0],
        sigma=sigma, jac=peak_plus_line_jac,
        param_names=["center_ev", "fwhm_ev", "amplitude", "baseline_slope",
                     "baseline_intercept"],
        model_name=shape,
    )
    center = res.params["center_ev"]
    fwhm = abs(res.params["fwhm_ev"])  # the lineshape is even in fwhm
    amplitude = res.params["amplitude"]
    converged = bool(res.converged and amplitude > 0)
    return PeakFit(
        center_ev=float(center),
        fwhm_ev=float(fwhm),
        amplitude=float(amplitude),
        area=area_of(fwhm, amplitude),
        shape=shape,
        converged=converged,
        fit=res,
    )


def decompose_zpl_psb(s: Spectrum, zpl_window, psb_window) -> dict:
    """Baseline-subtracted trapezoidal areas of two disjoint windows."""
    lo1, hi1 = map(float, zpl_window)
    lo2, hi2 = map(float, psb_window)
    if lo1 < hi2 and lo2 < hi1:
        raise ValueError("ZPL and PSB windows must be disjoint")
    areas = {}
    for key, window in (("i_zpl", zpl_window), ("i_psb", psb_window)):
        e, c = _window_slice(s, window)
        y = c - _edge_baseline(e, c)
        areas[key] = max(float(np.trapezoid(y, e)), 0.0)
    return areas


def huang_rhys(i_zpl: float, i_psb: float) -> float:
    """Electron-phonon coupling S = -ln(I_zpl / (I_zpl + I_psb))."""
    if i_zpl <= 0:
        raise ValueError("I_zpl must be > 0")
    if i_psb < 0:
        raise ValueError("I_psb must be >= 0")
    return float(-np.log(i_zpl / (i_zpl + i_psb)))


# ---------------------------------------------------------------------------
# thermal-series analysis


@dataclass(frozen=True)
class AnalysisConfig:
    zpl_window: tuple[float, float] | None = None  # None: auto per spectrum
    psb_window: tuple[float, float] | None = None
    shape: str = "lorentzian"
    compute_hr: bool = False  # implied when psb_window is given


@dataclass
class SeriesAnalysis:
    rows: list[dict]
    quench_fit: FitResult | None
    fwhm_fit: FitResult | None  # slope in meV/K
    total_red_shift_mev: float | None
    reversibility: list[dict]
    warnings: list[str]


def _analyze_entry(entry: ThermalEntry, config: AnalysisConfig) -> dict:
    peak = fit_zpl(entry.spectrum, window=config.zpl_window, shape=config.shape)
    row = {
        "temperature_k": float(entry.temperature_k),
        "phase": entry.phase,
        "zpl_center_ev": peak.center_ev,
        "zpl_fwhm_ev": peak.fwhm_ev,
        "zpl_area": peak.area,
        "g2_0_raw": entry.g2_0,
        "rho": None,
        "g2_0_corrected": None,
        "s_hr": None,
    }
    if entry.s_rate is not None and entry.b_rate is not None:
        rho = rho_from_sb(entry.s_rate, entry.b_rate)
        row["rho"] = rho
        if entry.g2_0 is not None:
            row["g2_0_corrected"] = float(correct_background(entry.g2_0, rho))
    if config.psb_window is not None or config.compute_hr:
        psb_w = config.psb_window
        if psb_w is None:
            psb_w = (peak.center_ev - DEFAULT_PSB_OFFSET_EV[1],
                     peak.center_ev - DEFAULT_PSB_OFFSET_EV[0])
        zpl_w = config.zpl_window
        if zpl_w is None:
            # Thermal broadening can push center - 3*FWHM into the side band;
            # clip the integration window so the two stay disjoint.
            zpl_w = (max(peak.center_ev - 3.0 * peak.fwhm_ev, psb_w[1]),
                     peak.center_ev + 3.0 * peak.fwhm_ev)
        areas = decompose_zpl_psb(entry.spectrum, zpl_w, psb_w)
        if areas["i_zpl"] > 0:
            row["s_hr"] = huang_rhys(areas["i_zpl"], areas["i_psb"])
    return row


def analyze_series(ts: ThermalSeries, config: AnalysisConfig | None = None
                   ) -> SeriesAnalysis:
    """Per-(T, phase) ZPL metrics plus the series-level trend fits.

    Emits exactly one row per entry.  Trend fits (quenching on area, linear
    broadening on FWHM, total red shift, reversibility deltas) are skipped
    with a warning when the series is too short, never raising.
    """
    config = config or AnalysisConfig()
    if len(ts) == 0:
        raise ValueError("empty thermal series")
    entries = ts.entries
    if len(entries) > 1:
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            rows = list(pool.map(lambda e: _analyze_entry(e, config), entries))
    else:
        rows = [_analyze_entry(entries[0], config)]

    warnings: list[str] = []
    temps = sorted({r["temperature_k"] for r in rows})
    quench_fit = fwhm_fit = None
    total_shift = None

    if len(temps) < 3:
        warnings.append("fewer than 3 temperatures: trend fits skipped")
    else:
        t_arr = np.array([r["temperature_k"] for r in rows])
        area = np.array([r["zpl_area"] for r in rows])
        fwhm_mev = np.array([r["zpl_fwhm_ev"] for r in rows]) * 1e3
        try:
            quench_fit = fit_quenching(t_arr, area)
        except ValueError as exc:
            warnings.append(f"quenching fit skipped: {exc}")
        fwhm_fit = fit_linear(t_arr, fwhm_mev)

        t_min, t_max = temps[0], temps[-1]
        heat_cold = [r for r in rows
                     if r["temperature_k"] == t_min and r["phase"] == "heating"]
        cold = heat_cold or [r for r in rows if r["temperature_k"] == t_min]
        hot = [r for r in rows if r["temperature_k"] == t_max]
        total_shift = (cold[0]["zpl_center_ev"] - hot[0]["zpl_center_ev"]) * 1e3

    reversibility: list[dict] = []
    by_phase_t: dict[tuple[str, float], dict] = {}
    for r in rows:
        by_phase_t.setdefault((r["phase"], r["temperature_k"]), r)
    cool_temps = {t for (ph, t) in by_phase_t if ph == "cooling"}
    if not cool_temps:
        warnings.append("heating-only series: reversibility deltas unavailable")
    for t in sorted(cool_temps):
        heat = by_phase_t.get(("heating", t))
        coolr = by_phase_t[("cooling", t)]
        if heat is None:
            continue
        reversibility.append({
            "temperature_k": t,
            "center_delta_mev": (coolr["zpl_center_ev"]
                                 - heat["zpl_center_ev"]) * 1e3,
            "fwhm_delta_mev": (coolr["zpl_fwhm_ev"] - heat["zpl_fwhm_ev"]) * 1e3,
        })

    return SeriesAnalysis(
        rows=rows,
        quench_fit=quench_fit,
        fwhm_fit=fwhm_fit,
        total_red_shift_mev=total_shift,
        reversibility=reversibility,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# file interchange


def read_spectrum_csv(path, temperature_k=None, source_id=None) -> Spectrum:
    """Read a spectrum CSV with required header ``energy_ev,counts``."""
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["energy_ev",
                                                                 "counts"]:
            raise ValueError(f"{path}: expected header 'energy_ev,counts'")
        energy, counts = [], []
        for rec in reader:
            if not rec:
                continue
            energy.append(float(rec[0]))
            counts.append(float(rec[1]))
    return Spectrum(
        energy_ev=np.asarray(energy),
        counts=np.asarray(counts),
        temperature_k=temperature_k,
        source_id=source_id,
    )


def write_spectrum_csv(path, s: Spectrum):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["energy_ev", "counts"])
        for e, c in zip(s.energy_ev, s.counts):
            writer.writerow([repr(float(e)), repr(float(c))])


def load_series_manifest(path) -> ThermalSeries:
    """Load a JSON manifest: array of {temperature_k, phase, spectrum_path,
    g2_0?, s_rate?, b_rate?}.  Spectrum paths resolve against the manifest."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    entries = []
    for i, item in enumerate(doc):
        try:
            spec_path = Path(item["spectrum_path"])
            if not spec_path.is_absolute():
                spec_path = path.parent / spec_path
            if not spec_path.exists():
                raise FileNotFoundError(
                    f"manifest entry {i} (T={item.get('temperature_k')}): "
                    f"missing spectrum {spec_path}"
                )
            spectrum = read_spectrum_csv(
                spec_path, temperature_k=float(item["temperature_k"])
            )
            entries.append(ThermalEntry(
                temperature_k=float(item["temperature_k"]),
                phase=str(item["phase"]),
                spectrum=spectrum,
                g2_0=(float(item["g2_0"]) if item.get("g2_0") is not None
                      else None),
                s_rate=(float(item["s_rate"]) if item.get("s_rate") is not None
                        else None),
                b_rate=(float(item["b_rate"]) if item.get("b_rate") is not None
                        else None),
            ))
        except KeyError as exc:
            raise ValueError(f"{path}: manifest entry {i} missing key {exc}")
    return ThermalSeries(entries=tuple(entries))
