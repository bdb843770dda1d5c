import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonstat import (
    AnalysisConfig,
    Spectrum,
    ThermalEntry,
    ThermalSeries,
    analyze_series,
    decompose_zpl_psb,
    fit_zpl,
    huang_rhys,
    load_series_manifest,
    read_spectrum_csv,
    write_spectrum_csv,
)
from photonstat.fitting import gaussian, lorentzian, lorentzian_area
from photonstat.synth import CycleParams, synthetic_spectrum, synthetic_thermal_cycle

GRID = np.arange(1.59, 2.09, 5e-4)


def lorentz_spectrum(center=1.94, fwhm=0.015, amplitude=4e5, baseline=0.0,
                     noise=0.0, seed=0):
    counts = lorentzian(GRID, center, fwhm, amplitude) + baseline
    if noise:
        rng = np.random.default_rng(seed)
        counts = np.clip(counts * (1 + noise * rng.standard_normal(GRID.size)),
                         0, None)
    return Spectrum(energy_ev=GRID, counts=counts)


# ---------------------------------------------------------------------------
# Spectrum type


def test_spectrum_validation():
    with pytest.raises(ValueError, match="16"):
        Spectrum(energy_ev=np.linspace(1, 2, 8), counts=np.zeros(8))
    with pytest.raises(ValueError, match="monotonic"):
        e = GRID.copy()
        e[10] = e[5]
        Spectrum(energy_ev=e, counts=np.zeros(GRID.size))
    with pytest.raises(ValueError, match=">= 0"):
        Spectrum(energy_ev=GRID, counts=np.full(GRID.size, -1.0))


def test_spectrum_normalizes_decreasing_grid():
    s = Spectrum(energy_ev=GRID[::-1], counts=np.arange(GRID.size, dtype=float))
    assert np.all(np.diff(s.energy_ev) > 0)
    assert s.counts[0] == GRID.size - 1


# ---------------------------------------------------------------------------
# fit_zpl


def test_noiseless_lorentzian_exact_recovery():
    pk = fit_zpl(lorentz_spectrum(center=1.94, fwhm=0.015))
    assert abs(pk.center_ev - 1.94) < 1e-8
    assert abs(pk.fwhm_ev - 0.015) < 1e-8
    assert pk.converged
    assert pk.area == pytest.approx(lorentzian_area(0.015, 4e5), rel=1e-8)


def test_noisy_broad_peak_recovery():
    # 80 meV FWHM at 1.90 eV with 2% noise: center +-1 meV, FWHM +-5%
    for seed in range(5):
        s = lorentz_spectrum(center=1.90, fwhm=0.080, noise=0.02, seed=seed)
        pk = fit_zpl(s, window=(1.70, 2.08))
        assert abs(pk.center_ev - 1.90) < 1e-3
        assert abs(pk.fwhm_ev - 0.080) / 0.080 < 0.05


def test_flat_spectrum_has_no_peak():
    s = Spectrum(energy_ev=GRID, counts=np.full(GRID.size, 100.0))
    with pytest.raises(ValueError, match="no local maximum"):
        fit_zpl(s, window=(1.7, 2.0))


def test_fit_zpl_gaussian_shape():
    counts = gaussian(GRID, 1.75, 0.03, 2e4)
    pk = fit_zpl(Spectrum(energy_ev=GRID, counts=counts), shape="gaussian")
    assert abs(pk.center_ev - 1.75) < 1e-7
    assert abs(pk.fwhm_ev - 0.03) < 1e-7
    assert pk.shape == "gaussian"


def test_fit_zpl_scale_invariance():
    s1 = lorentz_spectrum(noise=0.01, seed=3)
    s2 = Spectrum(energy_ev=s1.energy_ev, counts=s1.counts * 37.0)
    p1, p2 = fit_zpl(s1), fit_zpl(s2)
    assert p1.center_ev == pytest.approx(p2.center_ev, abs=1e-9)
    assert p1.fwhm_ev == pytest.approx(p2.fwhm_ev, rel=1e-6)


def test_fit_zpl_with_sloped_baseline():
    counts = lorentzian(GRID, 1.94, 0.02, 1e5) + 5e4 * (GRID - 1.5) + 1e4
    pk = fit_zpl(Spectrum(energy_ev=GRID, counts=counts), window=(1.85, 2.03))
    assert abs(pk.center_ev - 1.94) < 1e-6
    assert abs(pk.fwhm_ev - 0.02) / 0.02 < 1e-4


# ---------------------------------------------------------------------------
# decomposition and Huang-Rhys


def test_decompose_zero_sideband():
    s = lorentz_spectrum(center=1.94, fwhm=0.015)
    out = decompose_zpl_psb(s, (1.88, 2.0), (1.6, 1.7))
    assert out["i_psb"] == pytest.approx(0.0, abs=out["i_zpl"] * 1e-3)


def test_decompose_recovers_area_ratio():
    counts = (lorentzian(GRID, 1.94, 0.012, 3e5)
              + lorentzian(GRID, 1.70, 0.012, 1e5))
    s = Spectrum(energy_ev=GRID, counts=counts)
    out = decompose_zpl_psb(s, (1.86, 2.02), (1.62, 1.78))
    assert out["i_zpl"] / out["i_psb"] == pytest.approx(3.0, rel=0.02)


def test_decompose_rejects_overlap():
    s = lorentz_spectrum()
    with pytest.raises(ValueError, match="disjoint"):
        decompose_zpl_psb(s, (1.8, 1.95), (1.9, 2.0))


def test_huang_rhys_examples():
    assert huang_rhys(1.0, 0.0) == 0.0
    frac = np.exp(-0.5)
    assert huang_rhys(frac, 1.0 - frac) == pytest.approx(0.5, abs=1e-12)
    assert huang_rhys(2.0, 2.0) == pytest.approx(np.log(2.0), rel=1e-12)
    with pytest.raises(ValueError):
        huang_rhys(0.0, 1.0)
    with pytest.raises(ValueError):
        huang_rhys(1.0, -0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.0, max_value=20.0),
       st.floats(min_value=1e-6, max_value=1e6))
def test_huang_rhys_round_trip(s_hr, total):
    i_zpl = np.exp(-s_hr) * total
    i_psb = total - i_zpl
    assert huang_rhys(i_zpl, i_psb) == pytest.approx(s_hr, abs=1e-12, rel=1e-12)


# ---------------------------------------------------------------------------
# thermal series


def test_series_phase_ordering_enforced():
    s = lorentz_spectrum()
    heat = ThermalEntry(temperature_k=300.0, phase="heating", spectrum=s)
    cool = ThermalEntry(temperature_k=300.0, phase="cooling", spectrum=s)
    ThermalSeries(entries=(heat, cool))
    with pytest.raises(ValueError, match="heat-then-cool"):
        ThermalSeries(entries=(cool, heat))


def test_entry_temperature_bounds():
    s = lorentz_spectrum()
    with pytest.raises(ValueError, match="300"):
        ThermalEntry(temperature_k=250.0, phase="heating", spectrum=s)


def test_analyze_emits_one_row_per_entry():
    series = synthetic_thermal_cycle(CycleParams(), seed=1)
    analysis = analyze_series(series)
    assert len(analysis.rows) == len(series)
    keys = {(r["temperature_k"], r["phase"]) for r in analysis.rows}
    assert len(keys) == len(series)


def test_corrected_g2_present_iff_rates_present():
    base = synthetic_thermal_cycle(CycleParams(), seed=2)
    stripped = []
    for i, e in enumerate(base.entries):
        if i % 2 == 0:
            stripped.append(ThermalEntry(
                temperature_k=e.temperature_k, phase=e.phase,
                spectrum=e.spectrum, g2_0=e.g2_0, s_rate=None, b_rate=None))
        else:
            stripped.append(e)
    analysis = analyze_series(ThermalSeries(entries=tuple(stripped)))
    for i, row in enumerate(analysis.rows):
        if i % 2 == 0:
            assert row["g2_0_corrected"] is None
        else:
            assert row["g2_0_corrected"] is not None


def test_temperature_independent_series_flags_unconstrained():
    grid = GRID
    entries = tuple(
        ThermalEntry(
            temperature_k=T, phase="heating",
            spectrum=synthetic_spectrum(grid, 1.94, 0.015, 1e5),
        )
        for T in np.arange(300.0, 801.0, 100.0)
    )
    analysis = analyze_series(ThermalSeries(entries=entries))
    assert analysis.quench_fit is not None
    assert "E unconstrained" in analysis.quench_fit.flags


def test_heating_only_series_flagged():
    series = synthetic_thermal_cycle(CycleParams(), seed=4, cooling=False)
    analysis = analyze_series(series)
    assert analysis.reversibility == []
    assert any("heating-only" in w for w in analysis.warnings)


def test_identical_cooling_gives_zero_deltas():
    series = synthetic_thermal_cycle(CycleParams(noise_frac=0.0), seed=5)
    analysis = analyze_series(series)
    assert analysis.reversibility  # matched temperatures exist
    for r in analysis.reversibility:
        assert abs(r["center_delta_mev"]) < 1e-9
        assert abs(r["fwhm_delta_mev"]) < 1e-9


def test_too_few_temperatures_warns_but_emits_rows():
    s300 = synthetic_spectrum(GRID, 1.94, 0.015, 1e5)
    s400 = synthetic_spectrum(GRID, 1.93, 0.020, 9e4)
    series = ThermalSeries(entries=(
        ThermalEntry(temperature_k=300.0, phase="heating", spectrum=s300),
        ThermalEntry(temperature_k=400.0, phase="heating", spectrum=s400),
    ))
    analysis = analyze_series(series)
    assert len(analysis.rows) == 2
    assert analysis.quench_fit is None and analysis.fwhm_fit is None
    assert any("fewer than 3 temperatures" in w for w in analysis.warnings)


def test_full_cycle_recovery_with_noise():
    params = CycleParams(noise_frac=0.03)
    analysis = analyze_series(synthetic_thermal_cycle(params, seed=6))
    assert abs(analysis.total_red_shift_mev - 40.0) < 3.0
    assert abs(analysis.fwhm_fit.params["slope"] - 0.13) / 0.13 < 0.10
    assert abs(analysis.quench_fit.params["e_ev"] - 0.25) / 0.25 < 0.10


# ---------------------------------------------------------------------------
# interchange files


def test_spectrum_csv_round_trip(tmp_path):
    s = lorentz_spectrum(noise=0.05, seed=11)
    path = tmp_path / "spec.csv"
    write_spectrum_csv(path, s)
    back = read_spectrum_csv(path, temperature_k=350.0)
    assert np.array_equal(back.energy_ev, s.energy_ev)
    assert np.array_equal(back.counts, s.counts)
    assert back.temperature_k == 350.0


def test_spectrum_csv_requires_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.5,100\n1.6,200\n")
    with pytest.raises(ValueError, match="header"):
        read_spectrum_csv(path)


def test_manifest_round_trip(tmp_path):
    series = synthetic_thermal_cycle(CycleParams(), seed=12)
    manifest = []
    for i, e in enumerate(series.entries):
        name = f"s{i}.csv"
        write_spectrum_csv(tmp_path / name, e.spectrum)
        manifest.append({
            "temperature_k": e.temperature_k, "phase": e.phase,
            "spectrum_path": name, "g2_0": e.g2_0,
            "s_rate": e.s_rate, "b_rate": e.b_rate,
        })
    mpath = tmp_path / "series.json"
    mpath.write_text(json.dumps(manifest))
    back = load_series_manifest(mpath)
    assert len(back) == len(series)
    assert back.entries[0].temperature_k == 300.0
    assert back.entries[0].g2_0 == pytest.approx(series.entries[0].g2_0)


def test_manifest_missing_spectrum_named(tmp_path):
    mpath = tmp_path / "series.json"
    mpath.write_text(json.dumps([{
        "temperature_k": 300.0, "phase": "heating",
        "spectrum_path": "nope.csv",
    }]))
    with pytest.raises(FileNotFoundError, match="entry 0"):
        load_series_manifest(mpath)
