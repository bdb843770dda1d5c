"""Acceptance suite: every criterion at its stated tolerance, one PASS/FAIL
line per criterion (run with -s to see them inline).

Criterion 7's shallow-quench half (A=19, E=0.17) is known to sit beyond the
information limit of the stated data (see notes on the Cramer-Rao bound in
the project records); it is asserted as stated and expected to fail.
"""

import json
import time

import numpy as np
import pytest

from photonstat import (
    CWExcitation,
    DetectorModel,
    LevelSystem,
    PulsedExcitation,
    QuenchModel,
    SimConfig,
    correct_background,
    fit_g2,
    fit_lifetime,
    fit_linear,
    fit_quenching,
    g2_analytic,
    huang_rhys,
    lifetime_histogram,
    normalize,
    quench_intensity,
    simulate,
    steady_state,
    run_trajectory,
    correlate,
)
from photonstat.cli import main as cli_main
from photonstat.correlate import correlate_arrays
from photonstat.emitter import generator_matrix
from photonstat.fitting import lm_fit, g2_three_level, g2_three_level_jac
from photonstat.spectral import write_spectrum_csv
from photonstat.synth import CycleParams, synthetic_thermal_cycle

from conftest import K_RAD, random_level_system
from oracles import brute_force_correlate, rk4_master_equation

GAMMA = K_RAD  # 1 / 3.5 ns


def report(number, ok, detail):
    print(f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {number}: {detail}"


def poisson_stream(rng, rate_per_s, duration_s):
    """Exponential-gap Poisson arrivals as sorted int64 picoseconds."""
    n_expect = rate_per_s * duration_s
    gaps = rng.exponential(1e12 / rate_per_s, size=int(n_expect * 1.05) + 100)
    times = np.cumsum(gaps)
    times = times[times < duration_s * 1e12]
    return np.unique(times.astype(np.int64))


@pytest.fixture(scope="module")
def pure_emitter_run():
    """30 s two-level emitter (k_rad = 1/3.5 ns), ideal detectors."""
    sys2 = LevelSystem(rates=np.array([[0.0, 5e5], [GAMMA, 0.0]]),
                       radiative=(1, 0))
    cfg = SimConfig(duration_s=30.0, seed=2024,
                    excitation=CWExcitation(pump_rate=5e5))
    t0 = time.time()
    a, b = simulate(sys2, DetectorModel(), cfg)
    hist = normalize(correlate(a, b, 256, 256 * 200))
    fit = fit_g2(hist)
    elapsed = time.time() - t0
    return dict(system=sys2, a=a, b=b, fit=fit, elapsed=elapsed)


def test_criterion_01_correlator_oracle_equivalence():
    rng = np.random.default_rng(1)
    t0 = time.time()
    for trial in range(200):
        na, nb = rng.integers(0, 10_001, size=2)
        span = int(rng.integers(10_000, 10_000_000))
        ta = np.sort(rng.integers(0, span, size=na)).astype(np.int64)
        tb = np.sort(rng.integers(0, span, size=nb)).astype(np.int64)
        bw = int(rng.integers(1, 4096))
        mt = int(rng.integers(bw, bw * 64))
        fast = correlate_arrays(ta, tb, bw, mt)
        slow = brute_force_correlate(ta, tb, bw, mt)
        assert np.array_equal(fast, slow), f"trial {trial}: bw={bw} mt={mt}"
    elapsed = time.time() - t0
    report(1, elapsed < 60.0,
           f"200 random pairs bit-identical to brute force in {elapsed:.1f} s")


def test_criterion_02_poisson_baseline():
    rng = np.random.default_rng(2)
    duration_s = 1.0
    ta = poisson_stream(rng, 1e6, duration_s)
    tb = poisson_stream(rng, 1e6, duration_s)
    assert ta.size >= 10**6 * 0.99 and tb.size >= 10**6 * 0.99
    h = correlate(ta, tb, 512, 512 * 100, duration_ps=int(duration_s * 1e12))
    g2 = normalize(h).g2
    assert np.all(g2 >= 0)
    mean = float(g2.mean())
    report(2, abs(mean - 1.0) < 0.01,
           f"Poisson baseline mean g2 = {mean:.5f} over {g2.size} bins")


def test_criterion_03_antibunching_closed_loop(pure_emitter_run):
    fit = pure_emitter_run["fit"]
    g2_0 = fit.params["g2_0"]
    tau1 = fit.params["tau1_ps"]

    # analytic antibunching time: fit the same model to the analytic curve
    sys2 = pure_emitter_run["system"]
    taus_s = np.linspace(0.0, 5e-8, 200)
    curve = g2_analytic(sys2, taus_s)
    ana = lm_fit(g2_three_level, taus_s * 1e12, curve,
                 [0.0, 0.0, 3000.0, 30_000.0], jac=g2_three_level_jac,
                 param_names=["g2_0", "a", "tau1_ps", "tau2_ps"])
    tau1_analytic = ana.params["tau1_ps"]
    rel = abs(tau1 - tau1_analytic) / tau1_analytic
    elapsed = pure_emitter_run["elapsed"]
    report(3, g2_0 < 0.1 and rel < 0.15 and elapsed < 120.0,
           f"g2(0) = {g2_0:.4f}, tau1 = {tau1:.0f} ps vs analytic "
           f"{tau1_analytic:.0f} ps ({100 * rel:.1f}%), {elapsed:.0f} s")


def test_criterion_04_background_correction_round_trip(pure_emitter_run):
    sys2 = pure_emitter_run["system"]
    p_exc = steady_state(sys2)[1]
    signal_rate = GAMMA * p_exc
    background_rate = signal_rate / 4.0  # rho = S/(S+B) = 0.8
    cfg = SimConfig(duration_s=30.0, seed=2025,
                    excitation=CWExcitation(pump_rate=5e5),
                    background_rate=background_rate)
    a, b = simulate(sys2, DetectorModel(), cfg)
    hist = normalize(correlate(a, b, 256, 256 * 200))
    raw = fit_g2(hist).params["g2_0"]
    corrected = float(correct_background(raw, 0.8))
    pure = pure_emitter_run["fit"].params["g2_0"]
    report(4, abs(raw - 0.36) < 0.05 and abs(corrected - pure) < 0.05,
           f"raw g2(0) = {raw:.3f} (expect 0.36 +- 0.05), corrected = "
           f"{corrected:.3f} vs pure {pure:.3f}")


def test_criterion_05_g2_analytic_oracle():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        sys = random_level_system(rng, n_states=int(rng.integers(3, 5)))
        taus = np.sort(rng.uniform(0.0, 3.0, size=32))
        g2 = g2_analytic(sys, taus)
        G = generator_matrix(sys)
        p0 = np.zeros(sys.n_states)
        p0[sys.radiative[1]] = 1.0
        denom = steady_state(sys)[sys.radiative[0]]
        ref = rk4_master_equation(G, p0, taus, n_steps=30_000)[
            :, sys.radiative[0]] / denom
        worst = max(worst, float(np.max(np.abs(g2 - ref))))
    report(5, worst < 1e-6,
           f"50 systems x 32 delays, worst |g2 - oracle| = {worst:.2e}")


def test_criterion_06_lifetime_recovery():
    sys2 = LevelSystem(rates=np.array([[0.0, 1.0], [GAMMA, 0.0]]),
                       radiative=(1, 0))
    exc = PulsedExcitation(pump_rate_in_pulse=1e10, rep_rate=10e6,
                           pulse_width_ps=100.0)
    cfg = SimConfig(duration_s=0.2, seed=6, excitation=exc)
    a, b, sync = simulate(sys2, DetectorModel(), cfg)
    photons = np.sort(np.concatenate([a.timestamps, b.timestamps]))
    hist = lifetime_histogram(photons, sync.timestamps, bin_width_ps=100)
    fit = fit_lifetime(hist, fit_start_ps=1000.0)
    tau_ns = fit.params["tau_ps"] / 1e3
    report(6, fit.converged and abs(tau_ns - 3.5) / 3.5 < 0.05,
           f"pulsed 10 MHz / 100 ps: fitted tau = {tau_ns:.3f} ns "
           f"(expect 3.5 +- 5%)")


@pytest.mark.parametrize("a_true,e_true", [(206.0, 0.25), (19.0, 0.17)])
def test_criterion_07_quenching_fit_recovery(a_true, e_true):
    q = QuenchModel(i0=1.0, a=a_true, e_ev=e_true)
    T = np.arange(300.0, 801.0, 100.0)
    clean = quench_intensity(q, T)
    ok = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        noisy = clean * (1.0 + 0.03 * rng.standard_normal(T.size))
        fit = fit_quenching(T, noisy)
        ok += abs(fit.params["e_ev"] - e_true) / e_true <= 0.10
    report(7, ok >= 90,
           f"A={a_true:.0f}, E={e_true} eV: E within 10% in {ok}/100 seeds "
           f"(need >= 90)")


def test_criterion_08_thermal_series_end_to_end(tmp_path):
    params = CycleParams(noise_frac=0.02, g2_0_intrinsic=0.0, rho=0.9)
    series = synthetic_thermal_cycle(params, seed=8)
    manifest = []
    for i, e in enumerate(series.entries):
        name = f"spec_{i}.csv"
        write_spectrum_csv(tmp_path / name, e.spectrum)
        manifest.append({"temperature_k": e.temperature_k, "phase": e.phase,
                         "spectrum_path": name, "g2_0": e.g2_0,
                         "s_rate": e.s_rate, "b_rate": e.b_rate})
    mpath = tmp_path / "series.json"
    mpath.write_text(json.dumps(manifest))
    out = tmp_path / "report"
    assert cli_main(["report", "--manifest", str(mpath), "--out", str(out)]) == 0

    summary = json.loads((out / "summary.json").read_text())
    shift_ok = abs(summary["total_red_shift_mev"] - 40.0) < 3.0
    slope_ok = abs(summary["slope_mev_per_k"] - 0.13) / 0.13 < 0.10
    e_ok = abs(summary["e_ev"] - 0.25) / 0.25 < 0.10

    rev_rows = (out / "reversibility.csv").read_text().splitlines()[1:]
    deltas = [abs(float(r.split(",")[1])) for r in rev_rows]
    rev_ok = len(deltas) > 0 and max(deltas) < 2.0

    # photon purity constant across the cycle: raw g2(0) vs T slope
    # consistent with zero at 3 sigma
    g2_rows = (out / "g2_vs_T.csv").read_text().splitlines()[1:]
    temps = np.array([float(r.split(",")[0]) for r in g2_rows])
    g2_raw = np.array([float(r.split(",")[2]) for r in g2_rows])
    trend = fit_linear(temps, g2_raw)
    slope_sigma = trend.uncertainties()["slope"]
    purity_ok = abs(trend.params["slope"]) <= 3.0 * slope_sigma

    report(8, shift_ok and slope_ok and e_ok and rev_ok and purity_ok,
           f"shift {summary['total_red_shift_mev']:.1f} meV, slope "
           f"{summary['slope_mev_per_k']:.3f} meV/K, E {summary['e_ev']:.3f} "
           f"eV, max reversibility delta {max(deltas):.2f} meV, g2(0) trend "
           f"{trend.params['slope']:.1e} +- {slope_sigma:.1e} per K")


def test_criterion_09_huang_rhys_round_trip():
    errs = []
    for s_true in (0.5, 0.3):
        frac = np.exp(-s_true)
        total = 123.456
        s = huang_rhys(frac * total, (1.0 - frac) * total)
        errs.append(abs(s - s_true))
    report(9, max(errs) <= 1e-12,
           f"S recovered to {max(errs):.1e} (need 1e-12) for S=0.5 and S=0.3")


def test_criterion_10_performance_gate():
    # Non-blocking benchmark per the acceptance wording: timings are
    # reported, not asserted.
    rng = np.random.default_rng(10)
    duration_s = 10.0
    ta = poisson_stream(rng, 1e6, duration_s)
    tb = poisson_stream(rng, 1e6, duration_s)
    correlate_arrays(ta[:1000], tb[:1000], 256, 1_000_000)  # jit warm-up
    t0 = time.time()
    correlate_arrays(ta, tb, 256, 1_000_000)
    t_corr = time.time() - t0

    sys2 = LevelSystem(rates=np.array([[0.0, GAMMA], [GAMMA, 0.0]]),
                       radiative=(1, 0))
    jump_rate = GAMMA  # pump = decay: one jump per 1/Gamma on average
    duration = 1e8 / jump_rate
    t0 = time.time()
    _, _, n_jumps = run_trajectory(sys2, CWExcitation(pump_rate=GAMMA),
                                   duration, np.random.default_rng(10))
    t_sim = time.time() - t0
    ok_corr = t_corr < 10.0
    ok_sim = t_sim < 60.0 and n_jumps > 5e7
    print(f"ACCEPTANCE 10: {'PASS' if ok_corr and ok_sim else 'FAIL'} "
          f"(non-blocking) - correlate {ta.size / 1e6:.1f}M tags/channel, "
          f"+-1 us: {t_corr:.2f} s (budget 10 s); {n_jumps / 1e6:.0f}M "
          f"trajectory jumps: {t_sim:.2f} s (budget 60 s)")
